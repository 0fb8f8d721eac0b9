//! First-fit DDR allocation with liveness-based reuse. Parameters are
//! placed first and never freed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{NodeId, OpKind, TensorId, XGraph};

pub const DDR_ALIGN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdrRegion {
    pub base: u32,
    pub len: u32,
    pub persistent: bool,
    /// Inclusive step range during which the region is live.
    pub live: (usize, usize),
}

impl DdrRegion {
    pub fn end(&self) -> usize {
        self.base as usize + self.len as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdrPlan {
    pub tensors: BTreeMap<TensorId, DdrRegion>,
    pub params: BTreeMap<String, DdrRegion>,
    pub total_bytes: usize,
}

impl DdrPlan {
    pub fn tensor(&self, t: TensorId) -> Result<&DdrRegion> {
        self.tensors.get(&t).ok_or(Error::PlanMiss(t))
    }

    pub fn param(&self, name: &str) -> Result<&DdrRegion> {
        self.params
            .get(name)
            .ok_or_else(|| Error::DanglingRef(format!("parameter `{name}` not in DDR plan")))
    }

    /// Pairs of simultaneously live regions whose byte ranges intersect.
    pub fn overlaps(&self) -> Vec<(String, String)> {
        let all: Vec<(String, &DdrRegion)> = self
            .params
            .iter()
            .map(|(k, r)| (format!("param:{k}"), r))
            .chain(self.tensors.iter().map(|(t, r)| (format!("tensor:{t}"), r)))
            .collect();
        let mut out = vec![];
        for (i, (na, a)) in all.iter().enumerate() {
            for (nb, b) in &all[i + 1..] {
                let time = a.persistent || b.persistent || (a.live.0 <= b.live.1 && b.live.0 <= a.live.1);
                let space = (a.base as usize) < b.end() && (b.base as usize) < a.end();
                if time && space && a.len > 0 && b.len > 0 {
                    out.push((na.clone(), nb.clone()));
                }
            }
        }
        out
    }
}

fn align(v: usize) -> usize {
    v.div_ceil(DDR_ALIGN) * DDR_ALIGN
}

/// Lowest-address gap of `len` bytes among `busy` intervals above `floor`.
fn first_fit(busy: &BTreeSet<(usize, usize)>, floor: usize, len: usize) -> usize {
    let mut cursor = floor;
    for &(lo, hi) in busy {
        if hi <= cursor {
            continue;
        }
        if lo >= cursor + len {
            break;
        }
        cursor = align(hi.max(cursor));
    }
    cursor
}

/// Allocates every DDR-resident tensor and parameter. `steps` lists groups
/// in execution order; tensors produced and consumed inside one group and
/// never read elsewhere stay on chip and get no region.
pub fn allocate_ddr(g: &XGraph, steps: &[Vec<NodeId>]) -> Result<DdrPlan> {
    let mut step_of: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (i, s) in steps.iter().enumerate() {
        for &m in s {
            step_of.insert(m, i + 1);
        }
    }
    let last_step = steps.len() + 1;
    let results: BTreeSet<TensorId> = g.result_tensors().into_iter().collect();

    // parameters used by lowered vertices
    let mut plan = DdrPlan::default();
    let mut cursor = 0usize;
    let used: BTreeSet<&String> = steps
        .iter()
        .flatten()
        .flat_map(|m| g.node(*m).params.iter())
        .collect();
    for name in used {
        let len = g.params[name].data.len();
        plan.params.insert(
            name.clone(),
            DdrRegion { base: cursor as u32, len: len as u32, persistent: true, live: (0, last_step) },
        );
        cursor = align(cursor + len);
    }
    let floor = cursor;

    // tensor lifetimes in steps; inputs are live from step 0
    let mut tensors: Vec<(TensorId, usize, usize, usize)> = vec![];
    let mut tids: BTreeSet<TensorId> = g.shared.keys().copied().collect();
    for n in g.nodes.values() {
        if n.kind == OpKind::Input || step_of.contains_key(&n.id) {
            tids.insert(n.output_tensor());
        }
    }
    for t in tids {
        let def = g
            .producers(t)
            .iter()
            .map(|p| if g.node(*p).kind == OpKind::Input { 0 } else { step_of.get(p).copied().unwrap_or(0) })
            .min()
            .unwrap_or(0);
        let producer_groups: BTreeSet<usize> = g.producers(t).iter().filter_map(|p| step_of.get(p).copied()).collect();
        let cons = g.consumers(t);
        let consumer_groups: BTreeSet<usize> = cons.iter().filter_map(|c| step_of.get(c).copied()).collect();
        let internal = !results.contains(&t)
            && producer_groups.len() == 1
            && !cons.is_empty()
            && cons.iter().all(|c| step_of.contains_key(c))
            && consumer_groups == producer_groups
            && !g.producers(t).iter().any(|p| g.node(*p).kind == OpKind::Input);
        if internal {
            continue;
        }
        let mut last = consumer_groups.iter().copied().max().unwrap_or(def).max(def);
        if results.contains(&t) || cons.iter().any(|c| !step_of.contains_key(c)) {
            last = last_step;
        }
        tensors.push((t, g.tensor_shape(t).elements(), def, last));
    }
    tensors.sort_by_key(|&(t, _, def, _)| (def, t));

    let mut busy: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut live: Vec<(usize, (usize, usize))> = vec![];
    let mut total = floor;
    for (t, len, def, last) in tensors {
        // free regions whose last use precedes this definition
        live.retain(|&(end_step, iv)| {
            if end_step < def {
                busy.remove(&iv);
                false
            } else {
                true
            }
        });
        let base = first_fit(&busy, floor, len);
        let iv = (base, base + len);
        busy.insert(iv);
        live.push((last, iv));
        total = total.max(align(base + len));
        plan.tensors.insert(
            t,
            DdrRegion { base: base as u32, len: len as u32, persistent: false, live: (def, last) },
        );
    }
    plan.total_bytes = total;
    if total > u32::MAX as usize {
        return Err(Error::BufferOverflow { buffer: "DDR".into(), end: total, capacity: u32::MAX as usize });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{OpAttrs, TensorShape};

    fn chain() -> (XGraph, Vec<NodeId>) {
        let mut g = XGraph::new("c");
        let x = g.add_input("x", TensorShape::new(4, 4, 4));
        let a = g.add("a", OpKind::ReLU, OpAttrs::default(), &[x], &[]).unwrap();
        let b = g.add("b", OpKind::ReLU, OpAttrs::default(), &[a], &[]).unwrap();
        let c = g.add("c", OpKind::ReLU, OpAttrs::default(), &[b], &[]).unwrap();
        let d = g.add("d", OpKind::ReLU, OpAttrs::default(), &[c], &[]).unwrap();
        g.add_missing_outputs();
        (g, vec![a, b, c, d])
    }

    #[test]
    fn chain_reuses_dead_regions() {
        let (g, ids) = chain();
        let steps: Vec<Vec<NodeId>> = ids.iter().map(|&i| vec![i]).collect();
        let p = allocate_ddr(&g, &steps).unwrap();
        assert_eq!(p.tensors[&ids[0]].base, p.tensors[&ids[2]].base);
        assert!(p.overlaps().is_empty());
    }

    #[test]
    fn fused_intermediates_get_no_region() {
        let (g, ids) = chain();
        let p = allocate_ddr(&g, &[vec![ids[0], ids[1]], vec![ids[2]], vec![ids[3]]]).unwrap();
        assert!(!p.tensors.contains_key(&ids[0]));
        assert!(p.tensors.contains_key(&ids[1]));
    }
}
