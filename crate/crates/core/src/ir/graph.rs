use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::shape::infer_shape;
use super::types::{OpAttrs, OpKind, TensorShape};
use crate::error::{Error, Result};

pub type NodeId = u32;
/// Tensors are named by their producing node, or by the id of the concat
/// they were merged into.
pub type TensorId = NodeId;

/// Where a producer writes its output when it was merged into a shared
/// concat destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SaveSlot {
    pub tensor: TensorId,
    pub channel_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XNode {
    pub id: NodeId,
    pub name: String,
    pub kind: OpKind,
    pub attrs: OpAttrs,
    pub inputs: Vec<TensorId>,
    pub params: Vec<String>,
    pub output_shape: TensorShape,
    pub save: Option<SaveSlot>,
}

impl XNode {
    pub fn output_tensor(&self) -> TensorId {
        self.save.map_or(self.id, |s| s.tensor)
    }
}

/// A tensor with several producers each writing a channel slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedTensor {
    pub id: TensorId,
    pub name: String,
    pub shape: TensorShape,
    pub producers: Vec<NodeId>,
}

/// Coarse-grained computation graph. Feature maps are NHWC, weights OWHC.
#[derive(Debug, Clone, PartialEq)]
pub struct XGraph {
    pub name: String,
    pub nodes: BTreeMap<NodeId, XNode>,
    pub shared: BTreeMap<TensorId, SharedTensor>,
    pub params: ParamStore,
    pub bn_eps: f32,
}

impl XGraph {
    pub fn new(name: impl Into<String>) -> Self {
        XGraph {
            name: name.into(),
            nodes: BTreeMap::new(),
            shared: BTreeMap::new(),
            params: ParamStore::new(),
            bn_eps: 1e-5,
        }
    }

    pub fn node(&self, id: NodeId) -> &XNode {
        &self.nodes[&id]
    }

    pub fn next_id(&self) -> NodeId {
        let a = self.nodes.keys().next_back().map_or(0, |k| k + 1);
        let b = self.shared.keys().next_back().map_or(0, |k| k + 1);
        a.max(b)
    }

    /// Appends a node, inferring its output shape.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        kind: OpKind,
        attrs: OpAttrs,
        inputs: &[TensorId],
        params: &[&str],
    ) -> Result<NodeId> {
        let id = self.next_id();
        let name = name.into();
        let in_shapes: Vec<_> = inputs.iter().map(|&t| self.tensor_shape(t)).collect();
        let output_shape = infer_shape(kind, &attrs, &in_shapes)
            .map_err(|e| Error::Schema(format!("node `{name}`: {e}")))?;
        self.nodes.insert(
            id,
            XNode {
                id,
                name,
                kind,
                attrs,
                inputs: inputs.to_vec(),
                params: params.iter().map(|s| s.to_string()).collect(),
                output_shape,
                save: None,
            },
        );
        Ok(id)
    }

    pub fn add_input(&mut self, name: impl Into<String>, shape: TensorShape) -> NodeId {
        let id = self.next_id();
        self.nodes.insert(
            id,
            XNode {
                id,
                name: name.into(),
                kind: OpKind::Input,
                attrs: OpAttrs::default(),
                inputs: vec![],
                params: vec![],
                output_shape: shape,
                save: None,
            },
        );
        id
    }

    /// Adds an Output sentinel to every non-Output vertex without consumers.
    pub fn add_missing_outputs(&mut self) {
        let sinks: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.kind != OpKind::Output && self.consumers(n.output_tensor()).is_empty())
            .map(|n| n.output_tensor())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for t in sinks {
            let name = format!("{}_out", self.tensor_name(t));
            self.add(name, OpKind::Output, OpAttrs::default(), &[t], &[])
                .expect("output sentinel shape");
        }
    }

    pub fn tensor_shape(&self, t: TensorId) -> TensorShape {
        if let Some(s) = self.shared.get(&t) {
            s.shape
        } else {
            self.nodes[&t].output_shape
        }
    }

    pub fn tensor_name(&self, t: TensorId) -> &str {
        if let Some(s) = self.shared.get(&t) {
            &s.name
        } else {
            &self.nodes[&t].name
        }
    }

    pub fn tensor_exists(&self, t: TensorId) -> bool {
        self.shared.contains_key(&t) || self.nodes.get(&t).is_some_and(|n| n.save.is_none())
    }

    pub fn producers(&self, t: TensorId) -> Vec<NodeId> {
        if let Some(s) = self.shared.get(&t) {
            s.producers.clone()
        } else {
            vec![t]
        }
    }

    /// Distinct consumer vertices of tensor `t`, ascending.
    pub fn consumers(&self, t: TensorId) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.inputs.contains(&t))
            .map(|n| n.id)
            .collect()
    }

    /// Distinct producer vertices feeding `id`, ascending.
    pub fn preds(&self, id: NodeId) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.nodes[&id]
            .inputs
            .iter()
            .flat_map(|&t| self.producers(t))
            .collect();
        set.into_iter().collect()
    }

    pub fn succs(&self, id: NodeId) -> Vec<NodeId> {
        self.consumers(self.nodes[&id].output_tensor())
    }

    /// Dataflow edges `(producer, consumer)`, deduplicated, ascending.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let set: BTreeSet<(NodeId, NodeId)> = self
            .nodes
            .keys()
            .flat_map(|&c| self.preds(c).into_iter().map(move |p| (p, c)))
            .collect();
        set.into_iter().collect()
    }

    /// True when `consumer` reads the whole, unshared output of `producer`.
    pub fn is_exclusive_edge(&self, producer: NodeId, consumer: NodeId) -> bool {
        let p = &self.nodes[&producer];
        p.save.is_none() && self.nodes[&consumer].inputs.contains(&producer)
    }

    pub fn in_degree(&self, id: NodeId) -> usize {
        self.preds(id).len()
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.succs(id).len()
    }

    /// Deterministic topological order; ties broken by ascending id.
    pub fn topo_order(&self) -> Result<Vec<NodeId>> {
        let mut indeg: BTreeMap<NodeId, usize> =
            self.nodes.keys().map(|&id| (id, self.in_degree(id))).collect();
        let mut ready: BinaryHeap<Reverse<NodeId>> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| Reverse(id))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for s in self.succs(id) {
                let d = indeg.get_mut(&s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(s));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indeg
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&id, _)| id)
                .unwrap_or_default();
            return Err(Error::Cycle(stuck));
        }
        Ok(order)
    }

    pub fn computation_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind.is_computation())
            .map(|n| n.id)
            .collect()
    }

    /// Tensors read by Output sentinels or host-executed vertices; these are
    /// the results the accelerator must leave in DDR.
    pub fn result_tensors(&self) -> Vec<TensorId> {
        let set: BTreeSet<TensorId> = self
            .nodes
            .values()
            .filter(|n| n.kind == OpKind::Output || n.kind.is_host())
            .flat_map(|n| n.inputs.iter().copied())
            .filter(|&t| {
                self.producers(t)
                    .iter()
                    .all(|&p| !self.nodes[&p].kind.is_host())
            })
            .collect();
        set.into_iter().collect()
    }

    pub fn input_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind == OpKind::Input)
            .map(|n| n.id)
            .collect()
    }

    /// Recomputes every output shape and checks structural invariants.
    pub fn validate(&self) -> Result<()> {
        let order = self.topo_order()?;
        for &id in &order {
            let n = &self.nodes[&id];
            for &t in &n.inputs {
                if !self.tensor_exists(t) {
                    return Err(Error::Schema(format!(
                        "node `{}` reads tensor {t} which does not exist",
                        n.name
                    )));
                }
            }
            if n.kind == OpKind::Input {
                if !n.output_shape.is_valid() {
                    return Err(Error::Schema(format!(
                        "input `{}` has invalid shape {}",
                        n.name, n.output_shape
                    )));
                }
                continue;
            }
            let in_shapes: Vec<_> = n.inputs.iter().map(|&t| self.tensor_shape(t)).collect();
            let computed = infer_shape(n.kind, &n.attrs, &in_shapes)
                .map_err(|e| Error::Schema(format!("node `{}`: {e}", n.name)))?;
            if computed != n.output_shape {
                return Err(Error::ShapeMismatch {
                    node: n.name.clone(),
                    declared: n.output_shape.to_string(),
                    computed: computed.to_string(),
                });
            }
            if let Some(slot) = n.save {
                let dst = self.shared.get(&slot.tensor).ok_or_else(|| {
                    Error::Schema(format!("node `{}` saves into unknown tensor", n.name))
                })?;
                if slot.channel_offset + n.output_shape.c > dst.shape.c
                    || dst.shape.h != n.output_shape.h
                    || dst.shape.w != n.output_shape.w
                {
                    return Err(Error::Schema(format!(
                        "node `{}` save slot escapes its destination",
                        n.name
                    )));
                }
            }
        }
        for s in self.shared.values() {
            let covered: usize = s.producers.iter().map(|p| self.nodes[p].output_shape.c).sum();
            if covered != s.shape.c {
                return Err(Error::Schema(format!(
                    "shared tensor `{}` is not fully covered by its producers",
                    s.name
                )));
            }
        }
        if !self.is_connected() {
            return Err(Error::Schema("graph has more than one connected component".into()));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let Some(&start) = self.nodes.keys().next() else {
            return true;
        };
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (a, b) in self.edges() {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in adj.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        seen.len() == self.nodes.len()
    }

    /// Removes a single-input vertex, rewiring its consumers to its input.
    pub(crate) fn bypass(&mut self, id: NodeId) {
        let node = self.nodes.remove(&id).expect("bypass of unknown node");
        let src = node.inputs[0];
        for n in self.nodes.values_mut() {
            for t in n.inputs.iter_mut() {
                if *t == id {
                    *t = src;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu() -> OpAttrs {
        OpAttrs::default()
    }

    #[test]
    fn chain_order() {
        let mut g = XGraph::new("chain");
        let a = g.add_input("a", TensorShape::new(2, 2, 1));
        let b = g.add("b", OpKind::ReLU, relu(), &[a], &[]).unwrap();
        let c = g.add("c", OpKind::ReLU, relu(), &[b], &[]).unwrap();
        assert_eq!(g.topo_order().unwrap(), vec![a, b, c]);
    }

    #[test]
    fn diamond_ties_break_by_id() {
        let mut g = XGraph::new("diamond");
        let a = g.add_input("a", TensorShape::new(2, 2, 1));
        let b = g.add("b", OpKind::ReLU, relu(), &[a], &[]).unwrap();
        let c = g.add("c", OpKind::ReLU, relu(), &[a], &[]).unwrap();
        let d = g
            .add("d", OpKind::EltwiseAdd, relu(), &[c, b], &[])
            .unwrap();
        assert_eq!(g.topo_order().unwrap(), vec![a, b, c, d]);
        assert_eq!(g.in_degree(d), 2);
        assert_eq!(g.out_degree(a), 2);
    }

    #[test]
    fn cycle_is_reported() {
        let mut g = XGraph::new("cyc");
        let a = g.add_input("a", TensorShape::new(2, 2, 1));
        let b = g.add("b", OpKind::ReLU, relu(), &[a], &[]).unwrap();
        let c = g.add("c", OpKind::ReLU, relu(), &[b], &[]).unwrap();
        g.nodes.get_mut(&b).unwrap().inputs = vec![c];
        assert!(matches!(g.topo_order(), Err(Error::Cycle(_))));
    }

    #[test]
    fn random_dag_order_respects_edges() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut g = XGraph::new("rand");
        let mut ids = vec![g.add_input("in", TensorShape::new(2, 2, 1))];
        while ids.len() < 50 {
            let a = ids[rng.gen_range(0..ids.len())];
            let id = if rng.gen_bool(0.3) && ids.len() > 1 {
                let b = ids[rng.gen_range(0..ids.len())];
                if a == b {
                    continue;
                }
                g.add(format!("n{}", ids.len()), OpKind::EltwiseAdd, relu(), &[a, b], &[])
                    .unwrap()
            } else {
                g.add(format!("n{}", ids.len()), OpKind::ReLU, relu(), &[a], &[])
                    .unwrap()
            };
            ids.push(id);
        }
        let order = g.topo_order().unwrap();
        let pos: BTreeMap<_, _> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        assert_eq!(order.len(), 50);
        for (p, c) in g.edges() {
            assert!(pos[&p] < pos[&c], "edge {p}->{c} goes backward");
        }
    }
}
