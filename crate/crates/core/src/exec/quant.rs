//! Calibration: per-tensor radices chosen from a float reference run, and
//! quantized parameters and inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fixed::{choose_radix, quantize_with};
use super::float::run_float;
use crate::error::Result;
use crate::ir::{NodeId, OpKind, TensorId, XGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QParam {
    pub radix: i8,
    pub data: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantModel {
    pub radix: BTreeMap<TensorId, i8>,
    pub params: BTreeMap<String, QParam>,
    pub inputs: BTreeMap<NodeId, Vec<i8>>,
}

/// Kinds whose output reuses the input's radix: pure data movement, or
/// monotone ops that never need requantization.
pub fn keeps_radix(kind: OpKind) -> bool {
    matches!(
        kind,
        OpKind::Pool(_) | OpKind::ReLU | OpKind::Upsample | OpKind::Reorg | OpKind::Concat
    )
}

fn find(parent: &mut BTreeMap<TensorId, TensorId>, t: TensorId) -> TensorId {
    let p = parent[&t];
    if p == t {
        return t;
    }
    let r = find(parent, p);
    parent.insert(t, r);
    r
}

/// Tensors computed on the accelerator: everything except host outputs and
/// what depends on them.
pub fn accelerated_tensors(g: &XGraph) -> Vec<TensorId> {
    let mut host_tainted = std::collections::BTreeSet::new();
    let mut out = std::collections::BTreeSet::new();
    for id in g.topo_order().expect("validated graph") {
        let n = g.node(id);
        if n.kind.is_host() || n.inputs.iter().any(|t| host_tainted.contains(t)) {
            host_tainted.insert(n.output_tensor());
            continue;
        }
        if n.kind != OpKind::Output {
            out.insert(n.output_tensor());
        }
    }
    out.into_iter().collect()
}

/// Calibrates radices from a float run on `inputs` and quantizes params
/// and inputs accordingly.
pub fn calibrate(g: &XGraph, inputs: &BTreeMap<NodeId, Vec<f32>>) -> Result<QuantModel> {
    let vals = run_float(g, inputs)?;
    let tensors = accelerated_tensors(g);
    let mut parent: BTreeMap<TensorId, TensorId> = tensors.iter().map(|&t| (t, t)).collect();
    for n in g.nodes.values() {
        if !keeps_radix(n.kind) || !parent.contains_key(&n.output_tensor()) {
            continue;
        }
        for &t in &n.inputs {
            let (a, b) = (find(&mut parent, t), find(&mut parent, n.output_tensor()));
            parent.insert(a.max(b), a.min(b));
        }
    }
    let mut class_radix: BTreeMap<TensorId, i8> = BTreeMap::new();
    for &t in &tensors {
        let r = choose_radix(&vals[&t]);
        let root = find(&mut parent, t);
        let e = class_radix.entry(root).or_insert(r);
        *e = (*e).min(r);
    }
    let radix: BTreeMap<TensorId, i8> = tensors
        .iter()
        .map(|&t| (t, class_radix[&find(&mut parent, t)]))
        .collect();
    let params = g
        .params
        .iter()
        .map(|(k, p)| {
            let r = choose_radix(&p.data);
            (k.clone(), QParam { radix: r, data: quantize_with(&p.data, r) })
        })
        .collect();
    let inputs = inputs
        .iter()
        .map(|(&id, v)| (id, quantize_with(v, radix[&id])))
        .collect();
    Ok(QuantModel { radix, params, inputs })
}
