//! Normalization passes: intrinsic fusion (BatchNorm/Scale folding),
//! point-wise fusion (ReLU absorption) and dimension-transform pruning.

use super::graph::{NodeId, SaveSlot, SharedTensor, XGraph};
use super::params::ParamTensor;
use super::shape::infer_shape;
use super::types::OpKind;
use crate::error::{Error, Result};

/// Per-output-channel affine map `y = x * mul + add` applied after a conv.
fn fold_affine(g: &mut XGraph, conv: NodeId, mul: &[f32], add: &[f32]) {
    let node = g.nodes[&conv].clone();
    let w = &g.params[&node.params[0]];
    let oc = w.shape[0];
    let per = w.data.len() / oc;
    let mut wd = w.data.clone();
    for (o, chunk) in wd.chunks_mut(per).enumerate() {
        chunk.iter_mut().for_each(|v| *v *= mul[o]);
    }
    let wshape = w.shape.clone();
    let bias: Vec<f32> = match node.params.get(1) {
        Some(b) => g.params[b].data.clone(),
        None => vec![0.0; oc],
    };
    let bd: Vec<f32> = (0..oc).map(|o| bias[o] * mul[o] + add[o]).collect();
    let wname = format!("{}.w.folded", node.name);
    let bname = format!("{}.b.folded", node.name);
    g.params.insert(wname.clone(), ParamTensor::new(wshape, wd));
    g.params.insert(bname.clone(), ParamTensor::new(vec![oc], bd));
    g.nodes.get_mut(&conv).unwrap().params = vec![wname, bname];
    prune_unused_params(g);
}

fn prune_unused_params(g: &mut XGraph) {
    let used: std::collections::BTreeSet<String> =
        g.nodes.values().flat_map(|n| n.params.iter().cloned()).collect();
    g.params.retain(|k, _| used.contains(k));
}

/// Returns the single conv-family producer `n` may be folded into.
fn foldable_producer(g: &XGraph, n: NodeId) -> std::result::Result<NodeId, String> {
    let node = &g.nodes[&n];
    let t = node.inputs[0];
    let Some(p) = g.nodes.get(&t).filter(|p| p.save.is_none()) else {
        return Err("input is a shared tensor".into());
    };
    if !p.kind.is_conv_family() {
        return Err(format!("producer `{}` is {}, not a convolution", p.name, p.kind));
    }
    if p.attrs.relu {
        return Err(format!("producer `{}` already applies a nonlinearity", p.name));
    }
    if g.out_degree(p.id) != 1 {
        return Err(format!("producer `{}` has other consumers", p.name));
    }
    Ok(p.id)
}

/// Folds every BatchNorm and Scale into its producing convolution.
/// Vertices that cannot be folded stay in place and are reported.
pub fn fold_bn_scale(g: &XGraph) -> (XGraph, Vec<Error>) {
    let mut g = g.clone();
    let mut reported = vec![];
    loop {
        let mut changed = false;
        let order = g.topo_order().expect("validated graph");
        for id in order {
            let Some(node) = g.nodes.get(&id).cloned() else { continue };
            if !matches!(node.kind, OpKind::BatchNorm | OpKind::Scale) {
                continue;
            }
            match foldable_producer(&g, id) {
                Ok(conv) => {
                    let data = |i: usize| g.params[&node.params[i]].data.clone();
                    let (mul, add) = if node.kind == OpKind::BatchNorm {
                        let (mean, var) = (data(0), data(1));
                        let c = mean.len();
                        let (gamma, beta) = if node.params.len() == 4 {
                            (data(2), data(3))
                        } else {
                            (vec![1.0; c], vec![0.0; c])
                        };
                        let mul: Vec<f32> = (0..c)
                            .map(|i| gamma[i] / (var[i] + g.bn_eps).sqrt())
                            .collect();
                        let add = (0..c).map(|i| beta[i] - mean[i] * mul[i]).collect();
                        (mul, add)
                    } else {
                        let gamma = data(0);
                        let beta = if node.params.len() == 2 {
                            data(1)
                        } else {
                            vec![0.0; gamma.len()]
                        };
                        (gamma, beta)
                    };
                    g.bypass(id);
                    fold_affine(&mut g, conv, &mul, &add);
                    changed = true;
                }
                Err(reason) => {
                    if !reported.iter().any(|e| matches!(e, Error::UnfoldableVertex { id: r, .. } if *r == id)) {
                        reported.push(Error::UnfoldableVertex {
                            id,
                            kind: node.kind.to_string(),
                            reason,
                        });
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    reported.retain(|e| matches!(e, Error::UnfoldableVertex { id, .. } if g.nodes.contains_key(id)));
    (g, reported)
}

/// Absorbs ReLU vertices into the `nonlinear` flag of their producer.
pub fn fuse_pointwise(g: &XGraph) -> XGraph {
    let mut g = g.clone();
    loop {
        let order = g.topo_order().expect("validated graph");
        let target = order.into_iter().find(|&id| {
            let n = &g.nodes[&id];
            if n.kind != OpKind::ReLU {
                return false;
            }
            let Some(p) = g.nodes.get(&n.inputs[0]).filter(|p| p.save.is_none()) else {
                return false;
            };
            let absorbs = p.kind.is_conv_family() || p.kind == OpKind::EltwiseAdd;
            absorbs && g.out_degree(p.id) == 1
        });
        let Some(relu) = target else { return g };
        let p = g.nodes[&relu].inputs[0];
        g.nodes.get_mut(&p).unwrap().attrs.relu = true;
        g.bypass(relu);
    }
}

fn refresh_output_shapes(g: &mut XGraph) {
    let ids: Vec<NodeId> = g
        .nodes
        .values()
        .filter(|n| n.kind == OpKind::Output)
        .map(|n| n.id)
        .collect();
    for id in ids {
        let t = g.nodes[&id].inputs[0];
        let s = g.tensor_shape(t);
        g.nodes.get_mut(&id).unwrap().output_shape = s;
    }
}

fn concat_absorbable(g: &XGraph, id: NodeId) -> bool {
    let n = &g.nodes[&id];
    let mut seen = std::collections::BTreeSet::new();
    n.inputs.iter().all(|&t| {
        let Some(p) = g.nodes.get(&t) else { return false };
        p.save.is_none()
            && p.kind.is_computation()
            && p.kind != OpKind::Concat
            && seen.insert(t)
            && g.consumers(t) == vec![id]
    })
}

/// Removes Flatten vertices and merges Concat vertices into strided saves of
/// their producers. Concats that cannot be merged remain as explicit copy
/// vertices; Reorg always remains for MISC lowering.
pub fn prune_dim_transforms(g: &XGraph) -> Result<XGraph> {
    let mut g = g.clone();
    let order = g.topo_order()?;
    for id in order {
        let Some(node) = g.nodes.get(&id).cloned() else { continue };
        match node.kind {
            OpKind::Flatten => {
                let cons = g.consumers(id);
                let ok = cons.iter().all(|c| {
                    matches!(
                        g.nodes[c].kind,
                        OpKind::FullyConnected | OpKind::Output | OpKind::Flatten
                    )
                });
                if !ok {
                    return Err(Error::UnsupportedTransform {
                        id,
                        reason: "flatten feeds a spatial operation".into(),
                    });
                }
                g.bypass(id);
            }
            OpKind::Concat if concat_absorbable(&g, id) => {
                let mut offset = 0;
                for &p in &node.inputs {
                    let c = g.nodes[&p].output_shape.c;
                    g.nodes.get_mut(&p).unwrap().save = Some(SaveSlot {
                        tensor: id,
                        channel_offset: offset,
                    });
                    offset += c;
                }
                g.shared.insert(
                    id,
                    SharedTensor {
                        id,
                        name: node.name.clone(),
                        shape: node.output_shape,
                        producers: node.inputs.clone(),
                    },
                );
                g.nodes.remove(&id);
            }
            _ => {}
        }
    }
    refresh_output_shapes(&mut g);
    debug_assert!(g.nodes.values().filter(|n| n.kind == OpKind::Output).all(|n| {
        infer_shape(n.kind, &n.attrs, &[g.tensor_shape(n.inputs[0])]).ok() == Some(n.output_shape)
    }));
    Ok(g)
}

/// The full normalization pipeline. Returns the graph and any vertices that
/// were left unfolded.
pub fn normalize(g: &XGraph) -> Result<(XGraph, Vec<Error>)> {
    let (g, warnings) = fold_bn_scale(g);
    let g = fuse_pointwise(&g);
    let g = prune_dim_transforms(&g)?;
    g.validate()?;
    Ok((g, warnings))
}

/// Strided-save annotation for a producer merged into a concat: the byte
/// offset of its first channel and the pixel stride of the destination.
pub fn save_stride(g: &XGraph, producer: NodeId) -> Option<(usize, usize)> {
    let slot = g.nodes[&producer].save?;
    Some((slot.channel_offset, g.tensor_shape(slot.tensor).c))
}
