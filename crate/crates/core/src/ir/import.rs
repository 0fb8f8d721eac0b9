//! JSON model manifest importer.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "inputs": [{"id": "data", "shape": [1, 4, 4, 3]}],
//!   "nodes": [
//!     {"id": "conv1", "kind": "Conv", "inputs": ["data"],
//!      "attrs": {"kernel": 3, "stride": 1, "pad": 1, "out_channels": 8},
//!      "params": ["conv1.w", "conv1.b"], "shape": [1, 4, 4, 8]}
//!   ]
//! }
//! ```
//!
//! Besides the XGraph kinds the importer accepts the framework-granularity
//! kinds `Pad` and `BiasAdd`, which it merges into the adjacent convolution.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::graph::{NodeId, XGraph, XNode};
use super::params::{load_blob_store, ParamStore, ParamTensor};
use super::shape::infer_shape;
use super::types::{OpAttrs, OpKind, PoolType, TensorShape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub eps: Option<f32>,
    pub inputs: Vec<ManifestInput>,
    pub nodes: Vec<ManifestNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestInput {
    pub id: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestNode {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub attrs: serde_json::Map<String, Value>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RawKind {
    Op(OpKind),
    Pad,
    BiasAdd,
}

#[derive(Debug, Clone)]
struct RawNode {
    name: String,
    kind: RawKind,
    attrs: OpAttrs,
    inputs: Vec<String>,
    params: Vec<String>,
    declared: Option<TensorShape>,
}

pub fn import_files(manifest: &Path, params: &Path) -> Result<XGraph> {
    let text = std::fs::read_to_string(manifest)?;
    let store = load_blob_store(params)?;
    import_str(&text, store)
}

pub fn import_str(manifest: &str, params: ParamStore) -> Result<XGraph> {
    let value: Value = serde_json::from_str(manifest)?;
    let m: Manifest =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    import_model(&m, params)
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn shape_from(v: &[usize], what: &str) -> Result<TensorShape> {
    let s = match v {
        [n, h, w, c] => TensorShape { n: *n, h: *h, w: *w, c: *c },
        [h, w, c] => TensorShape::new(*h, *w, *c),
        _ => return Err(schema(format!("{what}: shape must be [n,h,w,c]"))),
    };
    if !s.is_valid() {
        return Err(schema(format!("{what}: invalid shape {s} (batch must be 1)")));
    }
    Ok(s)
}

fn uint(v: &Value, key: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema(format!("attr `{key}` must be a non-negative integer")))
}

fn pair(v: &Value, key: &str) -> Result<(usize, usize)> {
    match v {
        Value::Array(a) if a.len() == 2 => Ok((uint(&a[0], key)?, uint(&a[1], key)?)),
        _ => {
            let x = uint(v, key)?;
            Ok((x, x))
        }
    }
}

fn parse_attrs(kind: RawKind, map: &serde_json::Map<String, Value>) -> Result<OpAttrs> {
    let mut a = OpAttrs::default();
    for (key, v) in map {
        match key.as_str() {
            "kernel" => (a.kernel_h, a.kernel_w) = pair(v, key)?,
            "kernel_h" => a.kernel_h = uint(v, key)?,
            "kernel_w" => a.kernel_w = uint(v, key)?,
            "stride" => (a.stride_h, a.stride_w) = pair(v, key)?,
            "stride_h" => a.stride_h = uint(v, key)?,
            "stride_w" => a.stride_w = uint(v, key)?,
            "pad" => match v {
                Value::Array(p) if p.len() == 4 => {
                    a.pad_top = uint(&p[0], key)?;
                    a.pad_bottom = uint(&p[1], key)?;
                    a.pad_left = uint(&p[2], key)?;
                    a.pad_right = uint(&p[3], key)?;
                }
                _ => {
                    let (ph, pw) = pair(v, key)?;
                    (a.pad_top, a.pad_bottom, a.pad_left, a.pad_right) = (ph, ph, pw, pw);
                }
            },
            "pad_top" => a.pad_top = uint(v, key)?,
            "pad_bottom" => a.pad_bottom = uint(v, key)?,
            "pad_left" => a.pad_left = uint(v, key)?,
            "pad_right" => a.pad_right = uint(v, key)?,
            "out_channels" | "num_output" => a.out_channels = uint(v, key)?,
            "dilation" => a.dilation = uint(v, key)?,
            "scale" => a.scale = uint(v, key)?,
            "relu" => a.relu = v.as_bool().ok_or_else(|| schema("attr `relu` must be bool"))?,
            "nonlinear" => match v.as_str() {
                Some("relu") => a.relu = true,
                Some("none") => a.relu = false,
                _ => return Err(schema("attr `nonlinear` must be \"relu\" or \"none\"")),
            },
            "axis" => {
                let ok = matches!(v.as_i64(), Some(3) | Some(-1)) || v.as_str() == Some("c");
                if !ok {
                    return Err(schema("only channel concatenation (axis 3) is supported"));
                }
            }
            // consumed elsewhere
            "pool_type" | "pool" | "eps" | "arity" => {}
            other => return Err(schema(format!("unknown attr `{other}`"))),
        }
    }
    if a.dilation == 0 {
        return Err(schema("dilation must be >= 1"));
    }
    if kind == RawKind::Op(OpKind::Reorg) && !map.contains_key("stride") && !map.contains_key("stride_h") {
        (a.stride_h, a.stride_w) = (2, 2);
    }
    Ok(a)
}

fn parse_kind(node: &ManifestNode) -> Result<RawKind> {
    let k = node.kind.to_ascii_lowercase();
    if k == "pad" {
        return Ok(RawKind::Pad);
    }
    if k == "biasadd" || k == "bias_add" {
        return Ok(RawKind::BiasAdd);
    }
    let mut kind = OpKind::parse(&node.kind)
        .ok_or_else(|| schema(format!("node `{}`: unknown kind `{}`", node.id, node.kind)))?;
    if let OpKind::Pool(_) = kind {
        let t = node.attrs.get("pool_type").or_else(|| node.attrs.get("pool"));
        match t.and_then(Value::as_str) {
            Some("avg") | Some("ave") => kind = OpKind::Pool(PoolType::Avg),
            Some("max") => kind = OpKind::Pool(PoolType::Max),
            None => {}
            Some(other) => return Err(schema(format!("unknown pool type `{other}`"))),
        }
    }
    if matches!(kind, OpKind::Input) {
        return Err(schema("Input vertices are declared in `inputs`"));
    }
    Ok(RawKind::Op(kind))
}

/// Builds a shape-checked XGraph from a manifest and its parameter blobs.
pub fn import_model(m: &Manifest, params: ParamStore) -> Result<XGraph> {
    let mut raw: Vec<RawNode> = Vec::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    for inp in &m.inputs {
        let shape = shape_from(&inp.shape, &inp.id)?;
        if names.insert(inp.id.clone(), raw.len()).is_some() {
            return Err(schema(format!("duplicate id `{}`", inp.id)));
        }
        raw.push(RawNode {
            name: inp.id.clone(),
            kind: RawKind::Op(OpKind::Input),
            attrs: OpAttrs::default(),
            inputs: vec![],
            params: vec![],
            declared: Some(shape),
        });
    }
    for n in &m.nodes {
        let kind = parse_kind(n)?;
        let attrs = parse_attrs(kind, &n.attrs)?;
        let declared = n.shape.as_deref().map(|s| shape_from(s, &n.id)).transpose()?;
        if names.insert(n.id.clone(), raw.len()).is_some() {
            return Err(schema(format!("duplicate id `{}`", n.id)));
        }
        raw.push(RawNode {
            name: n.id.clone(),
            kind,
            attrs,
            inputs: n.inputs.clone(),
            params: n.params.clone(),
            declared,
        });
    }
    for r in &raw {
        for i in &r.inputs {
            if !names.contains_key(i) {
                return Err(schema(format!("node `{}` reads unknown id `{i}`", r.name)));
            }
        }
        for p in &r.params {
            if !params.contains_key(p) {
                return Err(Error::DanglingRef(p.clone()));
            }
        }
    }
    let order = raw_topo(&raw, &names)?;
    let mut params = params;
    let raw = merge_front_end(raw, &mut params)?;
    build_graph(m, raw, order_names(&order), params)
}

fn order_names(order: &[String]) -> HashMap<String, usize> {
    order.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
}

/// Kahn's algorithm over manifest names, ties broken by declaration order.
fn raw_topo(raw: &[RawNode], names: &HashMap<String, usize>) -> Result<Vec<String>> {
    let mut indeg = vec![0usize; raw.len()];
    let mut succ: Vec<Vec<usize>> = vec![vec![]; raw.len()];
    for (i, r) in raw.iter().enumerate() {
        for inp in &r.inputs {
            let p = names[inp];
            succ[p].push(i);
            indeg[i] += 1;
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..raw.len()).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::new();
    while let Some(i) = ready.pop_first() {
        order.push(raw[i].name.clone());
        for &s in &succ[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() != raw.len() {
        let stuck = (0..raw.len()).find(|&i| indeg[i] > 0).unwrap_or(0);
        return Err(Error::Cycle(stuck as NodeId));
    }
    Ok(order)
}

fn consumers_of(raw: &[RawNode], name: &str) -> Vec<usize> {
    raw.iter()
        .enumerate()
        .filter(|(_, r)| r.inputs.iter().any(|i| i == name))
        .map(|(i, _)| i)
        .collect()
}

/// Merges `Pad` into its consuming convolution and `BiasAdd` into its
/// producing convolution.
fn merge_front_end(mut raw: Vec<RawNode>, params: &mut ParamStore) -> Result<Vec<RawNode>> {
    loop {
        let Some(idx) = raw
            .iter()
            .position(|r| matches!(r.kind, RawKind::Pad | RawKind::BiasAdd))
        else {
            return Ok(raw);
        };
        let node = raw[idx].clone();
        if node.inputs.len() != 1 {
            return Err(schema(format!("`{}` must have exactly one input", node.name)));
        }
        let src = node.inputs[0].clone();
        match node.kind {
            RawKind::Pad => {
                let cons = consumers_of(&raw, &node.name);
                let target = match cons.as_slice() {
                    [c] if matches!(raw[*c].kind, RawKind::Op(k) if k.is_conv_family() && k != OpKind::Deconv) => *c,
                    _ => {
                        return Err(schema(format!(
                            "pad `{}` must feed exactly one convolution",
                            node.name
                        )))
                    }
                };
                let a = &mut raw[target].attrs;
                a.pad_top += node.attrs.pad_top;
                a.pad_bottom += node.attrs.pad_bottom;
                a.pad_left += node.attrs.pad_left;
                a.pad_right += node.attrs.pad_right;
            }
            RawKind::BiasAdd => {
                let p = raw
                    .iter()
                    .position(|r| r.name == src)
                    .expect("validated input");
                let ok = matches!(raw[p].kind, RawKind::Op(k) if k.is_conv_family())
                    && consumers_of(&raw, &src).len() == 1
                    && node.params.len() == 1;
                if !ok {
                    return Err(schema(format!(
                        "bias_add `{}` must follow a convolution with no other consumer",
                        node.name
                    )));
                }
                let add = params[&node.params[0]].data.clone();
                let merged_name = format!("{}.bias", raw[p].name);
                let merged = match raw[p].params.get(1) {
                    Some(b) => {
                        let mut d = params[b].data.clone();
                        if d.len() != add.len() {
                            return Err(schema(format!("bias length mismatch at `{}`", node.name)));
                        }
                        d.iter_mut().zip(&add).for_each(|(x, y)| *x += y);
                        d
                    }
                    None => add,
                };
                params.insert(merged_name.clone(), ParamTensor::new(vec![merged.len()], merged));
                raw[p].params.truncate(1);
                raw[p].params.push(merged_name);
            }
            RawKind::Op(_) => unreachable!(),
        }
        // bypass the merged node
        for r in raw.iter_mut() {
            for i in r.inputs.iter_mut() {
                if *i == node.name {
                    *i = src.clone();
                }
            }
        }
        raw.remove(idx);
    }
}

fn check_params(node: &XNode, in_shapes: &[TensorShape], params: &ParamStore) -> Result<()> {
    let bad = |msg: String| Err(schema(format!("node `{}`: {msg}", node.name)));
    let get = |i: usize| params.get(&node.params[i]).map(|p| p.shape.clone());
    let a = &node.attrs;
    let k = node.kind;
    if k.is_conv_family() {
        if node.params.is_empty() || node.params.len() > 2 {
            return bad("convolutions take [weights] or [weights, bias]".into());
        }
        let ic = in_shapes[0].c;
        let oc = node.output_shape.c;
        let expected = if k == OpKind::DepthwiseConv {
            vec![oc, a.kernel_w, a.kernel_h, 1]
        } else {
            vec![oc, a.kernel_w, a.kernel_h, ic]
        };
        if get(0).unwrap() != expected {
            return bad(format!("weights must have OWHC shape {expected:?}"));
        }
        if node.params.len() == 2 && get(1).unwrap() != vec![oc] {
            return bad(format!("bias must have shape [{oc}]"));
        }
    } else if k == OpKind::FullyConnected {
        let inf = in_shapes[0].elements();
        let oc = a.out_channels;
        if node.params.is_empty() || get(0).unwrap() != vec![oc, inf] {
            return bad(format!("weights must have shape [{oc}, {inf}]"));
        }
        if node.params.len() == 2 && get(1).unwrap() != vec![oc] {
            return bad(format!("bias must have shape [{oc}]"));
        }
    } else if matches!(k, OpKind::BatchNorm | OpKind::Scale) {
        let c = in_shapes[0].c;
        let allowed: &[usize] = if k == OpKind::BatchNorm { &[2, 4] } else { &[1, 2] };
        if !allowed.contains(&node.params.len()) {
            return bad(format!("{k} takes {allowed:?} parameter vectors"));
        }
        for i in 0..node.params.len() {
            if get(i).unwrap() != vec![c] {
                return bad(format!("{k} parameters must have shape [{c}]"));
            }
        }
    } else if !node.params.is_empty() {
        return bad(format!("{k} takes no parameters"));
    }
    Ok(())
}

fn build_graph(
    m: &Manifest,
    raw: Vec<RawNode>,
    order: HashMap<String, usize>,
    params: ParamStore,
) -> Result<XGraph> {
    let mut g = XGraph::new(m.name.clone());
    if let Some(eps) = m.eps {
        g.bn_eps = eps;
    }
    // ids follow declaration order; insertion follows dataflow order
    let ids: BTreeMap<String, NodeId> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| (r.name.clone(), i as NodeId))
        .collect();
    let mut sorted: Vec<&RawNode> = raw.iter().collect();
    sorted.sort_by_key(|r| order[&r.name]);
    for r in sorted {
        let id = ids[&r.name];
        let RawKind::Op(kind) = r.kind else { unreachable!() };
        let inputs: Vec<NodeId> = r.inputs.iter().map(|i| ids[i]).collect();
        let output_shape = if kind == OpKind::Input {
            r.declared.unwrap()
        } else {
            let in_shapes: Vec<_> = inputs.iter().map(|&t| g.tensor_shape(t)).collect();
            let computed = infer_shape(kind, &r.attrs, &in_shapes)
                .map_err(|e| schema(format!("node `{}`: {e}", r.name)))?;
            if let Some(d) = r.declared {
                if d != computed {
                    return Err(Error::ShapeMismatch {
                        node: r.name.clone(),
                        declared: d.to_string(),
                        computed: computed.to_string(),
                    });
                }
            }
            computed
        };
        let node = XNode {
            id,
            name: r.name.clone(),
            kind,
            attrs: r.attrs.clone(),
            inputs,
            params: r.params.clone(),
            output_shape,
            save: None,
        };
        let in_shapes: Vec<_> = node.inputs.iter().map(|&t| g.tensor_shape(t)).collect();
        check_params(&node, &in_shapes, &params)?;
        g.nodes.insert(id, node);
    }
    let used: std::collections::BTreeSet<&String> =
        g.nodes.values().flat_map(|n| n.params.iter()).collect();
    g.params = params
        .into_iter()
        .filter(|(k, _)| used.contains(k))
        .collect();
    g.add_missing_outputs();
    g.validate()?;
    Ok(g)
}

/// Serializes an un-normalized graph back into manifest form.
pub fn to_manifest(g: &XGraph) -> Manifest {
    let order = g.topo_order().expect("valid graph");
    let mut inputs = vec![];
    let mut nodes = vec![];
    for id in order {
        let n = g.node(id);
        let s = n.output_shape;
        if n.kind == OpKind::Input {
            inputs.push(ManifestInput {
                id: n.name.clone(),
                shape: vec![s.n, s.h, s.w, s.c],
            });
            continue;
        }
        let a = &n.attrs;
        let mut attrs = serde_json::Map::new();
        let mut put = |k: &str, v: Value| {
            attrs.insert(k.into(), v);
        };
        let kind = match n.kind {
            OpKind::Pool(t) => {
                put("pool_type", Value::from(if t == PoolType::Max { "max" } else { "avg" }));
                "Pool".to_string()
            }
            k => k.name().to_string(),
        };
        if n.kind.is_conv_family() || n.kind.is_pool() {
            put("kernel", serde_json::json!([a.kernel_h, a.kernel_w]));
            put("stride", serde_json::json!([a.stride_h, a.stride_w]));
            put(
                "pad",
                serde_json::json!([a.pad_top, a.pad_bottom, a.pad_left, a.pad_right]),
            );
        }
        if n.kind.is_conv_family() || n.kind.is_host() {
            put("out_channels", Value::from(s.c));
        }
        if a.dilation != 1 {
            put("dilation", Value::from(a.dilation));
        }
        if a.relu {
            put("nonlinear", Value::from("relu"));
        }
        if n.kind == OpKind::Upsample {
            put("scale", Value::from(a.scale));
        }
        if n.kind == OpKind::Reorg {
            put("stride", serde_json::json!([a.stride_h, a.stride_w]));
        }
        let tensor_names: Vec<String> =
            n.inputs.iter().map(|&t| g.tensor_name(t).to_string()).collect();
        nodes.push(ManifestNode {
            id: n.name.clone(),
            kind,
            attrs,
            inputs: tensor_names,
            params: n.params.clone(),
            shape: Some(vec![s.n, s.h, s.w, s.c]),
        });
    }
    Manifest {
        name: g.name.clone(),
        eps: Some(g.bn_eps),
        inputs,
        nodes,
    }
}

/// Reads node ids in declaration order (for callers mapping names back).
pub fn id_of(g: &XGraph, name: &str) -> Option<NodeId> {
    g.nodes.values().find(|n| n.name == name).map(|n| n.id)
}
