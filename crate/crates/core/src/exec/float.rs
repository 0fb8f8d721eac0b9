//! Direct `f32` interpreter over an XGraph. Used to check that
//! normalization preserves semantics and to calibrate quantization radices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ir::{NodeId, OpAttrs, OpKind, PoolType, TensorId, TensorShape, XGraph, XNode};

pub type FloatTensors = BTreeMap<TensorId, Vec<f32>>;

fn idx(s: &TensorShape, y: usize, x: usize, c: usize) -> usize {
    (y * s.w + x) * s.c + c
}

/// OWHC weight index.
fn widx(kw: usize, kh: usize, ic: usize, o: usize, x: usize, y: usize, c: usize) -> usize {
    ((o * kw + x) * kh + y) * ic + c
}

pub(crate) fn conv_f32(
    kind: OpKind,
    a: &OpAttrs,
    input: &[f32],
    is: &TensorShape,
    w: &[f32],
    bias: Option<&[f32]>,
    os: &TensorShape,
) -> Vec<f32> {
    let mut out = vec![0f32; os.elements()];
    let depthwise = kind == OpKind::DepthwiseConv;
    let wic = if depthwise { 1 } else { is.c };
    if kind == OpKind::Deconv {
        for iy in 0..is.h {
            for ix in 0..is.w {
                for ky in 0..a.kernel_h {
                    for kx in 0..a.kernel_w {
                        let y = (iy * a.stride_h + ky) as i64 - a.pad_top as i64;
                        let x = (ix * a.stride_w + kx) as i64 - a.pad_left as i64;
                        if y < 0 || x < 0 || y >= os.h as i64 || x >= os.w as i64 {
                            continue;
                        }
                        for o in 0..os.c {
                            let mut acc = 0f32;
                            for c in 0..is.c {
                                acc += input[idx(is, iy, ix, c)]
                                    * w[widx(a.kernel_w, a.kernel_h, wic, o, kx, ky, c)];
                            }
                            out[idx(os, y as usize, x as usize, o)] += acc;
                        }
                    }
                }
            }
        }
    } else {
        for y in 0..os.h {
            for x in 0..os.w {
                for o in 0..os.c {
                    let mut acc = 0f32;
                    for ky in 0..a.kernel_h {
                        let iy = (y * a.stride_h + ky * a.dilation) as i64 - a.pad_top as i64;
                        if iy < 0 || iy >= is.h as i64 {
                            continue;
                        }
                        for kx in 0..a.kernel_w {
                            let ix = (x * a.stride_w + kx * a.dilation) as i64 - a.pad_left as i64;
                            if ix < 0 || ix >= is.w as i64 {
                                continue;
                            }
                            let (iy, ix) = (iy as usize, ix as usize);
                            if depthwise {
                                acc += input[idx(is, iy, ix, o)]
                                    * w[widx(a.kernel_w, a.kernel_h, 1, o, kx, ky, 0)];
                            } else {
                                for c in 0..is.c {
                                    acc += input[idx(is, iy, ix, c)]
                                        * w[widx(a.kernel_w, a.kernel_h, wic, o, kx, ky, c)];
                                }
                            }
                        }
                    }
                    out[idx(os, y, x, o)] = acc;
                }
            }
        }
    }
    for y in 0..os.h {
        for x in 0..os.w {
            for o in 0..os.c {
                let v = &mut out[idx(os, y, x, o)];
                if let Some(b) = bias {
                    *v += b[o];
                }
                if a.relu {
                    *v = v.max(0.0);
                }
            }
        }
    }
    out
}

fn pool_f32(t: PoolType, a: &OpAttrs, input: &[f32], is: &TensorShape, os: &TensorShape) -> Vec<f32> {
    let mut out = vec![0f32; os.elements()];
    for y in 0..os.h {
        for x in 0..os.w {
            for c in 0..os.c {
                let mut best = f32::NEG_INFINITY;
                let mut sum = 0f32;
                for ky in 0..a.kernel_h {
                    let iy = (y * a.stride_h + ky) as i64 - a.pad_top as i64;
                    for kx in 0..a.kernel_w {
                        let ix = (x * a.stride_w + kx) as i64 - a.pad_left as i64;
                        if iy < 0 || ix < 0 || iy >= is.h as i64 || ix >= is.w as i64 {
                            continue;
                        }
                        let v = input[idx(is, iy as usize, ix as usize, c)];
                        best = best.max(v);
                        sum += v;
                    }
                }
                out[idx(os, y, x, c)] = match t {
                    PoolType::Max => best,
                    PoolType::Avg => sum / (a.kernel_h * a.kernel_w) as f32,
                };
            }
        }
    }
    out
}

pub(crate) fn reorg_index(is: &TensorShape, s: usize, y: usize, x: usize, c: usize) -> usize {
    // output channel c = (dy * s + dx) * C + ci
    let ci = c % is.c;
    let sub = c / is.c;
    let (dy, dx) = (sub / s, sub % s);
    idx(is, y * s + dy, x * s + dx, ci)
}

fn eval_node(g: &XGraph, n: &XNode, vals: &FloatTensors) -> Result<Vec<f32>> {
    let input = |i: usize| &vals[&n.inputs[i]];
    let ishape = |i: usize| g.tensor_shape(n.inputs[i]);
    let os = n.output_shape;
    let p = |i: usize| g.params[&n.params[i]].data.as_slice();
    Ok(match n.kind {
        k if k.is_conv_family() => conv_f32(
            k,
            &n.attrs,
            input(0),
            &ishape(0),
            p(0),
            n.params.get(1).map(|_| p(1)),
            &os,
        ),
        OpKind::Pool(t) => pool_f32(t, &n.attrs, input(0), &ishape(0), &os),
        OpKind::EltwiseAdd => input(0)
            .iter()
            .zip(input(1))
            .map(|(a, b)| {
                let v = a + b;
                if n.attrs.relu {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect(),
        OpKind::ReLU => input(0).iter().map(|v| v.max(0.0)).collect(),
        OpKind::BatchNorm => {
            let c = os.c;
            let (mean, var) = (p(0), p(1));
            input(0)
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let ch = i % c;
                    let (gm, bt) = if n.params.len() == 4 { (p(2)[ch], p(3)[ch]) } else { (1.0, 0.0) };
                    (v - mean[ch]) / (var[ch] + g.bn_eps).sqrt() * gm + bt
                })
                .collect()
        }
        OpKind::Scale => {
            let c = os.c;
            input(0)
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let ch = i % c;
                    v * p(0)[ch] + if n.params.len() == 2 { p(1)[ch] } else { 0.0 }
                })
                .collect()
        }
        OpKind::Concat => {
            let mut out = vec![0f32; os.elements()];
            let mut off = 0;
            for (i, &t) in n.inputs.iter().enumerate() {
                let s = ishape(i);
                let v = &vals[&t];
                for px in 0..s.h * s.w {
                    out[px * os.c + off..px * os.c + off + s.c]
                        .copy_from_slice(&v[px * s.c..(px + 1) * s.c]);
                }
                off += s.c;
            }
            out
        }
        OpKind::Flatten | OpKind::Output => input(0).clone(),
        OpKind::Reorg => {
            let is = ishape(0);
            let s = n.attrs.stride_h;
            let src = input(0);
            let mut out = vec![0f32; os.elements()];
            for y in 0..os.h {
                for x in 0..os.w {
                    for c in 0..os.c {
                        out[idx(&os, y, x, c)] = src[reorg_index(&is, s, y, x, c)];
                    }
                }
            }
            out
        }
        OpKind::Upsample => {
            let is = ishape(0);
            let f = n.attrs.scale;
            let src = input(0);
            let mut out = vec![0f32; os.elements()];
            for y in 0..os.h {
                for x in 0..os.w {
                    for c in 0..os.c {
                        out[idx(&os, y, x, c)] = src[idx(&is, y / f, x / f, c)];
                    }
                }
            }
            out
        }
        OpKind::FullyConnected => {
            let src = input(0);
            let w = p(0);
            let inf = src.len();
            (0..os.c)
                .map(|o| {
                    let mut acc: f32 = (0..inf).map(|i| src[i] * w[o * inf + i]).sum();
                    if n.params.len() == 2 {
                        acc += p(1)[o];
                    }
                    if n.attrs.relu {
                        acc = acc.max(0.0);
                    }
                    acc
                })
                .collect()
        }
        OpKind::Input => unreachable!(),
        k => return Err(Error::UnsupportedOp { id: n.id, kind: k.to_string() }),
    })
}

/// Evaluates every tensor of `g`. `inputs` maps Input vertex ids to NHWC data.
pub fn run_float(g: &XGraph, inputs: &BTreeMap<NodeId, Vec<f32>>) -> Result<FloatTensors> {
    let mut vals = FloatTensors::new();
    for (&t, s) in &g.shared {
        vals.insert(t, vec![0f32; s.shape.elements()]);
    }
    for id in g.topo_order()? {
        let n = g.node(id);
        if n.kind == OpKind::Input {
            let v = inputs
                .get(&id)
                .ok_or_else(|| Error::Schema(format!("no data for input `{}`", n.name)))?;
            if v.len() != n.output_shape.elements() {
                return Err(Error::Schema(format!("input `{}` has wrong length", n.name)));
            }
            vals.insert(id, v.clone());
            continue;
        }
        let out = eval_node(g, n, &vals)?;
        match n.save {
            None => {
                vals.insert(id, out);
            }
            Some(slot) => {
                let dc = g.tensor_shape(slot.tensor).c;
                let c = n.output_shape.c;
                let dst = vals.get_mut(&slot.tensor).unwrap();
                for px in 0..n.output_shape.h * n.output_shape.w {
                    dst[px * dc + slot.channel_offset..px * dc + slot.channel_offset + c]
                        .copy_from_slice(&out[px * c..(px + 1) * c]);
                }
            }
        }
    }
    Ok(vals)
}

/// Values read by the graph's Output sentinels, keyed by Output vertex name.
pub fn graph_outputs(g: &XGraph, vals: &FloatTensors) -> BTreeMap<String, Vec<f32>> {
    g.nodes
        .values()
        .filter(|n| n.kind == OpKind::Output)
        .map(|n| (n.name.clone(), vals[&n.inputs[0]].clone()))
        .collect()
}
