//! Fixed-point reference interpreter over a whole XGraph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fixed::{round_div, round_shift, sat32, sat8};
use super::float::reorg_index;
use super::quant::QuantModel;
use crate::error::{Error, Result};
use crate::ir::{OpKind, PoolType, TensorId, TensorShape, XGraph, XNode};

pub type QTensors = BTreeMap<TensorId, Vec<i8>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatStats {
    /// Accumulator additions that hit the 32-bit bound.
    pub acc: u64,
    /// Results clamped when narrowing to 8 bits.
    pub out: u64,
}

fn at(s: &TensorShape, y: usize, x: usize, c: usize) -> usize {
    (y * s.w + x) * s.c + c
}

fn narrow(v: i64, stats: &mut SatStats) -> i8 {
    let r = sat8(v);
    if r as i64 != v {
        stats.out += 1;
    }
    r
}

fn acc_add(acc: i32, v: i64, stats: &mut SatStats) -> i32 {
    let r = sat32(acc as i64 + v);
    if r as i64 != acc as i64 + v {
        stats.acc += 1;
    }
    r
}

/// Conv-family vertex. Per output element: input channel outer, then kernel
/// row, then kernel column; bias added once, then requantized.
fn conv_q(g: &XGraph, n: &XNode, qm: &QuantModel, x: &[i8], stats: &mut SatStats) -> Vec<i8> {
    let a = &n.attrs;
    let is = g.tensor_shape(n.inputs[0]);
    let os = n.output_shape;
    let w = &qm.params[&n.params[0]];
    let ra = qm.radix[&n.inputs[0]] as i32 + w.radix as i32;
    let ro = qm.radix[&n.output_tensor()] as i32;
    let bias = n.params.get(1).map(|b| &qm.params[b]);
    let depthwise = n.kind == OpKind::DepthwiseConv;
    let wic = if depthwise { 1 } else { is.c };
    let widx = |o: usize, kx: usize, ky: usize, c: usize| ((o * a.kernel_w + kx) * a.kernel_h + ky) * wic + c;
    // input coordinate feeding output `o` at kernel tap `k`, if any
    let tap = |o: usize, k: usize, s: usize, pad: usize, len: usize| -> Option<usize> {
        if n.kind == OpKind::Deconv {
            let num = o as i64 + pad as i64 - k as i64;
            (num >= 0 && num % s as i64 == 0 && ((num / s as i64) as usize) < len).then(|| (num / s as i64) as usize)
        } else {
            let i = (o * s + k * a.dilation) as i64 - pad as i64;
            (i >= 0 && (i as usize) < len).then_some(i as usize)
        }
    };
    let mut out = vec![0i8; os.elements()];
    for y in 0..os.h {
        for xo in 0..os.w {
            for o in 0..os.c {
                let mut acc = 0i32;
                let chans = if depthwise { o..o + 1 } else { 0..is.c };
                for c in chans {
                    for ky in 0..a.kernel_h {
                        let Some(iy) = tap(y, ky, a.stride_h, a.pad_top, is.h) else { continue };
                        for kx in 0..a.kernel_w {
                            let Some(ix) = tap(xo, kx, a.stride_w, a.pad_left, is.w) else { continue };
                            let wc = if depthwise { 0 } else { c };
                            let p = x[at(&is, iy, ix, c)] as i64 * w.data[widx(o, kx, ky, wc)] as i64;
                            acc = acc_add(acc, p, stats);
                        }
                    }
                }
                if let Some(b) = bias {
                    acc = acc_add(acc, round_shift(b.data[o] as i64, ra - b.radix as i32), stats);
                }
                let mut v = round_shift(acc as i64, ro - ra);
                if a.relu {
                    v = v.max(0);
                }
                out[at(&os, y, xo, o)] = narrow(v, stats);
            }
        }
    }
    out
}

fn pool_q(n: &XNode, t: PoolType, is: &TensorShape, x: &[i8]) -> Vec<i8> {
    let a = &n.attrs;
    let os = n.output_shape;
    let mut out = vec![0i8; os.elements()];
    for y in 0..os.h {
        for xo in 0..os.w {
            for c in 0..os.c {
                let mut best: Option<i8> = None;
                let mut sum = 0i64;
                for ky in 0..a.kernel_h {
                    let iy = (y * a.stride_h + ky) as i64 - a.pad_top as i64;
                    for kx in 0..a.kernel_w {
                        let ix = (xo * a.stride_w + kx) as i64 - a.pad_left as i64;
                        if iy < 0 || ix < 0 || iy >= is.h as i64 || ix >= is.w as i64 {
                            continue;
                        }
                        let v = x[at(is, iy as usize, ix as usize, c)];
                        best = Some(best.map_or(v, |b| b.max(v)));
                        sum += v as i64;
                    }
                }
                out[at(&os, y, xo, c)] = match t {
                    PoolType::Max => best.unwrap_or(0),
                    PoolType::Avg => sat8(round_div(sum, (a.kernel_h * a.kernel_w) as i64)),
                };
            }
        }
    }
    out
}

/// Eltwise add: align both operands to the finer radix, add, requantize.
pub fn eltwise_value(a: i8, ra: i8, b: i8, rb: i8, ro: i8, relu: bool) -> i64 {
    let rm = ra.max(rb) as i32;
    let s = round_shift(a as i64, rm - ra as i32) + round_shift(b as i64, rm - rb as i32);
    let v = round_shift(s, ro as i32 - rm);
    if relu {
        v.max(0)
    } else {
        v
    }
}

/// Executes every accelerated vertex; host vertices and their dependents
/// are skipped. Returns all tensors including shared ones.
pub fn run_graph(g: &XGraph, qm: &QuantModel) -> Result<(QTensors, SatStats)> {
    let mut vals = QTensors::new();
    let mut stats = SatStats::default();
    for (&t, s) in &g.shared {
        vals.insert(t, vec![0i8; s.shape.elements()]);
    }
    for id in g.topo_order()? {
        let n = g.node(id);
        if n.kind == OpKind::Input {
            vals.insert(id, qm.inputs[&id].clone());
            continue;
        }
        if n.kind == OpKind::Output || !qm.radix.contains_key(&n.output_tensor()) {
            continue;
        }
        let x = |i: usize| &vals[&n.inputs[i]];
        let is = g.tensor_shape(n.inputs[0]);
        let os = n.output_shape;
        let out: Vec<i8> = match n.kind {
            k if k.is_conv_family() => conv_q(g, n, qm, x(0), &mut stats),
            OpKind::Pool(t) => pool_q(n, t, &is, x(0)),
            OpKind::EltwiseAdd => {
                let (ra, rb) = (qm.radix[&n.inputs[0]], qm.radix[&n.inputs[1]]);
                let ro = qm.radix[&n.output_tensor()];
                x(0).iter()
                    .zip(x(1))
                    .map(|(&a, &b)| narrow(eltwise_value(a, ra, b, rb, ro, n.attrs.relu), &mut stats))
                    .collect()
            }
            OpKind::ReLU => x(0).iter().map(|&v| v.max(0)).collect(),
            OpKind::Upsample => {
                let f = n.attrs.scale;
                let mut out = vec![0i8; os.elements()];
                for y in 0..os.h {
                    for xo in 0..os.w {
                        for c in 0..os.c {
                            out[at(&os, y, xo, c)] = x(0)[at(&is, y / f, xo / f, c)];
                        }
                    }
                }
                out
            }
            OpKind::Reorg => {
                let s = n.attrs.stride_h;
                let mut out = vec![0i8; os.elements()];
                for y in 0..os.h {
                    for xo in 0..os.w {
                        for c in 0..os.c {
                            out[at(&os, y, xo, c)] = x(0)[reorg_index(&is, s, y, xo, c)];
                        }
                    }
                }
                out
            }
            OpKind::Concat => {
                let mut out = vec![0i8; os.elements()];
                let mut off = 0;
                for (i, &t) in n.inputs.iter().enumerate() {
                    let s = g.tensor_shape(t);
                    for px in 0..s.h * s.w {
                        out[px * os.c + off..px * os.c + off + s.c]
                            .copy_from_slice(&x(i)[px * s.c..(px + 1) * s.c]);
                    }
                    off += s.c;
                }
                out
            }
            k => return Err(Error::UnsupportedOp { id, kind: k.to_string() }),
        };
        match n.save {
            None => {
                vals.insert(id, out);
            }
            Some(slot) => {
                let dc = g.tensor_shape(slot.tensor).c;
                let c = os.c;
                let dst = vals.get_mut(&slot.tensor).unwrap();
                for px in 0..os.h * os.w {
                    dst[px * dc + slot.channel_offset..px * dc + slot.channel_offset + c]
                        .copy_from_slice(&out[px * c..(px + 1) * c]);
                }
            }
        }
    }
    Ok((vals, stats))
}
