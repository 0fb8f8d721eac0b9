//! Executes an instruction stream against a modeled DDR byte array and
//! modeled on-chip buffers.

use super::fixed::{round_div, round_shift, sat32, sat8};
use crate::codegen::lower::buffer_capacity;
use crate::codegen::DdrPlan;
use crate::error::{Error, Result};
use crate::isa::*;
use crate::tiling::HwConfig;

struct Machine {
    ddr: Vec<u8>,
    bufs: Vec<Vec<i8>>,
    acc: Vec<i32>,
    /// `[lo, hi)` ranges SAVEs may write.
    writable: Vec<(usize, usize)>,
}

fn oob(what: String) -> Error {
    Error::OutOfBounds(what)
}

impl Machine {
    fn rd(&self, buf: u8, i: usize) -> Result<i8> {
        self.bufs[buf as usize].get(i).copied().ok_or_else(|| oob(format!("read {}[{i}]", buffer_name(buf))))
    }

    fn wr(&mut self, buf: u8, i: usize, v: i8) -> Result<()> {
        let slot = self.bufs[buf as usize]
            .get_mut(i)
            .ok_or_else(|| oob(format!("write {}[{i}]", buffer_name(buf))))?;
        *slot = v;
        Ok(())
    }

    fn acc_at(&mut self, i: usize) -> Result<&mut i32> {
        self.acc.get_mut(i).ok_or_else(|| oob(format!("ACC[{i}]")))
    }

    fn transfer(&mut self, t: &Transfer, load: bool) -> Result<()> {
        let n = t.len as usize;
        if load && t.buf == BUF_ACC || !load && t.buf == BUF_ACC {
            return Err(oob("transfer touching ACC".into()));
        }
        for (d, b) in t.runs() {
            if d + n > self.ddr.len() {
                return Err(oob(format!("DDR [{d}, {}) beyond {}", d + n, self.ddr.len())));
            }
            let buf = &mut self.bufs[t.buf as usize];
            if b + n > buf.len() {
                return Err(oob(format!("{} [{b}, {}) beyond {}", buffer_name(t.buf), b + n, buf.len())));
            }
            if load {
                for k in 0..n {
                    buf[b + k] = self.ddr[d + k] as i8;
                }
            } else {
                if !self.writable.iter().any(|&(lo, hi)| lo <= d && d + n <= hi) {
                    return Err(oob(format!("SAVE to [{d}, {}) outside any feature-map region", d + n)));
                }
                for k in 0..n {
                    self.ddr[d + k] = buf[b + k] as u8;
                }
            }
        }
        Ok(())
    }

    fn conv(&mut self, c: &ConvOp) -> Result<()> {
        let (oh, ow, occ) = (c.acc.h as usize, c.acc.w as usize, c.acc.c as usize);
        let depthwise = c.variant == ConvVariant::Depthwise;
        let (ih, iw) = (c.input.h as i64, c.input.w as i64);
        let tap = |o: usize, k: usize, s: u8, pad: i16, len: i64| -> Option<usize> {
            let s = s as i64;
            if c.variant == ConvVariant::Deconv {
                let num = o as i64 + pad as i64 - k as i64;
                (num >= 0 && num % s == 0 && num / s < len).then(|| (num / s) as usize)
            } else {
                let i = o as i64 * s + (k * c.dil as usize) as i64 - pad as i64;
                (i >= 0 && i < len).then_some(i as usize)
            }
        };
        let chans = if depthwise { 1 } else { c.input.c as usize };
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..occ {
                    let ai = c.acc.at(oy, ox, o);
                    let mut a = if c.init { 0 } else { *self.acc_at(ai)? };
                    for cc in 0..chans {
                        let ic = if depthwise { o } else { cc };
                        for ky in 0..c.kh as usize {
                            let Some(iy) = tap(oy, ky, c.sh, c.pad_t, ih) else { continue };
                            for kx in 0..c.kw as usize {
                                let Some(ix) = tap(ox, kx, c.sw, c.pad_l, iw) else { continue };
                                let x = self.rd(c.input.buf, c.input.at(iy, ix, ic))?;
                                let wi = c.wgt_off as usize
                                    + ((o * c.kw as usize + kx) * c.kh as usize + ky) * c.wgt_ic as usize
                                    + cc * (!depthwise) as usize;
                                let w = self.rd(BUF_WGT, wi)?;
                                a = sat32(a as i64 + x as i64 * w as i64);
                            }
                        }
                    }
                    if c.fin {
                        if c.bias {
                            let b = self.rd(BUF_BIAS, c.bias_off as usize + o)?;
                            a = sat32(a as i64 + round_shift(b as i64, c.bias_shift as i32));
                        }
                        let mut v = round_shift(a as i64, -(c.out_shift as i32));
                        if c.relu {
                            v = v.max(0);
                        }
                        self.wr(c.out.buf, c.out.at(oy, ox, o), sat8(v))?;
                    }
                    *self.acc_at(ai)? = a;
                }
            }
        }
        Ok(())
    }

    fn pool(&mut self, p: &PoolOp) -> Result<()> {
        let (ih, iw) = (p.input.h as i64, p.input.w as i64);
        for oy in 0..p.out.h as usize {
            for ox in 0..p.out.w as usize {
                for c in 0..p.out.c as usize {
                    let mut best: Option<i8> = None;
                    let mut sum = 0i64;
                    for ky in 0..p.kh as i64 {
                        let iy = oy as i64 * p.sh as i64 + ky - p.pad_t as i64;
                        for kx in 0..p.kw as i64 {
                            let ix = ox as i64 * p.sw as i64 + kx - p.pad_l as i64;
                            if iy < 0 || ix < 0 || iy >= ih || ix >= iw {
                                continue;
                            }
                            let v = self.rd(p.input.buf, p.input.at(iy as usize, ix as usize, c))?;
                            best = Some(best.map_or(v, |b| b.max(v)));
                            sum += v as i64;
                        }
                    }
                    let v = if p.max {
                        best.unwrap_or(0)
                    } else {
                        sat8(round_div(sum, p.kh as i64 * p.kw as i64))
                    };
                    self.wr(p.out.buf, p.out.at(oy, ox, c), v)?;
                }
            }
        }
        Ok(())
    }

    fn misc(&mut self, m: &MiscOp) -> Result<()> {
        let o = m.out;
        for y in 0..o.h as usize {
            for x in 0..o.w as usize {
                for c in 0..o.c as usize {
                    let v = match m.kind {
                        MiscKind::Start | MiscKind::End => return Ok(()),
                        MiscKind::Eltwise => {
                            let a = self.rd(m.a.buf, m.a.at(y, x, c))? as i64;
                            let b = self.rd(m.b.buf, m.b.at(y, x, c))? as i64;
                            let s = round_shift(a, m.shift_a as i32) + round_shift(b, m.shift_b as i32);
                            let mut v = round_shift(s, -(m.out_shift as i32));
                            if m.relu {
                                v = v.max(0);
                            }
                            sat8(v)
                        }
                        MiscKind::Relu => self.rd(m.a.buf, m.a.at(y, x, c))?.max(0),
                        MiscKind::Upsample => {
                            let f = m.factor as usize;
                            let iy = (y + m.pad_t as usize) / f;
                            let ix = (x + m.pad_l as usize) / f;
                            self.rd(m.a.buf, m.a.at(iy, ix, c))?
                        }
                        MiscKind::Reorg => {
                            let s = m.factor as usize;
                            let cin = m.a.c as usize;
                            let g = m.ch0 as usize + c;
                            let (sub, ci) = (g / cin, g % cin);
                            self.rd(m.a.buf, m.a.at(y * s + sub / s, x * s + sub % s, ci))?
                        }
                    };
                    self.wr(o.buf, o.at(y, x, c), v)?;
                }
            }
        }
        Ok(())
    }

    fn step(&mut self, ins: &Instruction) -> Result<()> {
        match &ins.op {
            Op::Load(t) => self.transfer(t, true),
            Op::Save(t) => self.transfer(t, false),
            Op::Conv(c) => self.conv(c),
            Op::Pool(p) => self.pool(p),
            Op::Misc(m) => self.misc(m),
        }
    }
}

/// Runs `stream` in the order given by `order` (stream indices) and returns
/// the final DDR image.
pub fn run_stream_in_order(
    stream: &[Instruction],
    order: &[usize],
    plan: &DdrPlan,
    ddr: Vec<u8>,
    hw: &HwConfig,
) -> Result<Vec<u8>> {
    let bufs = (0..BUF_MID0 + NUM_MID)
        .map(|b| if b == BUF_ACC { vec![] } else { vec![0i8; buffer_capacity(hw, b)] })
        .collect();
    let mut m = Machine {
        ddr,
        bufs,
        acc: vec![0; buffer_capacity(hw, BUF_ACC)],
        writable: plan.tensors.values().map(|r| (r.base as usize, r.end())).collect(),
    };
    if m.ddr.len() < plan.total_bytes {
        m.ddr.resize(plan.total_bytes, 0);
    }
    for &i in order {
        m.step(&stream[i])?;
    }
    Ok(m.ddr)
}

pub fn run_stream(stream: &[Instruction], plan: &DdrPlan, ddr: Vec<u8>, hw: &HwConfig) -> Result<Vec<u8>> {
    let order: Vec<usize> = (0..stream.len()).collect();
    run_stream_in_order(stream, &order, plan, ddr, hw)
}
