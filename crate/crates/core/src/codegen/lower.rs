//! Lowering of one (possibly fused) group into LOAD/SAVE/CONV/POOL/MISC
//! instructions.
//!
//! Loop nest per group: output tiles in row-major order; inside a tile every
//! stage runs to completion in dataflow order; inside a stage, output-channel
//! chunks, and inside those input-channel chunks. Intermediates between
//! stages live in MID banks and never touch DDR.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{input_range, Axis, InputRange, OpKind, TensorShape};
use crate::isa::*;
use crate::tiling::{HwConfig, StageSpec, TileConfig};

/// Where a tensor lives in DDR: `stride` bytes per pixel, the tensor's
/// channels starting `ch_off` bytes into each pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorView {
    pub base: u32,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub stride: usize,
    pub ch_off: usize,
}

impl TensorView {
    pub fn dense(base: u32, s: TensorShape) -> Self {
        TensorView { base, h: s.h, w: s.w, c: s.c, stride: s.c, ch_off: 0 }
    }

    pub fn addr(&self, y: usize, x: usize, c: usize) -> usize {
        self.base as usize + (y * self.w + x) * self.stride + self.ch_off + c
    }
}

/// A stage plus everything needed to address its operands.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageIo {
    pub spec: StageSpec,
    /// Primary input when it comes from DDR.
    pub input: Option<TensorView>,
    /// Second eltwise operand.
    pub other: Option<TensorView>,
    /// Destination for stages whose result leaves the group.
    pub output: Option<TensorView>,
    pub weights: Option<u32>,
    pub bias: Option<u32>,
    pub r_in: i8,
    pub r_other: i8,
    pub r_out: i8,
    pub r_w: i8,
    pub r_b: i8,
}

impl StageIo {
    /// Synthetic operands at address zero with radix zero, for costing.
    pub fn synthetic(spec: &StageSpec, is_final: bool) -> Self {
        let has_w = spec.kind.is_conv_family();
        StageIo {
            input: spec.from_stage.is_none().then(|| TensorView::dense(0, spec.in_shape)),
            other: (spec.extra_ddr_inputs > 0).then(|| TensorView::dense(0, spec.out_shape)),
            output: is_final.then(|| TensorView::dense(0, spec.out_shape)),
            weights: has_w.then_some(0),
            bias: has_w.then_some(0),
            spec: spec.clone(),
            r_in: 0,
            r_other: 0,
            r_out: 0,
            r_w: 0,
            r_b: 0,
        }
    }
}

pub fn buffer_capacity(hw: &HwConfig, buf: u8) -> usize {
    match buf {
        BUF_IN => hw.b_in,
        BUF_WGT => hw.b_weights,
        BUF_BIAS => BIAS_CAPACITY,
        BUF_OUT => hw.b_out,
        // in 32-bit elements
        BUF_ACC => hw.b_out,
        _ => hw.b_in,
    }
}

struct Emitter<'a> {
    hw: &'a HwConfig,
    code: Vec<Instruction>,
    turn: [usize; 16],
}

fn mid_bank(stage: usize) -> u8 {
    BUF_MID0 + stage as u8
}

fn other_bank(stage: usize) -> u8 {
    BUF_MID0 + NUM_MID / 2 + stage as u8
}

fn len(r: &Range<usize>) -> usize {
    r.end - r.start
}

fn chunks(total: usize, step: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..total).step_by(step.max(1)).map(move |c0| (c0, step.min(total - c0)))
}

impl Emitter<'_> {
    fn cap(&self, buf: u8) -> usize {
        buffer_capacity(self.hw, buf)
    }

    /// Offset of a slot of `size` elements; halves of the buffer alternate
    /// when two slots fit, so loads can overlap compute.
    fn slot(&mut self, buf: u8, size: usize) -> Result<usize> {
        let cap = self.cap(buf);
        if size > cap {
            return Err(Error::BufferOverflow { buffer: buffer_name(buf), end: size, capacity: cap });
        }
        if size * 2 <= cap {
            let t = self.turn[buf as usize];
            self.turn[buf as usize] ^= 1;
            Ok(t * (cap / 2))
        } else {
            Ok(0)
        }
    }

    fn check(&self, r: &Region) -> Result<()> {
        let end = r.span().1;
        let cap = self.cap(r.buf);
        if end > cap {
            return Err(Error::BufferOverflow { buffer: buffer_name(r.buf), end, capacity: cap });
        }
        Ok(())
    }

    fn push(&mut self, op: Op) {
        self.code.push(Instruction::new(op));
    }

    #[allow(clippy::too_many_arguments)]
    fn fm_transfer(v: &TensorView, rows: &Range<usize>, cols: &Range<usize>, c0: usize, cc: usize, buf: u8, boff: usize) -> Transfer {
        let (nr, nc) = (len(rows), len(cols));
        let mut t = Transfer {
            ddr: v.addr(rows.start, cols.start, c0) as u32,
            buf,
            boff: boff as u32,
            len: cc as u32,
            n1: nc as u16,
            ds1: v.stride as u32,
            bs1: cc as u32,
            n2: nr as u16,
            ds2: (v.w * v.stride) as u32,
            bs2: (nc * cc) as u32,
        };
        if cc == v.stride {
            t.len = (nc * cc) as u32;
            t.n1 = 1;
            t.ds1 = 0;
            t.bs1 = 0;
            if nc == v.w {
                t.len = (nr * nc * cc) as u32;
                t.n2 = 1;
                t.ds2 = 0;
                t.bs2 = 0;
            }
        }
        t
    }

    /// Loads a dense window into a fresh slot of `buf`.
    fn load_fm(&mut self, v: &TensorView, rows: &Range<usize>, cols: &Range<usize>, c0: usize, cc: usize, buf: u8) -> Result<Region> {
        let size = len(rows) * len(cols) * cc;
        let off = self.slot(buf, size)?;
        let r = Region::dense(buf, off, len(rows), len(cols), cc);
        if size > 0 {
            self.push(Op::Load(Self::fm_transfer(v, rows, cols, c0, cc, buf, off)));
        }
        Ok(r)
    }

    fn save_fm(&mut self, src: &Region, v: &TensorView, y0: usize, x0: usize, c0: usize) {
        if src.is_empty() {
            return;
        }
        let rows = y0..y0 + src.h as usize;
        let cols = x0..x0 + src.w as usize;
        let t = Self::fm_transfer(v, &rows, &cols, c0, src.c as usize, src.buf, src.off as usize);
        self.push(Op::Save(t));
    }

    fn load_flat(&mut self, ddr: usize, buf: u8, off: usize, n: usize) {
        if n > 0 {
            self.push(Op::Load(Transfer {
                ddr: ddr as u32,
                buf,
                boff: off as u32,
                len: n as u32,
                n1: 1,
                n2: 1,
                ..Default::default()
            }));
        }
    }
}

/// Primary operand of a stage within one tile.
enum Src {
    /// Full-channel window already on chip.
    Buf(Region),
    /// Fetched from DDR one channel chunk at a time.
    Ddr { view: TensorView, rows: Range<usize>, cols: Range<usize> },
}

impl Emitter<'_> {
    fn src_chunk(&mut self, src: &Src, c0: usize, cc: usize) -> Result<Region> {
        match src {
            Src::Buf(r) => Ok(Region { off: r.off + c0 as u32, c: cc as u16, ..*r }),
            Src::Ddr { view, rows, cols } => {
                let (view, rows, cols) = (*view, rows.clone(), cols.clone());
                self.load_fm(&view, &rows, &cols, c0, cc, BUF_IN)
            }
        }
    }
}

fn conv_variant(kind: OpKind) -> ConvVariant {
    match kind {
        OpKind::Deconv => ConvVariant::Deconv,
        OpKind::DepthwiseConv => ConvVariant::Depthwise,
        _ => ConvVariant::Standard,
    }
}

/// Whether a stage reading from DDR should bring in all channels at once.
fn wants_resident(kind: OpKind) -> bool {
    matches!(kind, OpKind::Conv | OpKind::DilatedConv | OpKind::Deconv | OpKind::Reorg)
}

struct StageTile {
    out_rows: Range<usize>,
    out_cols: Range<usize>,
    ih: InputRange,
    iw: InputRange,
}

struct GroupState {
    wres: Vec<Option<usize>>,
    bres: Vec<Option<usize>>,
}

fn weight_len(s: &StageSpec) -> usize {
    let k = s.attrs.kernel_h * s.attrs.kernel_w;
    match s.kind {
        OpKind::DepthwiseConv => s.out_shape.c * k,
        k2 if k2.is_conv_family() => s.out_shape.c * k * s.in_shape.c,
        _ => 0,
    }
}

impl Emitter<'_> {
    fn prologue(&mut self, stages: &[StageIo]) -> GroupState {
        let total_w: usize = stages.iter().map(|s| weight_len(&s.spec)).sum();
        let total_b: usize = stages.iter().filter(|s| s.bias.is_some()).map(|s| s.spec.out_shape.c).sum();
        let mut st = GroupState { wres: vec![None; stages.len()], bres: vec![None; stages.len()] };
        if total_w <= self.hw.b_weights {
            let mut off = 0;
            for (i, s) in stages.iter().enumerate() {
                let n = weight_len(&s.spec);
                if let (Some(addr), true) = (s.weights, n > 0) {
                    self.load_flat(addr as usize, BUF_WGT, off, n);
                    st.wres[i] = Some(off);
                    off += n;
                }
            }
        }
        if total_b <= BIAS_CAPACITY {
            let mut off = 0;
            for (i, s) in stages.iter().enumerate() {
                if let (Some(addr), true) = (s.bias, s.spec.kind.is_conv_family()) {
                    let n = s.spec.out_shape.c;
                    self.load_flat(addr as usize, BUF_BIAS, off, n);
                    st.bres[i] = Some(off);
                    off += n;
                }
            }
        }
        st
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_stage(
        &mut self,
        i: usize,
        io: &StageIo,
        t: &StageTile,
        src: &Src,
        st: &GroupState,
        mids: &mut [Option<Region>],
    ) -> Result<()> {
        let s = &io.spec;
        let a = &s.attrs;
        let (oh, ow) = (len(&t.out_rows), len(&t.out_cols));
        if oh == 0 || ow == 0 {
            return Ok(());
        }
        let oc = s.out_shape.c;
        let hw = self.hw;
        let mid = match &io.output {
            Some(_) => None,
            None => {
                let off = self.slot(mid_bank(i), oh * ow * oc)?;
                let r = Region::dense(mid_bank(i), off, oh, ow, oc);
                mids[i] = Some(r);
                Some(r)
            }
        };
        for (o0, occ) in chunks(oc, hw.oc_p) {
            let out = match mid {
                Some(m) => Region { off: m.off + o0 as u32, c: occ as u16, ..m },
                None => {
                    let off = self.slot(BUF_OUT, oh * ow * occ)?;
                    Region::dense(BUF_OUT, off, oh, ow, occ)
                }
            };
            self.check(&out)?;
            match s.kind {
                k if k.is_conv_family() => {
                    let acc_off = self.slot(BUF_ACC, oh * ow * occ)?;
                    let acc = Region::dense(BUF_ACC, acc_off, oh, ow, occ);
                    let depthwise = k == OpKind::DepthwiseConv;
                    let ic_chunks: Vec<(usize, usize)> = if depthwise {
                        vec![(o0, occ)]
                    } else {
                        chunks(s.in_shape.c, hw.inc_p).collect()
                    };
                    let kk = a.kernel_h * a.kernel_w;
                    let ic_total = s.in_shape.c;
                    let nchunks = ic_chunks.len();
                    for (j, &(c0, icc)) in ic_chunks.iter().enumerate() {
                        let input = self.src_chunk(src, c0, icc)?;
                        self.check(&input)?;
                        let (wgt_off, wgt_ic) = match (st.wres[i], depthwise) {
                            (Some(base), true) => (base + o0 * kk, 1),
                            (Some(base), false) => (base + o0 * kk * ic_total + c0, ic_total),
                            (None, _) => {
                                let wbase = io.weights.ok_or(Error::PlanMiss(0))? as usize;
                                let wic = if depthwise { 1 } else { icc };
                                let off = self.slot(BUF_WGT, occ * kk * wic)?;
                                let t = if depthwise {
                                    Transfer {
                                        ddr: (wbase + o0 * kk) as u32,
                                        buf: BUF_WGT,
                                        boff: off as u32,
                                        len: (occ * kk) as u32,
                                        n1: 1,
                                        n2: 1,
                                        ..Default::default()
                                    }
                                } else {
                                    Transfer {
                                        ddr: (wbase + o0 * kk * ic_total + c0) as u32,
                                        buf: BUF_WGT,
                                        boff: off as u32,
                                        len: icc as u32,
                                        n1: kk as u16,
                                        ds1: ic_total as u32,
                                        bs1: icc as u32,
                                        n2: occ as u16,
                                        ds2: (kk * ic_total) as u32,
                                        bs2: (kk * icc) as u32,
                                    }
                                };
                                self.push(Op::Load(t));
                                (off, wic)
                            }
                        };
                        let fin = j + 1 == nchunks;
                        let bias_off = match (io.bias, st.bres[i]) {
                            (Some(_), Some(base)) => base + o0,
                            (Some(addr), None) if fin => {
                                let off = self.slot(BUF_BIAS, occ)?;
                                self.load_flat(addr as usize + o0, BUF_BIAS, off, occ);
                                off
                            }
                            _ => 0,
                        };
                        let ra = io.r_in as i32 + io.r_w as i32;
                        self.push(Op::Conv(ConvOp {
                            variant: conv_variant(k),
                            kh: a.kernel_h as u8,
                            kw: a.kernel_w as u8,
                            sh: a.stride_h as u8,
                            sw: a.stride_w as u8,
                            dil: a.dilation as u8,
                            pad_t: t.ih.offset as i16,
                            pad_l: t.iw.offset as i16,
                            relu: a.relu,
                            init: j == 0,
                            fin,
                            bias: io.bias.is_some(),
                            bias_shift: (ra - io.r_b as i32) as i8,
                            out_shift: (ra - io.r_out as i32) as i8,
                            input,
                            wgt_off: wgt_off as u32,
                            wgt_ic: wgt_ic as u16,
                            bias_off: bias_off as u32,
                            acc,
                            out,
                        }));
                    }
                }
                OpKind::Pool(pt) => {
                    let input = self.src_chunk(src, o0, occ)?;
                    self.check(&input)?;
                    self.push(Op::Pool(PoolOp {
                        max: pt == crate::ir::PoolType::Max,
                        kh: a.kernel_h as u8,
                        kw: a.kernel_w as u8,
                        sh: a.stride_h as u8,
                        sw: a.stride_w as u8,
                        pad_t: t.ih.offset as i16,
                        pad_l: t.iw.offset as i16,
                        input,
                        out,
                    }));
                }
                OpKind::EltwiseAdd | OpKind::ReLU | OpKind::Upsample | OpKind::Reorg => {
                    let mut m = MiscOp::marker(MiscKind::Relu);
                    m.out = out;
                    match s.kind {
                        OpKind::EltwiseAdd => {
                            let view = io.other.ok_or(Error::PlanMiss(0))?;
                            m.kind = MiscKind::Eltwise;
                            m.a = self.src_chunk(src, o0, occ)?;
                            let off = self.slot(other_bank(i), oh * ow * occ)?;
                            let b = Region::dense(other_bank(i), off, oh, ow, occ);
                            self.push(Op::Load(Emitter::fm_transfer(&view, &t.out_rows, &t.out_cols, o0, occ, b.buf, off)));
                            m.b = b;
                            let rm = io.r_in.max(io.r_other);
                            m.shift_a = rm - io.r_in;
                            m.shift_b = rm - io.r_other;
                            m.out_shift = rm - io.r_out;
                            m.relu = a.relu;
                        }
                        OpKind::ReLU => {
                            m.a = self.src_chunk(src, o0, occ)?;
                        }
                        OpKind::Upsample => {
                            m.kind = MiscKind::Upsample;
                            m.factor = a.scale as u8;
                            m.a = self.src_chunk(src, o0, occ)?;
                            m.pad_t = (t.out_rows.start - t.ih.lo * a.scale) as i16;
                            m.pad_l = (t.out_cols.start - t.iw.lo * a.scale) as i16;
                        }
                        _ => {
                            m.kind = MiscKind::Reorg;
                            m.factor = a.stride_h as u8;
                            m.ch0 = o0 as u16;
                            m.a = self.src_chunk(src, 0, s.in_shape.c)?;
                        }
                    }
                    self.check(&m.a)?;
                    if m.kind == MiscKind::Eltwise {
                        self.check(&m.b)?;
                    }
                    self.push(Op::Misc(m));
                }
                k => {
                    return Err(Error::UnsupportedOp { id: 0, kind: k.to_string() });
                }
            }
            if let Some(view) = &io.output {
                self.save_fm(&out, view, t.out_rows.start, t.out_cols.start, o0);
            }
        }
        Ok(())
    }
}

fn stage_tile(s: &StageSpec, rows: Range<usize>, cols: Range<usize>) -> StageTile {
    let (ih, iw) = if rows.is_empty() || cols.is_empty() {
        let e = InputRange { lo: 0, hi: 0, offset: 0 };
        (e, e)
    } else {
        (
            input_range(s.kind, &s.attrs, Axis::H, rows.start, rows.end, s.in_shape.h),
            input_range(s.kind, &s.attrs, Axis::W, cols.start, cols.end, s.in_shape.w),
        )
    };
    StageTile { out_rows: rows, out_cols: cols, ih, iw }
}

/// Lowers a group for the given tile. Chains list stages in dataflow order;
/// horizontal groups list siblings that read one shared input.
pub fn lower_group(stages: &[StageIo], horizontal: bool, tile: &TileConfig, hw: &HwConfig) -> Result<Vec<Instruction>> {
    if stages.is_empty() {
        return Ok(vec![]);
    }
    if stages.len() > (NUM_MID / 2) as usize {
        return Err(Error::UnsupportedTransform { id: 0, reason: "group has more stages than MID banks".into() });
    }
    let mut em = Emitter { hw, code: vec![], turn: [0; 16] };
    let st = em.prologue(stages);
    let fin = stages.last().unwrap().spec.out_shape;
    let n = stages.len();
    for y0 in (0..fin.h).step_by(tile.t_h.max(1)) {
        for x0 in (0..fin.w).step_by(tile.t_w.max(1)) {
            let rows = y0..(y0 + tile.t_h).min(fin.h);
            let cols = x0..(x0 + tile.t_w).min(fin.w);
            // stage tiles, propagated backward through the chain
            let mut tiles: Vec<Option<StageTile>> = (0..n).map(|_| None).collect();
            for i in (0..n).rev() {
                let (r, c) = match &tiles[i] {
                    Some(t) => (t.out_rows.clone(), t.out_cols.clone()),
                    None => (rows.clone(), cols.clone()),
                };
                let t = stage_tile(&stages[i].spec, r, c);
                if let (false, Some(p)) = (horizontal, stages[i].spec.from_stage) {
                    tiles[p] = Some(stage_tile(&stages[p].spec, t.ih.lo..t.ih.hi, t.iw.lo..t.iw.hi));
                }
                tiles[i] = Some(t);
            }
            let tiles: Vec<StageTile> = tiles.into_iter().map(|t| t.unwrap()).collect();

            // a window shared by horizontal siblings
            let shared = if horizontal {
                let view = stages[0].input.ok_or(Error::PlanMiss(0))?;
                let r = tiles.iter().map(|t| t.ih.lo).min().unwrap()..tiles.iter().map(|t| t.ih.hi).max().unwrap();
                let c = tiles.iter().map(|t| t.iw.lo).min().unwrap()..tiles.iter().map(|t| t.iw.hi).max().unwrap();
                let size = len(&r) * len(&c) * view.c;
                if size <= hw.b_in && size > 0 {
                    let reg = em.load_fm(&view, &r, &c, 0, view.c, BUF_IN)?;
                    Some((reg, r.start, c.start))
                } else {
                    None
                }
            } else {
                None
            };

            let mut mids: Vec<Option<Region>> = vec![None; n];
            for i in 0..n {
                let io = &stages[i];
                let t = &tiles[i];
                let src = match (io.spec.from_stage, io.input) {
                    (Some(p), _) if !horizontal => {
                        let m = mids[p].unwrap_or_else(|| Region::dense(mid_bank(p), 0, 0, 0, stages[p].spec.out_shape.c));
                        Src::Buf(m)
                    }
                    (_, Some(view)) => {
                        let (ir, ic) = (t.ih.lo..t.ih.hi, t.iw.lo..t.iw.hi);
                        match shared {
                            Some((reg, r0, c0)) => {
                                let off = reg.off as usize + ((ir.start - r0) * reg.w as usize + (ic.start - c0)) * view.c;
                                Src::Buf(Region { off: off as u32, h: len(&ir) as u16, w: len(&ic) as u16, ..reg })
                            }
                            None => {
                                let full = len(&ir) * len(&ic) * view.c;
                                if wants_resident(io.spec.kind) && full <= hw.b_in {
                                    Src::Buf(em.load_fm(&view, &ir, &ic, 0, view.c, BUF_IN)?)
                                } else if io.spec.kind == OpKind::Reorg {
                                    return Err(Error::BufferOverflow { buffer: "IN".into(), end: full, capacity: hw.b_in });
                                } else {
                                    Src::Ddr { view, rows: ir, cols: ic }
                                }
                            }
                        }
                    }
                    _ => return Err(Error::PlanMiss(0)),
                };
                em.emit_stage(i, io, t, &src, &st, &mut mids)?;
            }
        }
    }
    Ok(em.code)
}

/// Copies whole tensors into channel slices of `dst` through IN.
pub fn lower_copy(srcs: &[TensorView], dst: &TensorView, hw: &HwConfig) -> Result<Vec<Instruction>> {
    let mut em = Emitter { hw, code: vec![], turn: [0; 16] };
    let mut ch = 0;
    for s in srcs {
        let pixels = s.h * s.w;
        if s.c > hw.b_in {
            return Err(Error::BufferOverflow { buffer: "IN".into(), end: s.c, capacity: hw.b_in });
        }
        let per = (hw.b_in / 2 / s.c).clamp(1, u16::MAX as usize);
        let mut p0 = 0;
        while p0 < pixels {
            let np = per.min(pixels - p0);
            let off = em.slot(BUF_IN, np * s.c)?;
            em.push(Op::Load(Transfer {
                ddr: (s.base as usize + p0 * s.stride + s.ch_off) as u32,
                buf: BUF_IN,
                boff: off as u32,
                len: s.c as u32,
                n1: np as u16,
                ds1: s.stride as u32,
                bs1: s.c as u32,
                n2: 1,
                ..Default::default()
            }));
            em.push(Op::Save(Transfer {
                ddr: (dst.base as usize + p0 * dst.stride + dst.ch_off + ch) as u32,
                buf: BUF_IN,
                boff: off as u32,
                len: s.c as u32,
                n1: np as u16,
                ds1: dst.stride as u32,
                bs1: s.c as u32,
                n2: 1,
                ..Default::default()
            }));
            p0 += np;
        }
        ch += s.c;
    }
    Ok(em.code)
}
