//! Dependency assignment from read/write byte intervals.
//!
//! Each instruction waits on the last writer of every range it reads or
//! writes and on every reader of a range it overwrites. Redundant edges,
//! those implied through another kept edge, are then dropped.

use std::collections::{BTreeMap, BTreeSet};

use crate::isa::*;

/// Address space: 0 is DDR, `1 + b` is on-chip buffer `b`.
pub type Space = u16;
pub type Interval = (Space, usize, usize);

fn region_iv(r: &Region) -> Option<Interval> {
    if r.is_empty() {
        return None;
    }
    let (lo, hi) = r.span();
    let e = elem_bytes(r.buf);
    Some((1 + r.buf as Space, lo * e, hi * e))
}

fn weight_iv(c: &ConvOp) -> Option<Interval> {
    let k = c.kh as usize * c.kw as usize;
    let occ = c.acc.c as usize;
    let icc = if c.variant == ConvVariant::Depthwise { 1 } else { c.input.c as usize };
    if occ == 0 || icc == 0 {
        return None;
    }
    let lo = c.wgt_off as usize;
    let hi = lo + ((occ - 1) * k + k - 1) * c.wgt_ic as usize + icc;
    Some((1 + BUF_WGT as Space, lo, hi))
}

/// Conservative `(reads, writes)` of one instruction.
pub fn accesses(op: &Op) -> (Vec<Interval>, Vec<Interval>) {
    let mut r = vec![];
    let mut w = vec![];
    match op {
        Op::Load(t) if t.bytes() > 0 => {
            let (a, b) = t.ddr_span();
            r.push((0, a, b));
            let (a, b) = t.buf_span();
            w.push((1 + t.buf as Space, a, b));
        }
        Op::Save(t) if t.bytes() > 0 => {
            let (a, b) = t.buf_span();
            r.push((1 + t.buf as Space, a, b));
            let (a, b) = t.ddr_span();
            w.push((0, a, b));
        }
        Op::Conv(c) => {
            r.extend(region_iv(&c.input));
            r.extend(weight_iv(c));
            if !c.init {
                r.extend(region_iv(&c.acc));
            }
            w.extend(region_iv(&c.acc));
            if c.fin {
                if c.bias {
                    let lo = c.bias_off as usize;
                    r.push((1 + BUF_BIAS as Space, lo, lo + c.acc.c as usize));
                }
                w.extend(region_iv(&c.out));
            }
        }
        Op::Pool(p) => {
            r.extend(region_iv(&p.input));
            w.extend(region_iv(&p.out));
        }
        Op::Misc(m) => match m.kind {
            MiscKind::Start | MiscKind::End => {}
            _ => {
                r.extend(region_iv(&m.a));
                if m.kind == MiscKind::Eltwise {
                    r.extend(region_iv(&m.b));
                }
                w.extend(region_iv(&m.out));
            }
        },
        _ => {}
    }
    (r, w)
}

#[derive(Clone, Default)]
struct Seg {
    end: usize,
    writer: Option<u32>,
    readers: Vec<u32>,
}

#[derive(Default)]
struct SpaceMap {
    segs: BTreeMap<usize, Seg>,
}

impl SpaceMap {
    /// Splits segments so `at` is a boundary.
    fn split(&mut self, at: usize) {
        let Some((&start, seg)) = self.segs.range(..at).next_back() else { return };
        if seg.end > at {
            let mut tail = seg.clone();
            self.segs.get_mut(&start).unwrap().end = at;
            tail.end = tail.end.max(at);
            self.segs.insert(at, tail);
        }
    }

    fn overlapping(&self, lo: usize, hi: usize) -> impl Iterator<Item = (&usize, &Seg)> {
        let first = self.segs.range(..=lo).next_back().map(|(&k, _)| k).unwrap_or(lo);
        self.segs.range(first..hi).filter(move |(&s, seg)| s < hi && seg.end > lo)
    }

    /// Makes `[lo, hi)` exactly covered by segments.
    fn cover(&mut self, lo: usize, hi: usize) {
        self.split(lo);
        self.split(hi);
        let mut gaps = vec![];
        let mut cursor = lo;
        for (&s, seg) in self.segs.range(lo..hi) {
            if s > cursor {
                gaps.push((cursor, s));
            }
            cursor = cursor.max(seg.end);
        }
        if cursor < hi {
            gaps.push((cursor, hi));
        }
        for (a, b) in gaps {
            self.segs.insert(a, Seg { end: b, ..Default::default() });
        }
    }

    fn add_reader(&mut self, lo: usize, hi: usize, i: u32) {
        self.cover(lo, hi);
        for (_, seg) in self.segs.range_mut(lo..hi) {
            seg.readers.push(i);
        }
    }

    fn set_writer(&mut self, lo: usize, hi: usize, i: u32) {
        self.cover(lo, hi);
        let keys: Vec<usize> = self.segs.range(lo..hi).map(|(&k, _)| k).collect();
        for k in keys {
            self.segs.remove(&k);
        }
        self.segs.insert(lo, Seg { end: hi, writer: Some(i), readers: vec![] });
    }
}

/// Upper bound on vertices visited per reachability query.
const REDUCE_BUDGET: usize = 1 << 14;

/// Drops candidates reachable from other candidates through kept deps.
fn reduce(deps: &[Vec<u32>], cands: BTreeSet<u32>) -> Vec<u32> {
    let Some(&floor) = cands.iter().next() else { return vec![] };
    let mut covered: BTreeSet<u32> = BTreeSet::new();
    let mut kept = vec![];
    let mut budget = REDUCE_BUDGET;
    for &d in cands.iter().rev() {
        if covered.contains(&d) {
            continue;
        }
        kept.push(d);
        let mut stack: Vec<u32> = deps[d as usize].iter().copied().filter(|&x| x >= floor).collect();
        while let Some(v) = stack.pop() {
            if budget == 0 {
                break;
            }
            if covered.insert(v) {
                budget -= 1;
                stack.extend(deps[v as usize].iter().copied().filter(|&x| x >= floor));
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// Fills in `deps` for every instruction of `stream` in emission order. A
/// MISC end marker waits on every instruction without a successor.
pub fn assign_dependencies(stream: &mut [Instruction]) {
    let mut maps: BTreeMap<Space, SpaceMap> = BTreeMap::new();
    let mut deps: Vec<Vec<u32>> = Vec::with_capacity(stream.len());
    let mut has_succ = vec![false; stream.len()];
    for (i, ins) in stream.iter_mut().enumerate() {
        let i32_ = i as u32;
        let cands: BTreeSet<u32> = if matches!(ins.op, Op::Misc(MiscOp { kind: MiscKind::End, .. })) {
            (0..i).filter(|&j| !has_succ[j]).map(|j| j as u32).collect()
        } else {
            let (reads, writes) = accesses(&ins.op);
            let mut c = BTreeSet::new();
            for &(sp, lo, hi) in &reads {
                let m = maps.entry(sp).or_default();
                c.extend(m.overlapping(lo, hi).filter_map(|(_, s)| s.writer));
            }
            for &(sp, lo, hi) in &writes {
                let m = maps.entry(sp).or_default();
                for (_, s) in m.overlapping(lo, hi) {
                    c.extend(s.writer);
                    c.extend(s.readers.iter().copied());
                }
            }
            for &(sp, lo, hi) in &reads {
                maps.get_mut(&sp).unwrap().add_reader(lo, hi, i32_);
            }
            for &(sp, lo, hi) in &writes {
                maps.get_mut(&sp).unwrap().set_writer(lo, hi, i32_);
            }
            c
        };
        let d = reduce(&deps, cands);
        for &j in &d {
            has_succ[j as usize] = true;
        }
        ins.deps = d.clone();
        deps.push(d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(ddr: u32, buf: u8, off: u32, n: u32) -> Instruction {
        Instruction::new(Op::Load(Transfer { ddr, buf, boff: off, len: n, n1: 1, n2: 1, ..Default::default() }))
    }

    fn relu(a: Region, out: Region) -> Instruction {
        let mut m = MiscOp::marker(MiscKind::Relu);
        m.a = a;
        m.out = out;
        Instruction::new(Op::Misc(m))
    }

    #[test]
    fn load_compute_save_chain() {
        let a = Region::dense(BUF_IN, 0, 1, 1, 8);
        let o = Region::dense(BUF_OUT, 0, 1, 1, 8);
        let mut s = vec![
            load(0, BUF_IN, 0, 8),
            relu(a, o),
            Instruction::new(Op::Save(Transfer { ddr: 64, buf: BUF_OUT, len: 8, n1: 1, n2: 1, ..Default::default() })),
        ];
        assign_dependencies(&mut s);
        assert_eq!(s[1].deps, vec![0]);
        assert_eq!(s[2].deps, vec![1]);
    }

    #[test]
    fn independent_loads_and_war() {
        let mut m = MiscOp::marker(MiscKind::Eltwise);
        m.a = Region::dense(BUF_IN, 0, 1, 1, 8);
        m.b = Region::dense(BUF_MID0, 0, 1, 1, 8);
        m.out = Region::dense(BUF_OUT, 0, 1, 1, 8);
        let mut s = vec![
            load(0, BUF_IN, 0, 8),
            load(8, BUF_MID0, 0, 8),
            Instruction::new(Op::Misc(m)),
            load(16, BUF_IN, 0, 8),
        ];
        assign_dependencies(&mut s);
        assert!(s[0].deps.is_empty() && s[1].deps.is_empty());
        assert_eq!(s[2].deps, vec![0, 1]);
        // overwriting IN waits for the reader; the earlier write is implied
        assert_eq!(s[3].deps, vec![2]);
    }

    #[test]
    fn end_marker_joins_sinks() {
        let mut s = vec![
            load(0, BUF_IN, 0, 8),
            load(8, BUF_WGT, 0, 8),
            Instruction::new(Op::Misc(MiscOp::marker(MiscKind::End))),
        ];
        assign_dependencies(&mut s);
        assert_eq!(s[2].deps, vec![0, 1]);
    }
}
