//! Transaction-level engine simulator, the analytic CTC model and the
//! memoized group evaluator used by the strategy search.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::codegen::{assign_dependencies, lower_group, StageIo, TensorView};
use crate::error::{Error, Result};
use crate::ir::{NodeId, OpKind, TensorShape, XGraph};
use crate::isa::*;
use crate::search::ExecGroup;
use crate::tiling::{GroupSpec, HwConfig, TileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineModel {
    pub ddr_bytes_per_cycle: u64,
    pub conv_macs_per_cycle: u64,
    pub pool_elems_per_cycle: u64,
    pub misc_elems_per_cycle: u64,
    pub issue_overhead: u64,
}

impl EngineModel {
    pub fn from_hw(hw: &HwConfig) -> Self {
        EngineModel {
            ddr_bytes_per_cycle: hw.ddr_bytes_per_cycle.max(1),
            conv_macs_per_cycle: (hw.inc_p * hw.oc_p * hw.h_p).max(1) as u64,
            pool_elems_per_cycle: (hw.h_p * hw.oc_p).max(1) as u64,
            misc_elems_per_cycle: (hw.oc_p * hw.h_p).max(1) as u64,
            issue_overhead: hw.issue_overhead,
        }
    }

    /// Engine occupancy of one instruction.
    pub fn duration(&self, op: &Op) -> u64 {
        let work = match op {
            Op::Load(t) | Op::Save(t) => t.bytes().div_ceil(self.ddr_bytes_per_cycle),
            Op::Conv(c) => instruction_macs(c).div_ceil(self.conv_macs_per_cycle),
            Op::Pool(p) => {
                (p.out.h as u64 * p.out.w as u64 * p.out.c as u64 * p.kh as u64 * p.kw as u64)
                    .div_ceil(self.pool_elems_per_cycle)
            }
            Op::Misc(m) => match m.kind {
                MiscKind::Start | MiscKind::End => 0,
                _ => region_elems(&m.out).div_ceil(self.misc_elems_per_cycle),
            },
        };
        work + self.issue_overhead
    }
}

fn region_elems(r: &Region) -> u64 {
    r.h as u64 * r.w as u64 * r.c as u64
}

/// Multiply-accumulates issued by one CONV instruction. Deconvolutions
/// scatter from their input tile, so they are counted on input extents.
fn instruction_macs(c: &ConvOp) -> u64 {
    let taps = c.kh as u64 * c.kw as u64;
    let ic = if c.variant == ConvVariant::Depthwise { 1 } else { c.input.c as u64 };
    let pixels = if c.variant == ConvVariant::Deconv {
        c.input.h as u64 * c.input.w as u64
    } else {
        c.acc.h as u64 * c.acc.w as u64
    };
    pixels * taps * ic * c.acc.c as u64
}

fn instruction_ops(op: &Op) -> u64 {
    match op {
        Op::Conv(c) => 2 * instruction_macs(c),
        Op::Pool(p) => region_elems(&p.out) * p.kh as u64 * p.kw as u64,
        Op::Misc(m) if !matches!(m.kind, MiscKind::Start | MiscKind::End) => region_elems(&m.out),
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total_cycles: u64,
    /// Busy cycles per engine, keyed by engine name.
    pub busy: Vec<(String, u64)>,
    pub bytes_loaded: u64,
    pub bytes_saved: u64,
    pub a_comp: u64,
    pub ctc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub index: usize,
    pub engine: Engine,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub report: CostReport,
    pub spans: Vec<Span>,
}

/// Schedules `stream` on in-order engines. Each instruction starts when its
/// engine is free and all of its dependencies have completed. With `serial`
/// the engines share a single issue slot, which disables all overlap.
pub fn simulate_trace(stream: &[Instruction], model: &EngineModel, serial: bool) -> Result<Schedule> {
    let n = stream.len();
    let lane = |i: usize| if serial { 0 } else { stream[i].op.engine().index() };
    let mut queues: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); Engine::ALL.len()];
    for i in 0..n {
        for &d in &stream[i].deps {
            if d as usize >= n {
                return Err(Error::Deadlock(i));
            }
        }
        queues[lane(i)].push_back(i);
    }
    let mut finish: Vec<Option<u64>> = vec![None; n];
    let mut free = vec![0u64; Engine::ALL.len()];
    let mut spans = Vec::with_capacity(n);
    let mut done = 0;
    while done < n {
        let mut progressed = false;
        for q in 0..queues.len() {
            while let Some(&i) = queues[q].front() {
                let ready = stream[i].deps.iter().try_fold(0u64, |acc, &d| finish[d as usize].map(|f| acc.max(f)));
                let Some(ready) = ready else { break };
                let start = ready.max(free[q]);
                let end = start + model.duration(&stream[i].op);
                free[q] = end;
                finish[i] = Some(end);
                spans.push(Span { index: i, engine: stream[i].op.engine(), start, end });
                queues[q].pop_front();
                done += 1;
                progressed = true;
            }
        }
        if !progressed {
            let stuck = queues.iter().filter_map(|q| q.front().copied()).min().unwrap_or(0);
            return Err(Error::Deadlock(stuck));
        }
    }
    spans.sort_by_key(|s| (s.start, s.index));

    let mut busy = vec![0u64; Engine::ALL.len()];
    let (mut loaded, mut saved, mut a_comp) = (0, 0, 0);
    for (i, ins) in stream.iter().enumerate() {
        let d = finish[i].unwrap() - spans.iter().find(|s| s.index == i).map_or(0, |s| s.start);
        busy[ins.op.engine().index()] += d;
        match &ins.op {
            Op::Load(t) => loaded += t.bytes(),
            Op::Save(t) => saved += t.bytes(),
            op => a_comp += instruction_ops(op),
        }
    }
    let moved = loaded + saved;
    let report = CostReport {
        total_cycles: finish.iter().map(|f| f.unwrap()).max().unwrap_or(0),
        busy: Engine::ALL.iter().map(|e| (e.name().to_string(), busy[e.index()])).collect(),
        bytes_loaded: loaded,
        bytes_saved: saved,
        a_comp,
        ctc: if moved == 0 { 0.0 } else { a_comp as f64 / moved as f64 },
    };
    Ok(Schedule { report, spans })
}

pub fn simulate(stream: &[Instruction], model: &EngineModel) -> Result<CostReport> {
    simulate_trace(stream, model, false).map(|s| s.report)
}

/// Per-engine timeline, one row per engine, `width` columns wide, followed
/// by the span list.
pub fn gantt(stream: &[Instruction], sched: &Schedule, width: usize) -> String {
    let total = sched.report.total_cycles.max(1);
    let width = width.max(10);
    let mut out = String::new();
    let _ = writeln!(out, "cycles 0..{total}, {} cycles per column", total.div_ceil(width as u64));
    for e in Engine::ALL {
        let mut row = vec![b'.'; width];
        for s in sched.spans.iter().filter(|s| s.engine == e && s.end > s.start) {
            let a = (s.start as u128 * width as u128 / total as u128) as usize;
            let b = ((s.end as u128 * width as u128).div_ceil(total as u128) as usize).clamp(a + 1, width);
            row[a.min(width - 1)..b].fill(b'#');
        }
        let _ = writeln!(out, "{:<5}|{}|", e.name(), String::from_utf8(row).unwrap());
    }
    for s in &sched.spans {
        let _ = writeln!(
            out,
            "{:>10} {:>10}  {:<5} #{:05} {}",
            s.start,
            s.end,
            s.engine.name(),
            s.index,
            stream[s.index].op.mnemonic()
        );
    }
    out
}

/// Operation count of a convolution: `2·Kw·Kh·IC·OC·H·W` on output extents.
pub fn conv_macs(in_shape: &TensorShape, kind: OpKind, kernel: (usize, usize), out: &TensorShape) -> u64 {
    let ic = if kind == OpKind::DepthwiseConv { 1 } else { in_shape.c };
    2 * (kernel.0 * kernel.1 * ic * out.c * out.h * out.w) as u64
}

/// Operations attributed to one vertex.
pub fn vertex_ops(g: &XGraph, id: NodeId) -> u64 {
    let n = g.node(id);
    let out = n.output_shape;
    match n.kind {
        k if k.is_conv_family() => {
            conv_macs(&g.tensor_shape(n.inputs[0]), k, (n.attrs.kernel_h, n.attrs.kernel_w), &out)
        }
        OpKind::Pool(_) => (out.elements() * n.attrs.kernel_h * n.attrs.kernel_w) as u64,
        OpKind::FullyConnected => 2 * (g.tensor_shape(n.inputs[0]).elements() * out.c) as u64,
        k if k.is_computation() && k != OpKind::Concat => out.elements() as u64,
        _ => 0,
    }
}

/// Bytes a vertex exchanges with DDR when run alone: every input, every
/// parameter and its output.
pub fn vertex_bytes(g: &XGraph, id: NodeId) -> u64 {
    let n = g.node(id);
    let inputs: usize = n.inputs.iter().map(|&t| g.tensor_shape(t).elements()).sum();
    let params: usize = n.params.iter().map(|p| g.params[p].data.len()).sum();
    (inputs + params + n.output_shape.elements()) as u64
}

/// DDR bytes a group avoids relative to running its members one by one:
/// each in-group intermediate is neither saved nor reloaded, and horizontal
/// siblings read their shared input once.
pub fn intermediate_bytes(g: &XGraph, group: &ExecGroup) -> u64 {
    if group.horizontal {
        let shared = g.tensor_shape(g.node(group.members[0]).inputs[0]).elements() as u64;
        return shared * (group.members.len() as u64 - 1);
    }
    let mut saved = 0;
    for &m in &group.members {
        let n = g.node(m);
        if n.save.is_some() {
            continue;
        }
        let reads = group.members.iter().filter(|&&c| g.node(c).inputs.contains(&m)).count();
        if reads > 0 {
            saved += 2 * n.output_shape.elements() as u64;
        }
    }
    saved
}

/// Analytic computation-to-communication ratio of a schedule. Unfused, every
/// vertex pays its full traffic; fused, the intermediate traffic of each
/// group is removed from the denominator.
pub fn compute_ctc(g: &XGraph, groups: &[ExecGroup], fused: bool) -> f64 {
    let mut ops = 0u64;
    let mut bytes = 0u64;
    for grp in groups {
        for &m in &grp.members {
            ops += vertex_ops(g, m);
            bytes += vertex_bytes(g, m);
        }
        if fused {
            bytes -= intermediate_bytes(g, grp);
        }
    }
    if bytes == 0 {
        0.0
    } else {
        ops as f64 / bytes as f64
    }
}

/// Costing operands laid out back to back in a scratch DDR space so that
/// unrelated transfers never alias.
fn synthetic_stages(spec: &GroupSpec) -> Vec<StageIo> {
    let mut next = 0u32;
    let mut take = |s: TensorShape| {
        let base = next;
        next += (s.elements() as u32).next_multiple_of(16);
        TensorView::dense(base, s)
    };
    let shared = spec.horizontal.then(|| take(spec.stages[0].in_shape));
    let n = spec.stages.len();
    let stages: Vec<StageIo> = spec
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut io = StageIo::synthetic(s, spec.horizontal || i + 1 == n);
            io.input = match (shared, io.input) {
                (Some(v), _) => Some(v),
                (None, Some(_)) => Some(take(s.in_shape)),
                (None, None) => None,
            };
            io.other = io.other.map(|_| take(s.out_shape));
            io.output = io.output.map(|_| take(s.out_shape));
            io
        })
        .collect();
    let mut stages = stages;
    for io in &mut stages {
        if io.weights.is_some() {
            let ic = if io.spec.kind == OpKind::DepthwiseConv { 1 } else { io.spec.in_shape.c };
            let w = io.spec.attrs.kernel_h * io.spec.attrs.kernel_w * ic * io.spec.out_shape.c;
            io.weights = Some(take(TensorShape::new(1, 1, w)).base);
            io.bias = Some(take(TensorShape::new(1, 1, io.spec.out_shape.c)).base);
        }
    }
    stages
}

/// Lowers a group on synthetic operands with start/end markers and
/// dependencies, ready for simulation.
pub fn group_stream(spec: &GroupSpec, tile: &TileConfig, hw: &HwConfig) -> Result<Vec<Instruction>> {
    let body = lower_group(&synthetic_stages(spec), spec.horizontal, tile, hw)?;
    let mut stream = Vec::with_capacity(body.len() + 2);
    stream.push(Instruction { op: Op::Misc(MiscOp::marker(MiscKind::Start)), deps: vec![] });
    stream.extend(body);
    stream.push(Instruction { op: Op::Misc(MiscOp::marker(MiscKind::End)), deps: vec![] });
    assign_dependencies(&mut stream);
    Ok(stream)
}

type MemoKey = (GroupSpec, TileConfig, HwConfig);

fn memo() -> &'static Mutex<HashMap<MemoKey, u64>> {
    static MEMO: OnceLock<Mutex<HashMap<MemoKey, u64>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

/// Simulated cycles of one group, memoized on its structure.
pub fn evaluate_group(spec: &GroupSpec, tile: &TileConfig, hw: &HwConfig) -> Result<u64> {
    let key = (spec.clone(), tile.clone(), hw.clone());
    if let Some(&c) = memo().lock().unwrap().get(&key) {
        return Ok(c);
    }
    let stream = group_stream(spec, tile, hw)?;
    let cycles = simulate(&stream, &EngineModel::from_hw(hw))?.total_cycles;
    memo().lock().unwrap().insert(key, cycles);
    Ok(cycles)
}

pub fn memo_len() -> usize {
    memo().lock().unwrap().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(bytes: u32, deps: Vec<u32>) -> Instruction {
        Instruction {
            op: Op::Load(Transfer { len: bytes, n1: 1, n2: 1, ..Default::default() }),
            deps,
        }
    }

    #[test]
    fn single_load_duration() {
        let hw = HwConfig::zu2();
        let m = EngineModel::from_hw(&hw);
        let r = simulate(&[load(1001, vec![])], &m).unwrap();
        assert_eq!(r.total_cycles, 1001u64.div_ceil(hw.ddr_bytes_per_cycle) + hw.issue_overhead);
    }

    #[test]
    fn conv_macs_reference() {
        let i = TensorShape::new(28, 28, 32);
        let o = TensorShape::new(28, 28, 256);
        assert_eq!(conv_macs(&i, OpKind::Conv, (5, 5), &o), 321_126_400);
        let one = TensorShape::new(1, 1, 1);
        assert_eq!(conv_macs(&one, OpKind::Conv, (1, 1), &one), 2);
    }

    #[test]
    fn cyclic_deps_deadlock() {
        let s = vec![load(4, vec![1]), load(4, vec![0])];
        assert!(matches!(simulate(&s, &EngineModel::from_hw(&HwConfig::zu2())), Err(Error::Deadlock(_))));
    }

    #[test]
    fn serial_flag_sums_durations() {
        let m = EngineModel::from_hw(&HwConfig::zu2());
        let save = Instruction { op: Op::Save(Transfer { len: 64, n1: 1, n2: 1, ..Default::default() }), deps: vec![] };
        let s = vec![load(64, vec![]), save];
        let par = simulate_trace(&s, &m, false).unwrap().report.total_cycles;
        let ser = simulate_trace(&s, &m, true).unwrap().report.total_cycles;
        assert_eq!(ser, m.duration(&s[0].op) + m.duration(&s[1].op));
        assert!(par < ser);
    }
}
