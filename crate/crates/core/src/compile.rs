//! End-to-end pipeline: normalization, candidate matching, costing,
//! strategy selection and code generation, plus the stream-versus-graph
//! verifier.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::codegen::{allocate_ddr, assign_dependencies, lower_copy, lower_group, DdrPlan, StageIo, TensorView};
use crate::error::{Error, Result};
use crate::exec::{calibrate, run_graph, run_stream, QuantModel};
use crate::fusion::{builtin_catalog, enumerate_candidates, CandidateGroup, FusionTemplate};
use crate::ir::{normalize, NodeId, OpKind, TensorId, XGraph};
use crate::isa::{Instruction, MiscKind, MiscOp, Op};
use crate::search::{baseline_strategy, greedy_strategy, price_group, select_strategy, ExecGroup, Strategy};
use crate::tiling::{solve_tile_config, GroupSpec, HwConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    None,
    Greedy,
    Optimal,
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub hw: HwConfig,
    pub strategy: StrategyKind,
    pub templates: Vec<FusionTemplate>,
}

impl CompileOptions {
    pub fn new(hw: HwConfig, strategy: StrategyKind) -> Self {
        CompileOptions { hw, strategy, templates: builtin_catalog() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub graph_generation: Duration,
    pub isomorphism_fusion: Duration,
    pub evaluation: Duration,
    pub auto_tuning: Duration,
}

impl PhaseTimes {
    pub fn summary(&self) -> String {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        format!(
            "graph generation {:.3} ms\nisomorphism fusion {:.3} ms\nevaluation {:.3} ms\nauto tuning {:.3} ms\n",
            ms(self.graph_generation),
            ms(self.isomorphism_fusion),
            ms(self.evaluation),
            ms(self.auto_tuning)
        )
    }
}

/// A lowered program and the DDR layout it assumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Program {
    pub stream: Vec<Instruction>,
    pub plan: DdrPlan,
    /// Half-open instruction index range of each strategy group.
    pub group_ranges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Compilation {
    pub graph: XGraph,
    pub warnings: Vec<String>,
    pub candidates: Vec<CandidateGroup>,
    pub strategy: Strategy,
    pub qm: QuantModel,
    pub program: Program,
    pub times: PhaseTimes,
}

/// Deterministic calibration data in `[-1, 1)` for every graph input.
pub fn calibration_inputs(g: &XGraph) -> BTreeMap<NodeId, Vec<f32>> {
    g.input_nodes()
        .into_iter()
        .map(|id| {
            let n = g.node(id).output_shape.elements();
            let data = (0..n)
                .map(|i| {
                    let h = (i as u64 ^ (id as u64) << 32).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    ((h >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
                })
                .collect();
            (id, data)
        })
        .collect()
}

fn tensor_view(g: &XGraph, plan: &DdrPlan, t: TensorId) -> Result<TensorView> {
    Ok(TensorView::dense(plan.tensor(t)?.base, g.tensor_shape(t)))
}

/// Where a vertex's result lands in DDR, honouring strided concat saves.
fn output_view(g: &XGraph, plan: &DdrPlan, id: NodeId) -> Result<TensorView> {
    let n = g.node(id);
    match n.save {
        None => tensor_view(g, plan, id),
        Some(slot) => {
            let full = g.tensor_shape(slot.tensor);
            let s = n.output_shape;
            Ok(TensorView {
                base: plan.tensor(slot.tensor)?.base,
                h: s.h,
                w: s.w,
                c: s.c,
                stride: full.c,
                ch_off: slot.channel_offset,
            })
        }
    }
}

/// Operand addresses and radices for every stage of a group.
pub fn build_stage_io(g: &XGraph, grp: &ExecGroup, plan: &DdrPlan, qm: &QuantModel) -> Result<Vec<StageIo>> {
    let spec = GroupSpec::from_graph(g, &grp.members, grp.horizontal);
    let radix = |t: TensorId| qm.radix.get(&t).copied().ok_or(Error::PlanMiss(t));
    let last = grp.members.len() - 1;
    grp.members
        .iter()
        .zip(spec.stages)
        .enumerate()
        .map(|(i, (&id, spec))| {
            let n = g.node(id);
            let primary = match spec.from_stage {
                Some(p) => grp.members[p],
                None => n.inputs[0],
            };
            let other_t = n.inputs.iter().copied().find(|&t| t != primary).or_else(|| n.inputs.get(1).copied());
            let other_t = if n.kind == OpKind::EltwiseAdd { other_t } else { None };
            let param = |k: usize| -> Result<Option<(u32, &crate::exec::quant::QParam)>> {
                n.params.get(k).map(|name| Ok((plan.param(name)?.base, &qm.params[name]))).transpose()
            };
            let w = param(0)?;
            let b = param(1)?;
            Ok(StageIo {
                input: if spec.from_stage.is_none() { Some(tensor_view(g, plan, primary)?) } else { None },
                other: other_t.map(|t| tensor_view(g, plan, t)).transpose()?,
                output: if grp.horizontal || i == last { Some(output_view(g, plan, id)?) } else { None },
                weights: w.map(|(a, _)| a),
                bias: b.map(|(a, _)| a),
                r_in: radix(primary)?,
                r_other: other_t.map(radix).transpose()?.unwrap_or(0),
                r_out: radix(n.output_tensor())?,
                r_w: w.map_or(0, |(_, q)| q.radix),
                r_b: b.map_or(0, |(_, q)| q.radix),
                spec,
            })
        })
        .collect()
}

fn marker(kind: MiscKind) -> Instruction {
    Instruction { op: Op::Misc(MiscOp::marker(kind)), deps: vec![] }
}

/// Allocates DDR for the strategy and lowers every group into one stream
/// framed by start and end markers.
pub fn assemble(g: &XGraph, strategy: &Strategy, qm: &QuantModel, hw: &HwConfig) -> Result<Program> {
    let steps: Vec<Vec<NodeId>> = strategy.groups.iter().map(|grp| grp.members.clone()).collect();
    let plan = allocate_ddr(g, &steps)?;
    let mut stream = vec![marker(MiscKind::Start)];
    let mut group_ranges = vec![];
    for (k, grp) in strategy.groups.iter().enumerate() {
        let start = stream.len();
        let n = g.node(grp.members[0]);
        let code = if grp.members.len() == 1 && n.kind == OpKind::Concat {
            let srcs = n.inputs.iter().map(|&t| tensor_view(g, &plan, t)).collect::<Result<Vec<_>>>()?;
            lower_copy(&srcs, &output_view(g, &plan, n.id)?, hw)?
        } else {
            let tile = match strategy.tiles.get(k).cloned().flatten() {
                Some(t) => t,
                None => solve_tile_config(&GroupSpec::from_graph(g, &grp.members, grp.horizontal), hw)
                    .ok_or_else(|| Error::Infeasible(grp.members.clone()))?,
            };
            let stages = build_stage_io(g, grp, &plan, qm)?;
            lower_group(&stages, grp.horizontal, &tile, hw)?
        };
        stream.extend(code);
        group_ranges.push((start, stream.len()));
    }
    stream.push(marker(MiscKind::End));
    assign_dependencies(&mut stream);
    Ok(Program { stream, plan, group_ranges })
}

/// DDR image holding quantized parameters and inputs at their planned
/// addresses.
pub fn initial_ddr(g: &XGraph, plan: &DdrPlan, qm: &QuantModel) -> Result<Vec<u8>> {
    let mut ddr = vec![0u8; plan.total_bytes];
    let mut put = |base: u32, data: &[i8]| {
        for (k, &v) in data.iter().enumerate() {
            ddr[base as usize + k] = v as u8;
        }
    };
    for (name, r) in &plan.params {
        put(r.base, &qm.params[name].data);
    }
    for id in g.input_nodes() {
        if let Some(r) = plan.tensors.get(&id) {
            let data = qm.inputs.get(&id).ok_or(Error::PlanMiss(id))?;
            put(r.base, data);
        }
    }
    Ok(ddr)
}

/// Accelerated result tensors read back from a DDR image.
pub fn read_results(g: &XGraph, plan: &DdrPlan, ddr: &[u8]) -> BTreeMap<TensorId, Vec<i8>> {
    g.result_tensors()
        .into_iter()
        .filter_map(|t| {
            let r = plan.tensors.get(&t)?;
            Some((t, ddr[r.base as usize..r.end()].iter().map(|&b| b as i8).collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verification {
    Pass,
    Mismatch { tensor: TensorId, offset: usize, expected: i8, actual: i8 },
}

/// Runs the stream and the graph interpreter and compares every result
/// tensor byte by byte. `offset` counts bytes across the results in tensor
/// id order.
pub fn verify(g: &XGraph, program: &Program, qm: &QuantModel, hw: &HwConfig) -> Result<Verification> {
    let (want, _) = run_graph(g, qm)?;
    let ddr = run_stream(&program.stream, &program.plan, initial_ddr(g, &program.plan, qm)?, hw)?;
    let got = read_results(g, &program.plan, &ddr);
    let mut offset = 0;
    for (t, actual) in &got {
        let expected = want.get(t).ok_or(Error::PlanMiss(*t))?;
        if let Some(k) = (0..expected.len()).find(|&k| actual.get(k) != Some(&expected[k])) {
            return Ok(Verification::Mismatch {
                tensor: *t,
                offset: offset + k,
                expected: expected[k],
                actual: actual.get(k).copied().unwrap_or(0),
            });
        }
        offset += expected.len();
    }
    Ok(Verification::Pass)
}

/// Picks a strategy of the requested kind.
pub fn choose_strategy(g: &XGraph, candidates: &[CandidateGroup], hw: &HwConfig, kind: StrategyKind) -> Result<Strategy> {
    match kind {
        StrategyKind::None => baseline_strategy(g, hw),
        StrategyKind::Greedy => greedy_strategy(g, candidates, hw),
        StrategyKind::Optimal => select_strategy(g, candidates, hw),
    }
}

pub fn compile(raw: &XGraph, opts: &CompileOptions) -> Result<Compilation> {
    opts.hw.check()?;
    let t0 = Instant::now();
    let (graph, unfolded) = normalize(raw).map_err(|e| e.in_phase("normalize"))?;
    let warnings: Vec<String> = unfolded.iter().map(|e| e.to_string()).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let qm = calibrate(&graph, &calibration_inputs(&graph)).map_err(|e| e.in_phase("calibrate"))?;
    let t1 = Instant::now();
    let candidates = enumerate_candidates(&graph, &opts.templates, &opts.hw);
    log::info!("{} fusion candidates", candidates.len());
    let t2 = Instant::now();
    if opts.strategy != StrategyKind::None {
        for c in candidates.iter().filter(|c| c.fits_onchip) {
            price_group(&graph, &ExecGroup { members: c.members.clone(), horizontal: c.horizontal }, &opts.hw);
        }
    }
    for id in crate::search::accelerated_vertices(&graph) {
        price_group(&graph, &ExecGroup::single(id), &opts.hw);
    }
    let t3 = Instant::now();
    let strategy = choose_strategy(&graph, &candidates, &opts.hw, opts.strategy).map_err(|e| e.in_phase("strategy"))?;
    let t4 = Instant::now();
    let program = assemble(&graph, &strategy, &qm, &opts.hw).map_err(|e| e.in_phase("codegen"))?;
    Ok(Compilation {
        graph,
        warnings,
        candidates,
        strategy,
        qm,
        program,
        times: PhaseTimes {
            graph_generation: t1 - t0,
            isomorphism_fusion: t2 - t1,
            evaluation: t3 - t2,
            auto_tuning: t4 - t3,
        },
    })
}

/// Human-readable listing of the fused groups of a strategy.
pub fn strategy_report(g: &XGraph, s: &Strategy) -> String {
    let mut out = String::new();
    let fused: Vec<(usize, &ExecGroup)> = s.groups.iter().enumerate().filter(|(_, grp)| grp.is_fused()).collect();
    if fused.is_empty() {
        out.push_str("no fusion applied\n");
    }
    for (k, grp) in fused {
        let names: Vec<String> = grp.members.iter().map(|&m| format!("{}({})", g.node(m).name, g.node(m).kind)).collect();
        let _ = writeln!(
            out,
            "group {k}: {}{} cycles={}",
            if grp.horizontal { "horizontal " } else { "" },
            names.join(" -> "),
            s.group_cycles.get(k).copied().unwrap_or(0)
        );
    }
    let _ = writeln!(out, "groups {} (fused {}), predicted cycles {}", s.groups.len(), s.fused_groups().count(), s.total_cycles);
    out
}
