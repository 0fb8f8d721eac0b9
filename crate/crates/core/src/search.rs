//! Strategy search: barrier partitioning, per-branch shortest paths over cut
//! points, and enumeration of barrier absorption and horizontal fusion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::codegen::{assign_dependencies, lower_copy, TensorView};
use crate::fusion::{is_fusible, CandidateGroup};
use crate::ir::{NodeId, OpKind, TensorId, TensorShape, XGraph};
use crate::sim::{evaluate_group, simulate, EngineModel};
use crate::tiling::{solve_tile_config, GroupSpec, HwConfig, TileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BarrierReason {
    FanIn,
    FanOut,
    Sentinel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Barrier {
    pub id: NodeId,
    pub reason: BarrierReason,
}

pub fn barrier_reason(g: &XGraph, id: NodeId) -> Option<BarrierReason> {
    let n = g.node(id);
    if !n.kind.is_computation() {
        Some(BarrierReason::Sentinel)
    } else if g.in_degree(id) > 1 {
        Some(BarrierReason::FanIn)
    } else if g.out_degree(id) > 1 {
        Some(BarrierReason::FanOut)
    } else {
        None
    }
}

pub fn is_barrier(g: &XGraph, id: NodeId) -> bool {
    barrier_reason(g, id).is_some()
}

/// All barriers in ascending id order.
pub fn find_barriers(g: &XGraph) -> Vec<Barrier> {
    g.nodes
        .keys()
        .filter_map(|&id| barrier_reason(g, id).map(|reason| Barrier { id, reason }))
        .collect()
}

/// One execution unit of a strategy: a single vertex, a fused chain in
/// dataflow order, or horizontal siblings in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExecGroup {
    pub members: Vec<NodeId>,
    pub horizontal: bool,
}

impl ExecGroup {
    pub fn single(id: NodeId) -> Self {
        ExecGroup { members: vec![id], horizontal: false }
    }

    pub fn is_fused(&self) -> bool {
        self.members.len() > 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    /// Groups in an order that respects dataflow.
    pub groups: Vec<ExecGroup>,
    pub group_cycles: Vec<u64>,
    pub total_cycles: u64,
    pub tiles: Vec<Option<TileConfig>>,
}

impl Strategy {
    pub fn fused_groups(&self) -> impl Iterator<Item = &ExecGroup> {
        self.groups.iter().filter(|g| g.is_fused())
    }
}

/// Cost of a path: cycles, then number of groups, compared in that order.
pub type PathCost = (u64, u32);

fn add(a: PathCost, b: PathCost) -> PathCost {
    (a.0.saturating_add(b.0), a.1 + b.1)
}

/// Weighted cut-point graph of one segment. Cut `i` sits before the
/// segment's `i`-th vertex; an edge `i -> j` executes vertices `i..j` as
/// one group.
#[derive(Debug, Clone)]
pub struct CostGraph {
    pub cost: Vec<Vec<Option<PathCost>>>,
    pub group: Vec<Vec<Option<ExecGroup>>>,
}

impl CostGraph {
    fn new(cuts: usize) -> Self {
        CostGraph { cost: vec![vec![None; cuts]; cuts], group: vec![vec![None; cuts]; cuts] }
    }

    fn set(&mut self, i: usize, j: usize, c: PathCost, grp: ExecGroup) {
        if self.cost[i][j].is_none_or(|old| c < old) {
            self.cost[i][j] = Some(c);
            self.group[i][j] = Some(grp);
        }
    }
}

/// All-pairs shortest paths by triple-loop relaxation. Returns the distance
/// matrix and, for each pair, the cut preceding the destination on the
/// chosen path.
pub fn floyd(cg: &CostGraph) -> (Vec<Vec<Option<PathCost>>>, Vec<Vec<usize>>) {
    let n = cg.cost.len();
    let mut d = cg.cost.clone();
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some((0, 0));
    }
    let mut pred: Vec<Vec<usize>> = (0..n).map(|i| vec![i; n]).collect();
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            for j in 0..n {
                let Some(kj) = d[k][j] else { continue };
                let c = add(ik, kj);
                if d[i][j].is_none_or(|old| c < old) {
                    d[i][j] = Some(c);
                    pred[i][j] = pred[k][j];
                }
            }
        }
    }
    (d, pred)
}

/// Cheapest cost from cut `from` to cut `to` and the cuts along the path.
pub fn floyd_shortest(cg: &CostGraph, from: usize, to: usize) -> Option<(PathCost, Vec<usize>)> {
    let (d, pred) = floyd(cg);
    let c = d[from][to]?;
    Some((c, walk(&pred, from, to)))
}

fn walk(pred: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = pred[from][cur];
        path.push(cur);
    }
    path.reverse();
    path
}

/// Computation vertices the accelerator executes.
pub fn accelerated_vertices(g: &XGraph) -> Vec<NodeId> {
    let acc: BTreeSet<TensorId> = crate::exec::quant::accelerated_tensors(g).into_iter().collect();
    g.nodes
        .values()
        .filter(|n| n.kind.is_computation() && acc.contains(&n.output_tensor()))
        .map(|n| n.id)
        .collect()
}

/// A maximal run of non-barrier vertices linked by exclusive edges.
#[derive(Debug, Clone)]
struct Segment {
    vertices: Vec<NodeId>,
    /// Computation barrier fed by the last vertex.
    sink: Option<NodeId>,
}

fn segments(g: &XGraph, vertices: &BTreeSet<NodeId>) -> Vec<Segment> {
    let linked = |u: NodeId| -> Option<NodeId> {
        let s = g.succs(u);
        let &[v] = s.as_slice() else { return None };
        (vertices.contains(&v) && !is_barrier(g, v) && g.is_exclusive_edge(u, v)).then_some(v)
    };
    let inner: BTreeSet<NodeId> = vertices.iter().copied().filter(|&v| !is_barrier(g, v)).collect();
    let has_pred: BTreeSet<NodeId> = inner.iter().filter_map(|&u| linked(u)).collect();
    let mut out = vec![];
    for &h in &inner {
        if has_pred.contains(&h) {
            continue;
        }
        let mut vs = vec![h];
        while let Some(v) = linked(*vs.last().unwrap()) {
            vs.push(v);
        }
        let last = *vs.last().unwrap();
        let sink = match g.succs(last).as_slice() {
            &[d] if vertices.contains(&d) && is_barrier(g, d) => Some(d),
            _ => None,
        };
        out.push(Segment { vertices: vs, sink });
    }
    out
}

struct SegmentCosts {
    /// `[head_taken]` cost and path when the segment ends at its last vertex.
    open: [Option<(PathCost, Vec<ExecGroup>)>; 2],
    /// Same, with the sink barrier absorbed into the final group.
    absorbed: [Option<(PathCost, Vec<ExecGroup>)>; 2],
}

fn path_groups(cg: &CostGraph, path: &[usize]) -> Vec<ExecGroup> {
    path.windows(2).map(|w| cg.group[w[0]][w[1]].clone().unwrap()).collect()
}

/// A decision coupling segments: which horizontal groups to form at one
/// source, or which incoming segment absorbs one barrier.
enum Decision {
    Pack { options: Vec<Vec<usize>> },
    Absorb { barrier: NodeId, feeders: Vec<usize> },
}

impl Decision {
    fn len(&self) -> usize {
        match self {
            Decision::Pack { options } => options.len(),
            Decision::Absorb { feeders, .. } => feeders.len() + 1,
        }
    }
}

/// Every set of pairwise-disjoint candidates drawn from `cands`.
fn packings(cands: &[(usize, &ExecGroup)]) -> Vec<Vec<usize>> {
    fn rec(cands: &[(usize, &ExecGroup)], i: usize, used: &mut BTreeSet<NodeId>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cands.len() {
            out.push(cur.clone());
            return;
        }
        rec(cands, i + 1, used, cur, out);
        let (idx, grp) = cands[i];
        if grp.members.iter().all(|m| !used.contains(m)) {
            used.extend(grp.members.iter().copied());
            cur.push(idx);
            rec(cands, i + 1, used, cur, out);
            cur.pop();
            grp.members.iter().for_each(|m| {
                used.remove(m);
            });
        }
    }
    let mut out = vec![];
    rec(cands, 0, &mut BTreeSet::new(), &mut vec![], &mut out);
    out
}

/// Upper bound on the joint choices enumerated for one coupled component.
const COMBO_BUDGET: usize = 1 << 20;

/// Cheapest partition of the accelerated vertices into singletons and
/// groups from `candidates`. `cost` prices a group and returns `None` when
/// it cannot execute.
pub fn solve_with<F>(g: &XGraph, candidates: &[ExecGroup], mut cost: F) -> Result<Strategy>
where
    F: FnMut(&ExecGroup) -> Option<u64>,
{
    let vertices: BTreeSet<NodeId> = accelerated_vertices(g).into_iter().collect();
    let segs = segments(g, &vertices);
    let mut seg_of: BTreeMap<NodeId, (usize, usize)> = BTreeMap::new();
    for (s, seg) in segs.iter().enumerate() {
        for (i, &v) in seg.vertices.iter().enumerate() {
            seg_of.insert(v, (s, i));
        }
    }
    let mut price = |grp: &ExecGroup| -> Option<PathCost> { cost(grp).map(|c| (c, 1)) };
    let single = |price: &mut dyn FnMut(&ExecGroup) -> Option<PathCost>, id: NodeId| {
        price(&ExecGroup::single(id)).ok_or_else(|| Error::Infeasible(vec![id]))
    };

    // classify candidates
    let mut chains: Vec<Vec<(usize, usize, bool, &ExecGroup)>> = vec![vec![]; segs.len()];
    let mut horizontals: BTreeMap<TensorId, Vec<(usize, &ExecGroup)>> = BTreeMap::new();
    for (ci, c) in candidates.iter().enumerate() {
        if c.members.len() < 2 || !c.members.iter().all(|m| vertices.contains(m)) {
            continue;
        }
        if c.horizontal {
            let heads = c.members.iter().all(|m| seg_of.get(m).is_some_and(|&(_, i)| i == 0));
            if heads && is_fusible(g, &c.members, true) {
                horizontals.entry(g.node(c.members[0]).inputs[0]).or_default().push((ci, c));
            } else {
                log::warn!("ignoring horizontal candidate {:?}", c.members);
            }
            continue;
        }
        let Some(&(s, i)) = seg_of.get(&c.members[0]) else { continue };
        let seg = &segs[s];
        let body = c.members.len() - 1;
        let tail = *c.members.last().unwrap();
        let contiguous = |len: usize| seg.vertices.get(i..i + len) == Some(&c.members[..len]);
        if contiguous(c.members.len()) {
            chains[s].push((i, i + c.members.len(), false, c));
        } else if contiguous(body) && i + body == seg.vertices.len() && seg.sink == Some(tail) {
            chains[s].push((i, seg.vertices.len() + 1, true, c));
        } else {
            log::warn!("ignoring chain candidate {:?}", c.members);
        }
    }

    // per-segment shortest paths for each head/tail mode
    let mut seg_costs = Vec::with_capacity(segs.len());
    for (s, seg) in segs.iter().enumerate() {
        let n = seg.vertices.len();
        let mut cg = CostGraph::new(n + 2);
        for (i, &v) in seg.vertices.iter().enumerate() {
            cg.set(i, i + 1, single(&mut price, v)?, ExecGroup::single(v));
        }
        for &(i, j, _, c) in &chains[s] {
            if let Some(pc) = price(c) {
                cg.set(i, j, pc, c.clone());
            }
        }
        let (d, pred) = floyd(&cg);
        let at = |h: usize, to: usize| d[h][to].map(|c| (c, path_groups(&cg, &walk(&pred, h, to))));
        seg_costs.push(SegmentCosts {
            open: [at(0, n), at(1, n)],
            absorbed: [at(0, n + 1), at(1, n + 1)],
        });
    }

    // decisions
    let mut decisions: Vec<Decision> = vec![];
    let mut head_decision: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tail_decision: BTreeMap<usize, usize> = BTreeMap::new();
    for cands in horizontals.values() {
        let options = packings(cands);
        for (_, c) in cands {
            for m in &c.members {
                head_decision.insert(seg_of[m].0, decisions.len());
            }
        }
        decisions.push(Decision::Pack { options });
    }
    let barriers: Vec<NodeId> = vertices.iter().copied().filter(|&v| is_barrier(g, v)).collect();
    let mut absorb_decision: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &b in &barriers {
        let feeders: Vec<usize> = (0..segs.len())
            .filter(|&s| segs[s].sink == Some(b) && (seg_costs[s].absorbed[0].is_some() || seg_costs[s].absorbed[1].is_some()))
            .collect();
        if feeders.is_empty() {
            continue;
        }
        for &s in &feeders {
            tail_decision.insert(s, decisions.len());
        }
        absorb_decision.insert(b, decisions.len());
        decisions.push(Decision::Absorb { barrier: b, feeders });
    }

    // couple decisions that share a segment
    let mut parent: Vec<usize> = (0..decisions.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            p[x] = find(p, p[x]);
        }
        p[x]
    }
    for s in 0..segs.len() {
        if let (Some(&a), Some(&b)) = (head_decision.get(&s), tail_decision.get(&s)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for d in 0..decisions.len() {
        let r = find(&mut parent, d);
        components.entry(r).or_default().push(d);
    }
    let mut comp_segs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut free_segs = vec![];
    for s in 0..segs.len() {
        match head_decision.get(&s).or(tail_decision.get(&s)) {
            Some(&d) => comp_segs.entry(find(&mut parent, d)).or_default().push(s),
            None => free_segs.push(s),
        }
    }

    let mut groups: Vec<ExecGroup> = vec![];
    let mut total: PathCost = (0, 0);
    for s in free_segs {
        let (c, path) = seg_costs[s].open[0].clone().ok_or_else(|| Error::Infeasible(segs[s].vertices.clone()))?;
        total = add(total, c);
        groups.extend(path);
    }
    for &b in &barriers {
        if !absorb_decision.contains_key(&b) {
            total = add(total, single(&mut price, b)?);
            groups.push(ExecGroup::single(b));
        }
    }

    let mut pack_cost: BTreeMap<usize, Option<PathCost>> = BTreeMap::new();
    for (root, ds) in &components {
        let segs_here = comp_segs.get(root).cloned().unwrap_or_default();
        let eval = |choice: &[usize], pack_cost: &mut BTreeMap<usize, Option<PathCost>>, price: &mut dyn FnMut(&ExecGroup) -> Option<PathCost>, emit: Option<&mut Vec<ExecGroup>>| -> Option<PathCost> {
            let mut c: PathCost = (0, 0);
            let mut taken: BTreeSet<usize> = BTreeSet::new();
            let mut absorbed: BTreeSet<usize> = BTreeSet::new();
            let mut out: Vec<ExecGroup> = vec![];
            for (k, &d) in ds.iter().enumerate() {
                match &decisions[d] {
                    Decision::Pack { options } => {
                        for &ci in &options[choice[k]] {
                            let pc = *pack_cost.entry(ci).or_insert_with(|| price(&candidates[ci]));
                            c = add(c, pc?);
                            out.push(candidates[ci].clone());
                            taken.extend(candidates[ci].members.iter().map(|m| seg_of[m].0));
                        }
                    }
                    Decision::Absorb { barrier, feeders } => {
                        if choice[k] == 0 {
                            c = add(c, price(&ExecGroup::single(*barrier))?);
                            out.push(ExecGroup::single(*barrier));
                        } else {
                            absorbed.insert(feeders[choice[k] - 1]);
                        }
                    }
                }
            }
            for &s in &segs_here {
                let h = taken.contains(&s) as usize;
                let table = if absorbed.contains(&s) { &seg_costs[s].absorbed } else { &seg_costs[s].open };
                let (pc, path) = table[h].as_ref()?;
                c = add(c, *pc);
                out.extend(path.iter().cloned());
            }
            if let Some(e) = emit {
                e.extend(out);
            }
            Some(c)
        };
        let sizes: Vec<usize> = ds.iter().map(|&d| decisions[d].len()).collect();
        let combos = sizes.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).unwrap_or(usize::MAX);
        let mut best: Option<(PathCost, Vec<usize>)> = None;
        let mut consider = |choice: &Vec<usize>, best: &mut Option<(PathCost, Vec<usize>)>, pack_cost: &mut BTreeMap<usize, Option<PathCost>>| {
            if let Some(c) = eval(choice, pack_cost, &mut price, None) {
                if best.as_ref().is_none_or(|(b, _)| c < *b) {
                    *best = Some((c, choice.clone()));
                }
            }
        };
        if combos <= COMBO_BUDGET {
            let mut choice = vec![0; ds.len()];
            loop {
                consider(&choice, &mut best, &mut pack_cost);
                let mut k = 0;
                while k < choice.len() {
                    choice[k] += 1;
                    if choice[k] < sizes[k] {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == choice.len() {
                    break;
                }
            }
        } else {
            log::warn!("{} joint choices exceed the budget; optimizing decisions one at a time", combos);
            let mut choice = vec![0; ds.len()];
            consider(&choice, &mut best, &mut pack_cost);
            for k in 0..ds.len() {
                for o in 0..sizes[k] {
                    let mut trial = best.as_ref().map_or(choice.clone(), |b| b.1.clone());
                    trial[k] = o;
                    consider(&trial, &mut best, &mut pack_cost);
                }
                choice = best.as_ref().map_or(choice, |b| b.1.clone());
            }
        }
        let (_, choice) = best.ok_or_else(|| Error::Infeasible(ds.iter().filter_map(|&d| match &decisions[d] { Decision::Absorb { barrier, .. } => Some(*barrier), _ => None }).collect()))?;
        let mut out = vec![];
        let c = eval(&choice, &mut pack_cost, &mut price, Some(&mut out)).unwrap();
        total = add(total, c);
        groups.extend(out);
    }

    let groups = dataflow_order(g, groups);
    let group_cycles: Vec<u64> = groups.iter().map(|grp| price(grp).map_or(0, |c| c.0)).collect();
    debug_assert_eq!(group_cycles.iter().sum::<u64>(), total.0);
    Ok(Strategy { tiles: vec![None; groups.len()], group_cycles, total_cycles: total.0, groups })
}

/// Topological order of the group quotient graph, ties broken by the
/// smallest member id.
pub fn dataflow_order(g: &XGraph, groups: Vec<ExecGroup>) -> Vec<ExecGroup> {
    let mut owner: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (i, grp) in groups.iter().enumerate() {
        for &m in &grp.members {
            owner.insert(m, i);
        }
    }
    let n = groups.len();
    let mut indeg = vec![0usize; n];
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, grp) in groups.iter().enumerate() {
        for &m in &grp.members {
            for p in g.preds(m) {
                if let Some(&j) = owner.get(&p) {
                    if j != i && succ[j].insert(i) {
                        indeg[i] += 1;
                    }
                }
            }
        }
    }
    let key = |i: usize| (*groups[i].members.iter().min().unwrap(), i);
    let mut ready: BTreeSet<(NodeId, usize)> = (0..n).filter(|&i| indeg[i] == 0).map(key).collect();
    let mut order = vec![];
    while let Some(k) = ready.pop_first() {
        order.push(k.1);
        for &s in &succ[k.1] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert(key(s));
            }
        }
    }
    let mut slots: Vec<Option<ExecGroup>> = groups.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().unwrap()).collect()
}

/// Every vertex on its own.
pub fn baseline_with<F: FnMut(&ExecGroup) -> Option<u64>>(g: &XGraph, mut cost: F) -> Result<Strategy> {
    let groups: Vec<ExecGroup> = accelerated_vertices(g).into_iter().map(ExecGroup::single).collect();
    finish(g, groups, &mut cost)
}

/// First-match greedy fusion: visits vertices in topological order and
/// takes the first candidate containing the vertex whose members are all
/// still free and that beats running its members separately.
pub fn greedy_with<F: FnMut(&ExecGroup) -> Option<u64>>(g: &XGraph, candidates: &[ExecGroup], mut cost: F) -> Result<Strategy> {
    let vertices: BTreeSet<NodeId> = accelerated_vertices(g).into_iter().collect();
    let mut used = BTreeSet::new();
    let mut groups = vec![];
    for id in g.topo_order()? {
        if !vertices.contains(&id) || used.contains(&id) {
            continue;
        }
        let pick = candidates.iter().find(|c| {
            c.members.contains(&id)
                && c.members.iter().all(|m| vertices.contains(m) && !used.contains(m))
                && match cost(c) {
                    Some(fused) => {
                        let parts: Option<u64> = c.members.iter().map(|&m| cost(&ExecGroup::single(m))).sum();
                        parts.is_some_and(|p| fused < p)
                    }
                    None => false,
                }
        });
        let grp = pick.cloned().unwrap_or_else(|| ExecGroup::single(id));
        used.extend(grp.members.iter().copied());
        groups.push(grp);
    }
    finish(g, groups, &mut cost)
}

fn finish<F: FnMut(&ExecGroup) -> Option<u64>>(g: &XGraph, groups: Vec<ExecGroup>, cost: &mut F) -> Result<Strategy> {
    let groups = dataflow_order(g, groups);
    let group_cycles = groups
        .iter()
        .map(|grp| cost(grp).ok_or_else(|| Error::Infeasible(grp.members.clone())))
        .collect::<Result<Vec<u64>>>()?;
    Ok(Strategy {
        tiles: vec![None; groups.len()],
        total_cycles: group_cycles.iter().sum(),
        group_cycles,
        groups,
    })
}

/// Prices a group on the simulator. Explicit concat copies are lowered as
/// copies; everything else goes through the tiler and the group lowering.
pub fn price_group(g: &XGraph, grp: &ExecGroup, hw: &HwConfig) -> Option<(u64, Option<TileConfig>)> {
    let n = g.node(grp.members[0]);
    if grp.members.len() == 1 && n.kind == OpKind::Concat {
        let mut base = 0u32;
        let mut view = |s: TensorShape| {
            let v = TensorView::dense(base, s);
            base += (s.elements() as u32).next_multiple_of(16);
            v
        };
        let srcs: Vec<TensorView> = n.inputs.iter().map(|&t| view(g.tensor_shape(t))).collect();
        let dst = view(n.output_shape);
        let mut stream = lower_copy(&srcs, &dst, hw).ok()?;
        assign_dependencies(&mut stream);
        let r = simulate(&stream, &EngineModel::from_hw(hw)).ok()?;
        return Some((r.total_cycles, None));
    }
    let spec = GroupSpec::from_graph(g, &grp.members, grp.horizontal);
    let tile = solve_tile_config(&spec, hw)?;
    match evaluate_group(&spec, &tile, hw) {
        Ok(c) => Some((c, Some(tile))),
        Err(e) => {
            log::debug!("group {:?} cannot be lowered: {e}", grp.members);
            None
        }
    }
}

fn fusible_candidates(candidates: &[CandidateGroup]) -> Vec<ExecGroup> {
    candidates
        .iter()
        .filter(|c| c.fits_onchip)
        .map(|c| ExecGroup { members: c.members.clone(), horizontal: c.horizontal })
        .collect()
}

fn attach_tiles(g: &XGraph, mut s: Strategy, hw: &HwConfig) -> Strategy {
    s.tiles = s.groups.iter().map(|grp| price_group(g, grp, hw).and_then(|p| p.1)).collect();
    s
}

/// Minimum-cost strategy over singletons and the feasible candidates.
pub fn select_strategy(g: &XGraph, candidates: &[CandidateGroup], hw: &HwConfig) -> Result<Strategy> {
    let s = solve_with(g, &fusible_candidates(candidates), |grp| price_group(g, grp, hw).map(|p| p.0))?;
    Ok(attach_tiles(g, s, hw))
}

pub fn greedy_strategy(g: &XGraph, candidates: &[CandidateGroup], hw: &HwConfig) -> Result<Strategy> {
    let s = greedy_with(g, &fusible_candidates(candidates), |grp| price_group(g, grp, hw).map(|p| p.0))?;
    Ok(attach_tiles(g, s, hw))
}

pub fn baseline_strategy(g: &XGraph, hw: &HwConfig) -> Result<Strategy> {
    let s = baseline_with(g, |grp| price_group(g, grp, hw).map(|p| p.0))?;
    Ok(attach_tiles(g, s, hw))
}
