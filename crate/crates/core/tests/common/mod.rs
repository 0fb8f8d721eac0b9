//! Random generators and independent oracles shared by the integration
//! tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use xgc::fusion::template::{EdgeType, KindClass};
use xgc::fusion::FusionTemplate;
use xgc::ir::{normalize::prune_dim_transforms, NodeId, OpAttrs, OpKind, PoolType, TensorShape, XGraph};
use xgc::isa::*;
use xgc::search::ExecGroup;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random small DAG of shape-compatible operators with at most `max`
/// vertices including the input. Concats are absorbed into strided saves
/// when `absorb` is set.
pub fn random_dag(r: &mut ChaCha8Rng, max: usize, absorb: bool) -> XGraph {
    let mut g = XGraph::new("rand");
    let x = g.add_input("x", TensorShape::new(8, 8, 4));
    let mut ids = vec![x];
    let n = r.gen_range(1..max);
    for i in 0..n {
        let a = *ids.choose(r).unwrap();
        let sa = g.tensor_shape(a);
        let name = format!("v{i}");
        let pick = r.gen_range(0..9);
        let id = match pick {
            0 => g.add(name, OpKind::Conv, OpAttrs::conv(1, 1, 0, 4), &[a], &[]),
            1 => g.add(name, OpKind::Conv, OpAttrs::conv(3, 1, 1, 4), &[a], &[]),
            2 => g.add(name, OpKind::DepthwiseConv, OpAttrs::conv(3, 1, 1, sa.c), &[a], &[]),
            3 => g.add(name, OpKind::Pool(PoolType::Max), OpAttrs::pool(3, 1, 1), &[a], &[]),
            4 if sa.h >= 4 => g.add(name, OpKind::Pool(PoolType::Avg), OpAttrs::pool(2, 2, 0), &[a], &[]),
            5 => g.add(name, OpKind::ReLU, OpAttrs::default(), &[a], &[]),
            6 => {
                let same: Vec<NodeId> = ids.iter().copied().filter(|&b| b != a && g.tensor_shape(b) == sa).collect();
                match same.choose(r) {
                    Some(&b) => g.add(name, OpKind::EltwiseAdd, OpAttrs::default(), &[a, b], &[]),
                    None => g.add(name, OpKind::ReLU, OpAttrs::default(), &[a], &[]),
                }
            }
            7 => {
                let same: Vec<NodeId> = ids
                    .iter()
                    .copied()
                    .filter(|&b| b != a && g.tensor_shape(b).h == sa.h && g.tensor_shape(b).w == sa.w)
                    .collect();
                match same.choose(r) {
                    Some(&b) => g.add(name, OpKind::Concat, OpAttrs::default(), &[a, b], &[]),
                    None => g.add(name, OpKind::Conv, OpAttrs::conv(1, 1, 0, 4), &[a], &[]),
                }
            }
            _ => g.add(name, OpKind::Conv, OpAttrs::conv(3, 1, 1, 8), &[a], &[]),
        }
        .unwrap();
        ids.push(id);
    }
    g.add_missing_outputs();
    if absorb {
        g = prune_dim_transforms(&g).unwrap();
    }
    g.validate().unwrap();
    g
}

fn computation(k: OpKind) -> bool {
    !matches!(k, OpKind::Input | OpKind::Output | OpKind::FullyConnected)
}

fn conv_family(k: OpKind) -> bool {
    matches!(k, OpKind::Conv | OpKind::Deconv | OpKind::DepthwiseConv | OpKind::DilatedConv)
}

fn class_accepts(c: KindClass, k: OpKind) -> bool {
    if !computation(k) {
        return false;
    }
    match c {
        KindClass::Exact(e) => e == k,
        KindClass::ConvFamily => conv_family(k),
        KindClass::AnyPool => matches!(k, OpKind::Pool(_)),
        KindClass::Injective => {
            conv_family(k) || matches!(k, OpKind::Pool(_) | OpKind::ReLU | OpKind::Upsample | OpKind::Reorg)
        }
        KindClass::Any => true,
    }
}

fn edge_ok(g: &XGraph, ty: EdgeType, a: NodeId, b: NodeId) -> bool {
    let (na, nb) = (&g.nodes[&a], &g.nodes[&b]);
    match ty {
        EdgeType::Flow => na.save.is_none() && nb.inputs.contains(&a),
        EdgeType::Shared => na.save.is_some_and(|s| nb.inputs.contains(&s.tensor)),
        EdgeType::Sibling => {
            let (sa, sb) = (na.output_shape, nb.output_shape);
            a != b && !na.inputs.is_empty() && na.inputs.first() == nb.inputs.first() && sa.h == sb.h && sa.w == sb.w
        }
    }
}

/// Every injective assignment of template vertices to graph vertices that
/// satisfies all vertex and edge predicates. Mappings of horizontal
/// templates are sorted, since their member order carries no meaning.
pub fn brute_force_embeddings(t: &FusionTemplate, g: &XGraph) -> BTreeSet<Vec<NodeId>> {
    let ids: Vec<NodeId> = g.nodes.keys().copied().collect();
    let k = t.vertices.len();
    let mut out = BTreeSet::new();
    let mut cur: Vec<NodeId> = vec![];
    fn rec(t: &FusionTemplate, g: &XGraph, ids: &[NodeId], k: usize, cur: &mut Vec<NodeId>, out: &mut BTreeSet<Vec<NodeId>>) {
        if cur.len() == k {
            let ok = t.edges.iter().all(|e| edge_ok(g, e.ty, cur[e.from], cur[e.to]));
            if ok {
                let mut m = cur.clone();
                if t.shape == xgc::fusion::template::TemplateShape::Horizontal {
                    m.sort_unstable();
                }
                out.insert(m);
            }
            return;
        }
        let qv = &t.vertices[cur.len()];
        for &v in ids {
            if cur.contains(&v) {
                continue;
            }
            let n = &g.nodes[&v];
            if !class_accepts(qv.kind, n.kind)
                || qv.kernel.is_some_and(|[h, w]| n.attrs.kernel_h != h || n.attrs.kernel_w != w)
                || qv.stride.is_some_and(|[h, w]| n.attrs.stride_h != h || n.attrs.stride_w != w)
            {
                continue;
            }
            cur.push(v);
            rec(t, g, ids, k, cur, out);
            cur.pop();
        }
    }
    rec(t, g, &ids, k, &mut cur, &mut out);
    out
}

/// A strategy problem: a graph, candidate groups and a cost table.
pub struct Problem {
    pub g: XGraph,
    pub candidates: Vec<ExecGroup>,
    pub costs: BTreeMap<Vec<NodeId>, u64>,
    pub branched: bool,
}

impl Problem {
    pub fn cost(&self, grp: &ExecGroup) -> Option<u64> {
        let mut k = grp.members.clone();
        k.sort_unstable();
        self.costs.get(&k).copied()
    }
}

fn chain(g: &mut XGraph, from: NodeId, n: usize, tag: &str) -> Vec<NodeId> {
    let mut v = vec![];
    let mut cur = from;
    for i in 0..n {
        cur = g.add(format!("{tag}{i}"), OpKind::Conv, OpAttrs::conv(1, 1, 0, 4), &[cur], &[]).unwrap();
        v.push(cur);
    }
    v
}

/// Random segment problem with at most `max_ops` fusible vertices. Branched
/// problems have a fork feeding two or three arms that rejoin through
/// eltwise adds, with optional tails.
pub fn random_problem(r: &mut ChaCha8Rng, branched: bool, max_ops: usize) -> Problem {
    let mut g = XGraph::new("seg");
    let x = g.add_input("x", TensorShape::new(4, 4, 4));
    let mut cands: Vec<ExecGroup> = vec![];
    let mut take = |r: &mut ChaCha8Rng, members: Vec<NodeId>, horizontal: bool| {
        if members.len() >= 2 && r.gen_bool(0.6) {
            cands.push(ExecGroup { members, horizontal });
        }
    };
    let intervals = |r: &mut ChaCha8Rng, seg: &[NodeId], take: &mut dyn FnMut(&mut ChaCha8Rng, Vec<NodeId>, bool)| {
        for i in 0..seg.len() {
            for j in i + 2..=(i + 4).min(seg.len()) {
                take(r, seg[i..j].to_vec(), false);
            }
        }
    };
    if !branched {
        let n = r.gen_range(1..=max_ops);
        let seg = chain(&mut g, x, n, "c");
        intervals(r, &seg, &mut take);
    } else {
        // stem, arms, joins, tail
        let budget = max_ops;
        let stem = g.add("stem", OpKind::Conv, OpAttrs::conv(1, 1, 0, 4), &[x], &[]).unwrap();
        let n_arms = if budget >= 6 { r.gen_range(2..=3) } else { 2 };
        let mut left = budget - 1 - (n_arms - 1);
        let mut arms: Vec<Vec<NodeId>> = vec![];
        for a in 0..n_arms {
            let remaining_arms = n_arms - a - 1;
            let most = (left - remaining_arms).min(3);
            let len = if a == 0 { r.gen_range(0..=most) } else { r.gen_range(1..=most.max(1)) };
            let len = len.min(left);
            left -= len;
            arms.push(chain(&mut g, stem, len, &format!("a{a}_")));
        }
        let end = |arm: &Vec<NodeId>| *arm.last().unwrap_or(&stem);
        let mut join = g.add("join0", OpKind::EltwiseAdd, OpAttrs::default(), &[end(&arms[0]), end(&arms[1])], &[]).unwrap();
        let mut joins = vec![join];
        if n_arms == 3 {
            join = g.add("join1", OpKind::EltwiseAdd, OpAttrs::default(), &[join, end(&arms[2])], &[]).unwrap();
            joins.push(join);
        }
        let tail = chain(&mut g, join, left.min(2), "t");
        for arm in &arms {
            intervals(r, arm, &mut take);
        }
        intervals(r, &tail, &mut take);
        // arm suffixes absorbing their join
        for (a, arm) in arms.iter().enumerate() {
            let d = if n_arms == 3 && a == 2 { joins[1] } else { joins[0] };
            for s in 0..arm.len() {
                if arm.len() - s <= 3 {
                    let mut m = arm[s..].to_vec();
                    m.push(d);
                    take(r, m, false);
                }
            }
        }
        // a join absorbing into the tail head
        if let Some(&t0) = tail.first() {
            let _ = t0;
        }
        // horizontal packings of arm heads
        let heads: Vec<NodeId> = arms.iter().filter_map(|a| a.first().copied()).collect();
        for i in 0..heads.len() {
            for j in i + 1..heads.len() {
                take(r, vec![heads[i], heads[j]], true);
            }
        }
        if heads.len() == 3 {
            take(r, heads.clone(), true);
        }
    }
    g.add_missing_outputs();
    let mut costs = BTreeMap::new();
    let ids: Vec<NodeId> = g.nodes.values().filter(|n| computation(n.kind)).map(|n| n.id).collect();
    for &v in &ids {
        costs.insert(vec![v], r.gen_range(10..100));
    }
    for c in &cands {
        let mut k = c.members.clone();
        k.sort_unstable();
        let parts: u64 = c.members.iter().map(|m| costs[&vec![*m]]).sum();
        let lo = parts / 3;
        costs.entry(k).or_insert_with(|| r.gen_range(lo.max(1)..parts + 40));
    }
    Problem { g, candidates: cands, costs, branched }
}

/// Minimum total over every exact cover of the computation vertices by
/// singletons and candidates.
pub fn brute_force_partition(p: &Problem) -> u64 {
    let vs: Vec<NodeId> = p.g.nodes.values().filter(|n| computation(n.kind)).map(|n| n.id).collect();
    fn rec(p: &Problem, vs: &[NodeId], used: &mut BTreeSet<NodeId>, acc: u64, best: &mut u64) {
        let Some(&v) = vs.iter().find(|v| !used.contains(v)) else {
            *best = (*best).min(acc);
            return;
        };
        let mut options = vec![ExecGroup::single(v)];
        options.extend(p.candidates.iter().filter(|c| c.members.contains(&v)).cloned());
        for o in options {
            if o.members.iter().any(|m| used.contains(m)) {
                continue;
            }
            let Some(c) = p.cost(&o) else { continue };
            used.extend(o.members.iter().copied());
            rec(p, vs, used, acc + c, best);
            o.members.iter().for_each(|m| {
                used.remove(m);
            });
        }
    }
    let mut best = u64::MAX;
    rec(p, &vs, &mut BTreeSet::new(), 0, &mut best);
    best
}

fn region(r: &mut ChaCha8Rng) -> Region {
    Region {
        buf: r.gen_range(0..BUF_MID0 + NUM_MID),
        off: r.gen(),
        h: r.gen(),
        w: r.gen(),
        c: r.gen(),
        pix: r.gen(),
        row: r.gen(),
    }
}

fn small_region(r: &mut ChaCha8Rng, buf: u8) -> Region {
    Region::dense(buf, r.gen_range(0..64), r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..9))
}

/// Arbitrary instruction with every field drawn from its full range.
pub fn random_instruction(r: &mut ChaCha8Rng, deps: Vec<u32>) -> Instruction {
    let xfer = |r: &mut ChaCha8Rng| Transfer {
        ddr: r.gen(),
        buf: r.gen_range(0..BUF_MID0 + NUM_MID),
        boff: r.gen(),
        len: r.gen(),
        n1: r.gen(),
        ds1: r.gen(),
        bs1: r.gen(),
        n2: r.gen(),
        ds2: r.gen(),
        bs2: r.gen(),
    };
    let op = match r.gen_range(0..5) {
        0 => Op::Load(xfer(r)),
        1 => Op::Save(xfer(r)),
        2 => Op::Conv(ConvOp {
            variant: [ConvVariant::Standard, ConvVariant::Deconv, ConvVariant::Depthwise][r.gen_range(0..3)],
            kh: r.gen(),
            kw: r.gen(),
            sh: r.gen(),
            sw: r.gen(),
            dil: r.gen(),
            pad_t: r.gen(),
            pad_l: r.gen(),
            relu: r.gen(),
            init: r.gen(),
            fin: r.gen(),
            bias: r.gen(),
            bias_shift: r.gen(),
            out_shift: r.gen(),
            input: region(r),
            wgt_off: r.gen(),
            wgt_ic: r.gen(),
            bias_off: r.gen(),
            acc: region(r),
            out: region(r),
        }),
        3 => Op::Pool(PoolOp {
            max: r.gen(),
            kh: r.gen(),
            kw: r.gen(),
            sh: r.gen(),
            sw: r.gen(),
            pad_t: r.gen(),
            pad_l: r.gen(),
            input: region(r),
            out: region(r),
        }),
        _ => Op::Misc(MiscOp {
            kind: [MiscKind::Start, MiscKind::End, MiscKind::Eltwise, MiscKind::Relu, MiscKind::Upsample, MiscKind::Reorg]
                [r.gen_range(0..6)],
            relu: r.gen(),
            factor: r.gen(),
            shift_a: r.gen(),
            shift_b: r.gen(),
            out_shift: r.gen(),
            pad_t: r.gen(),
            pad_l: r.gen(),
            ch0: r.gen(),
            a: region(r),
            b: region(r),
            out: region(r),
        }),
    };
    Instruction { op, deps }
}

/// Random stream of `n` small instructions with backward dependencies.
pub fn random_sim_stream(r: &mut ChaCha8Rng, n: usize) -> Vec<Instruction> {
    (0..n)
        .map(|i| {
            let mut deps: Vec<u32> = (0..i as u32).filter(|_| r.gen_bool(0.15)).collect();
            deps.truncate(4);
            let t = Transfer { ddr: r.gen_range(0..4096), len: r.gen_range(1..2048), n1: 1, n2: 1, ..Default::default() };
            let op = match r.gen_range(0..5) {
                0 => Op::Load(t),
                1 => Op::Save(t),
                2 => Op::Conv(ConvOp {
                    variant: ConvVariant::Standard,
                    kh: r.gen_range(1..6),
                    kw: r.gen_range(1..6),
                    sh: 1,
                    sw: 1,
                    dil: 1,
                    pad_t: 0,
                    pad_l: 0,
                    relu: false,
                    init: true,
                    fin: true,
                    bias: false,
                    bias_shift: 0,
                    out_shift: 0,
                    input: small_region(r, BUF_IN),
                    wgt_off: 0,
                    wgt_ic: 1,
                    bias_off: 0,
                    acc: small_region(r, BUF_ACC),
                    out: small_region(r, BUF_OUT),
                }),
                3 => Op::Pool(PoolOp {
                    max: true,
                    kh: r.gen_range(1..4),
                    kw: r.gen_range(1..4),
                    sh: 1,
                    sw: 1,
                    pad_t: 0,
                    pad_l: 0,
                    input: small_region(r, BUF_IN),
                    out: small_region(r, BUF_OUT),
                }),
                _ => {
                    let mut m = MiscOp::marker(MiscKind::Eltwise);
                    m.out = small_region(r, BUF_OUT);
                    Op::Misc(m)
                }
            };
            Instruction { op, deps }
        })
        .collect()
}
