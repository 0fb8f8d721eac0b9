//! Randomized invariants over the public API.

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

use common::*;
use xgc::codegen::ddr::allocate_ddr;
use xgc::compile::{compile, verify, CompileOptions, StrategyKind, Verification};
use xgc::exec::fixed::{round_div, round_shift, sat8};
use xgc::ir::{NodeId, PoolType, XGraph};
use xgc::isa::{decode_any, decode_binary, encode_binary, encode_text, Instruction};
use xgc::sim::{simulate_trace, EngineModel};
use xgc::tiling::{solve_tile_config, GroupSpec, HwConfig};
use xgc::zoo::Builder;

/// Small random network with real parameters: convs, pools, relus,
/// residual adds and channel concats.
fn random_network(seed: u64) -> XGraph {
    let mut r = rng(seed);
    let mut b = Builder::new(&format!("net{seed}"));
    let x = b.input("x", r.gen_range(4..12), r.gen_range(4..12), r.gen_range(1..6));
    let mut live: Vec<NodeId> = vec![x];
    for i in 0..r.gen_range(1..8) {
        let a = *live.choose(&mut r).unwrap();
        let s = b.g.tensor_shape(a);
        let name = format!("n{i}");
        let id = match r.gen_range(0..7) {
            0 | 1 => {
                let k = [1, 3][r.gen_range(0..2)];
                let pad = usize::from(r.gen_bool(0.5) || s.h.min(s.w) < k);
                b.conv(&name, a, k, 1, pad, r.gen_range(1..10), r.gen_bool(0.5))
            }
            2 => b.conv(&name, a, 3, 1, 1, s.c, false).and_then(|c| b.add(&format!("{name}.add"), c, a, r.gen_bool(0.5))),
            3 if s.h >= 2 && s.w >= 2 => b.pool(&name, a, if r.gen_bool(0.5) { PoolType::Max } else { PoolType::Avg }, 2, 2, 0),
            4 => b.relu(&name, a),
            5 => {
                let same: Vec<NodeId> = live.iter().copied().filter(|&o| o != a && b.g.tensor_shape(o).h == s.h && b.g.tensor_shape(o).w == s.w).collect();
                match same.choose(&mut r) {
                    Some(&o) => b.concat(&name, &[a, o]),
                    None => b.relu(&name, a),
                }
            }
            _ => b.depthwise(&name, a, 3, 1, 1),
        }
        .unwrap();
        live.push(id);
    }
    b.finish().unwrap()
}

fn any_stream(seed: u64, n: usize) -> Vec<Instruction> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let deps = (0..i as u32).filter(|_| r.gen_bool(0.3)).take(5).collect();
            random_instruction(&mut r, deps)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_strategy_is_bit_exact(seed in any::<u64>()) {
        let g = random_network(seed);
        for k in [StrategyKind::None, StrategyKind::Greedy, StrategyKind::Optimal] {
            let hw = HwConfig::zu2();
            let c = compile(&g, &CompileOptions::new(hw.clone(), k)).unwrap();
            prop_assert_eq!(verify(&c.graph, &c.program, &c.qm, &hw).unwrap(), Verification::Pass);
            prop_assert!(c.program.plan.overlaps().is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn streams_round_trip(seed in any::<u64>(), n in 0usize..40) {
        let s = any_stream(seed, n);
        let bin = encode_binary(&s).unwrap();
        prop_assert_eq!(&decode_binary(&bin).unwrap(), &s);
        prop_assert_eq!(&decode_any(&bin).unwrap(), &s);
        prop_assert_eq!(&decode_any(encode_text(&s).as_bytes()).unwrap(), &s);
    }

    #[test]
    fn truncated_binary_never_panics(seed in any::<u64>(), n in 1usize..10, cut in any::<prop::sample::Index>()) {
        let bin = encode_binary(&any_stream(seed, n)).unwrap();
        let k = cut.index(bin.len());
        let _ = decode_binary(&bin[..k]);
    }

    #[test]
    fn overlap_is_bounded_by_busy_and_serial(seed in any::<u64>(), n in 1usize..50) {
        let mut r = rng(seed);
        let s = random_sim_stream(&mut r, n);
        let m = EngineModel::from_hw(&HwConfig::zu2());
        let par = simulate_trace(&s, &m, false).unwrap();
        let ser = simulate_trace(&s, &m, true).unwrap();
        let total: u64 = s.iter().map(|i| m.duration(&i.op)).sum();
        prop_assert_eq!(ser.report.total_cycles, total);
        let busiest = par.report.busy.iter().map(|b| b.1).max().unwrap_or(0);
        prop_assert!(busiest <= par.report.total_cycles);
        prop_assert!(par.report.total_cycles <= total);
        let mut end = vec![0u64; s.len()];
        for sp in &par.spans {
            end[sp.index] = sp.end;
        }
        for sp in &par.spans {
            for &d in &s[sp.index].deps {
                prop_assert!(end[d as usize] <= sp.start);
            }
        }
    }

    #[test]
    fn allocator_never_overlaps_live_regions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let absorb = r.gen_bool(0.5);
        let g = random_dag(&mut r, 12, absorb);
        let steps: Vec<Vec<NodeId>> = g.topo_order().unwrap().into_iter()
            .filter(|&id| g.node(id).kind.is_computation())
            .map(|id| vec![id])
            .collect();
        let plan = allocate_ddr(&g, &steps).unwrap();
        prop_assert!(plan.overlaps().is_empty());
        prop_assert!(plan.tensors.values().all(|t| t.end() <= plan.total_bytes));
    }

    #[test]
    fn larger_buffers_never_shrink_tiles(seed in any::<u64>(), grow in 1usize..4) {
        let mut r = rng(seed);
        let g = random_dag(&mut r, 6, false);
        let hw = HwConfig::with_split("small", 16, 8, 4, r.gen_range(4_000..60_000), 300);
        let mut big = hw.clone();
        big.b_in *= grow + 1;
        big.b_out *= grow + 1;
        big.b_weights *= grow + 1;
        for id in g.computation_nodes() {
            let spec = GroupSpec::single(&g, id);
            if let Some(t) = solve_tile_config(&spec, &hw) {
                let u = solve_tile_config(&spec, &big).expect("feasible tiles stay feasible");
                prop_assert!(u.t_w >= t.t_w);
            }
        }
    }

    #[test]
    fn rounding_helpers(v in -1_000_000i64..1_000_000, s in 1i32..12, d in 1i64..1000) {
        let exact = v as f64 / d as f64;
        let q = round_div(v, d);
        prop_assert!((q as f64 - exact).abs() <= 0.5);
        prop_assert_eq!(round_div(-v, d), -q);
        prop_assert_eq!(round_shift(v, -s), round_div(v, 1 << s));
        prop_assert_eq!(round_shift(v, s), v << s);
        prop_assert_eq!(sat8(v) as i64, v.clamp(-128, 127));
    }
}
