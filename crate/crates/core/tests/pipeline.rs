use xgc::compile::{compile, strategy_report, verify, CompileOptions, StrategyKind, Verification};
use xgc::tiling::HwConfig;
use xgc::zoo;

#[test]
fn corpus_compiles_and_verifies_for_every_strategy() {
    for g in zoo::corpus().unwrap() {
        for kind in [StrategyKind::None, StrategyKind::Greedy, StrategyKind::Optimal] {
            let hw = HwConfig::zu2();
            let c = compile(&g, &CompileOptions::new(hw.clone(), kind)).unwrap();
            println!("{} {:?}: {} instrs\n{}", g.name, kind, c.program.stream.len(), strategy_report(&c.graph, &c.strategy));
            assert_eq!(verify(&c.graph, &c.program, &c.qm, &hw).unwrap(), Verification::Pass, "{} {:?}", g.name, kind);
        }
    }
}
