//! Frozen encodings and the degenerate empty program.

use std::path::PathBuf;

use xgc::compile::{assemble, compile, CompileOptions, StrategyKind};
use xgc::exec::quant::calibrate;
use xgc::ir::XGraph;
use xgc::isa::{decode_binary, encode_binary, encode_text, Instruction, MiscKind, Op};
use xgc::search::Strategy;
use xgc::tiling::HwConfig;
use xgc::zoo::Builder;

fn minimal_conv() -> XGraph {
    let mut b = Builder::new("minimal_conv");
    let x = b.input("x", 4, 4, 3);
    b.conv("conv", x, 3, 1, 1, 4, false).unwrap();
    b.finish().unwrap()
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/minimal_conv.bin")
}

/// Set `XGC_BLESS=1` to rewrite the golden file after an intentional
/// encoding change.
#[test]
fn minimal_conv_bytes_are_frozen() {
    let c = compile(&minimal_conv(), &CompileOptions::new(HwConfig::zu2(), StrategyKind::None)).unwrap();
    let bytes = encode_binary(&c.program.stream).unwrap();
    if std::env::var_os("XGC_BLESS").is_some() {
        std::fs::write(golden_path(), &bytes).unwrap();
        eprintln!("{}", encode_text(&c.program.stream));
    }
    let golden = std::fs::read(golden_path()).expect("golden file missing; run with XGC_BLESS=1");
    assert_eq!(bytes, golden, "binary encoding drifted:\n{}", encode_text(&c.program.stream));
    assert_eq!(decode_binary(&golden).unwrap(), c.program.stream);
}

#[test]
fn minimal_conv_stream_shape() {
    let c = compile(&minimal_conv(), &CompileOptions::new(HwConfig::zu2(), StrategyKind::None)).unwrap();
    let s = &c.program.stream;
    let names: Vec<&str> = s.iter().map(|i| i.op.mnemonic()).collect();
    assert_eq!(names.first(), Some(&"MISC"));
    assert_eq!(names.last(), Some(&"MISC"));
    assert_eq!(names.iter().filter(|&&n| n == "CONV").count(), 1, "{names:?}");
    assert_eq!(names.iter().filter(|&&n| n == "SAVE").count(), 1, "{names:?}");
    // input, weights and bias
    assert_eq!(names.iter().filter(|&&n| n == "LOAD").count(), 3, "{names:?}");
}

#[test]
fn empty_strategy_is_start_and_end() {
    let g = XGraph::new("empty");
    let qm = calibrate(&g, &Default::default()).unwrap();
    let s = Strategy::default();
    let p = assemble(&g, &s, &qm, &HwConfig::zu2()).unwrap();
    let kinds: Vec<_> = p
        .stream
        .iter()
        .map(|i: &Instruction| match &i.op {
            Op::Misc(m) => Some(m.kind),
            _ => None,
        })
        .collect();
    assert_eq!(kinds, vec![Some(MiscKind::Start), Some(MiscKind::End)]);
    assert!(p.stream.iter().all(|i| i.deps.is_empty() || i.deps == vec![0]));
    assert_eq!(p.plan.total_bytes, 0);
}
