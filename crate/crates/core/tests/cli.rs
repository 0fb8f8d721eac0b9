//! Drives the `xgc` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use xgc::compile::{compile, CompileOptions, StrategyKind};
use xgc::ir::import_files;
use xgc::tiling::HwConfig;
use xgc::zoo;

fn xgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xgc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn export_compile_simulate_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model");
    let out = dir.path().join("out");
    stdout(&xgc(&["export-model", "residual", "--out", s(&model)]));
    let text = stdout(&xgc(&[
        "compile",
        "--model",
        s(&model.join("model.json")),
        "--params",
        s(&model.join("params")),
        "--out",
        s(&out),
        "--emit",
        "asm,bin,strategy,trace,plan",
    ]));
    assert!(text.contains("instructions"), "{text}");
    for f in ["program.asm", "program.bin", "strategy.json", "ddr_plan.json", "trace.txt", "cost.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let bin = stdout(&xgc(&["simulate", s(&out.join("program.bin"))]));
    let asm = stdout(&xgc(&["simulate", s(&out.join("program.asm"))]));
    assert_eq!(bin, asm);
    let cost: serde_json::Value = serde_json::from_str(&bin).unwrap();
    let serial: serde_json::Value =
        serde_json::from_str(&stdout(&xgc(&["simulate", s(&out.join("program.bin")), "--serial"]))).unwrap();
    assert!(cost["total_cycles"].as_u64().unwrap() < serial["total_cycles"].as_u64().unwrap());
    let report = stdout(&xgc(&["report", s(&out.join("strategy.json"))]));
    assert!(report.contains("predicted cycles"), "{report}");
}

#[test]
fn baseline_report_says_no_fusion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    stdout(&xgc(&["compile", "--model", "builtin:vgg_like", "--strategy", "none", "--out", s(&out), "--emit", "strategy"]));
    let report = stdout(&xgc(&["report", s(&out.join("strategy.json"))]));
    assert!(report.starts_with("no fusion applied"), "{report}");
}

#[test]
fn verify_passes_on_builtins() {
    for name in zoo::MODEL_NAMES {
        let m = format!("builtin:{name}");
        assert_eq!(stdout(&xgc(&["verify", "--model", &m, "--strategy", "greedy"])).trim(), "PASS");
    }
}

#[test]
fn catalog_and_presets_print_json() {
    let t: serde_json::Value = serde_json::from_str(&stdout(&xgc(&["templates"]))).unwrap();
    assert!(!t["templates"].as_array().unwrap().is_empty());
    let p: serde_json::Value = serde_json::from_str(&stdout(&xgc(&["presets"]))).unwrap();
    assert!(p.to_string().contains("zu2"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"nodes\": 3}").unwrap();
    let o = xgc(&["compile", "--model", s(&bad), "--params", s(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!xgc(&["compile", "--model", "builtin:nope"]).status.success());
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, [0x09u8, 0x00]).unwrap();
    assert!(!xgc(&["simulate", s(&junk)]).status.success());
}

#[test]
fn exported_models_reimport_identically() {
    let hw = HwConfig::zu2();
    for name in zoo::MODEL_NAMES {
        let dir = tempfile::tempdir().unwrap();
        stdout(&xgc(&["export-model", name, "--out", s(dir.path())]));
        let back = import_files(&dir.path().join("model.json"), &dir.path().join("params")).unwrap();
        let opts = CompileOptions::new(hw.clone(), StrategyKind::Optimal);
        let a = compile(&zoo::by_name(name).unwrap(), &opts).unwrap();
        let b = compile(&back, &opts).unwrap();
        assert_eq!(a.program.stream, b.program.stream, "{name}");
        assert_eq!(a.strategy.total_cycles, b.strategy.total_cycles, "{name}");
    }
}
