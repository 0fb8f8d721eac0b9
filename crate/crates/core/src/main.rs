use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use xgc::compile::{compile, strategy_report, verify, CompileOptions, Compilation, StrategyKind, Verification};
use xgc::fusion::{builtin_catalog, load_templates, templates_json};
use xgc::ir::{import_files, save_blob_store, to_manifest, XGraph};
use xgc::isa::{decode_any, encode_binary, encode_text};
use xgc::sim::{gantt, simulate_trace, EngineModel};
use xgc::tiling::HwConfig;
use xgc::{zoo, Result};

#[derive(Parser)]
#[command(name = "xgc", version, about = "Compile CNN graphs into accelerator instruction streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Asm,
    Bin,
    Strategy,
    Trace,
    Plan,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Model manifest JSON, or `builtin:<name>` for a corpus model.
    #[arg(long)]
    model: String,
    /// Directory of parameter blobs (required for manifests).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Hardware preset name or JSON file.
    #[arg(long, default_value = "zu2")]
    hw: String,
    #[arg(long, value_enum, default_value = "optimal")]
    strategy: StrategyKind,
    /// Fusion template file replacing the built-in catalog.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a model and write the requested artifacts.
    Compile {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "asm,bin,strategy")]
        emit: Vec<Emit>,
    },
    /// Simulate an instruction artifact (binary or text).
    Simulate {
        artifact: PathBuf,
        #[arg(long, default_value = "zu2")]
        hw: String,
        /// Print a per-engine timeline after the report.
        #[arg(long)]
        trace: bool,
        /// Disable overlap between engines.
        #[arg(long)]
        serial: bool,
    },
    /// Compile, then compare the stream executor against the graph interpreter.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Summarize a strategy file written by `compile --emit strategy`.
    Report { strategy: PathBuf },
    /// Print the hardware presets.
    Presets,
    /// Print the built-in fusion template catalog.
    Templates,
    /// Write a built-in model as a manifest plus parameter blobs.
    ExportModel {
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_model(m: &ModelArgs) -> Result<XGraph> {
    if let Some(name) = m.model.strip_prefix("builtin:") {
        return zoo::by_name(name);
    }
    let params = m
        .params
        .as_deref()
        .ok_or_else(|| xgc::Error::Schema("--params is required with a manifest".into()))?;
    import_files(Path::new(&m.model), params)
}

fn build(m: &ModelArgs) -> Result<(Compilation, HwConfig)> {
    let t0 = Instant::now();
    let raw = load_model(m)?;
    let import = t0.elapsed();
    let hw = HwConfig::resolve(&m.hw)?;
    let mut opts = CompileOptions::new(hw.clone(), m.strategy);
    if let Some(t) = &m.templates {
        opts.templates = load_templates(t)?;
    }
    let mut c = compile(&raw, &opts)?;
    c.times.graph_generation += import;
    Ok((c, hw))
}

fn strategy_json(c: &Compilation) -> serde_json::Value {
    let g = &c.graph;
    let groups: Vec<_> = c
        .strategy
        .groups
        .iter()
        .zip(&c.strategy.group_cycles)
        .map(|(grp, cycles)| {
            json!({
                "members": grp.members.iter().map(|&m| g.node(m).name.clone()).collect::<Vec<_>>(),
                "kinds": grp.members.iter().map(|&m| g.node(m).kind.to_string()).collect::<Vec<_>>(),
                "horizontal": grp.horizontal,
                "cycles": cycles,
            })
        })
        .collect();
    json!({ "model": g.name, "total_cycles": c.strategy.total_cycles, "groups": groups })
}

fn report_from_json(v: &serde_json::Value) -> String {
    let mut out = String::new();
    let groups = v["groups"].as_array().cloned().unwrap_or_default();
    let fused: Vec<_> = groups.iter().filter(|g| g["members"].as_array().is_some_and(|m| m.len() > 1)).collect();
    if fused.is_empty() {
        out.push_str("no fusion applied\n");
    }
    for g in &fused {
        let names: Vec<String> = g["members"]
            .as_array()
            .unwrap()
            .iter()
            .zip(g["kinds"].as_array().unwrap())
            .map(|(n, k)| format!("{}({})", n.as_str().unwrap_or("?"), k.as_str().unwrap_or("?")))
            .collect();
        let h = if g["horizontal"].as_bool() == Some(true) { "horizontal " } else { "" };
        out.push_str(&format!("{h}{} cycles={}\n", names.join(" -> "), g["cycles"]));
    }
    out.push_str(&format!(
        "groups {} (fused {}), predicted cycles {}\n",
        groups.len(),
        fused.len(),
        v["total_cycles"]
    ));
    out
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Compile { model, out, emit } => {
            let (c, hw) = build(&model)?;
            std::fs::create_dir_all(&out)?;
            let stream = &c.program.stream;
            for e in emit {
                match e {
                    Emit::Asm => std::fs::write(out.join("program.asm"), encode_text(stream))?,
                    Emit::Bin => std::fs::write(out.join("program.bin"), encode_binary(stream)?)?,
                    Emit::Strategy => std::fs::write(out.join("strategy.json"), serde_json::to_string_pretty(&strategy_json(&c))?)?,
                    Emit::Plan => std::fs::write(out.join("ddr_plan.json"), serde_json::to_string_pretty(&c.program.plan)?)?,
                    Emit::Trace => {
                        let s = simulate_trace(stream, &EngineModel::from_hw(&hw), false)?;
                        std::fs::write(out.join("trace.txt"), gantt(stream, &s, 100))?;
                        std::fs::write(out.join("cost.json"), serde_json::to_string_pretty(&s.report)?)?;
                    }
                }
            }
            for w in &c.warnings {
                println!("warning: {w}");
            }
            print!("{}", strategy_report(&c.graph, &c.strategy));
            println!("instructions {}, DDR bytes {}", stream.len(), c.program.plan.total_bytes);
            print!("{}", c.times.summary());
        }
        Cmd::Simulate { artifact, hw, trace, serial } => {
            let hw = HwConfig::resolve(&hw)?;
            let stream = decode_any(&std::fs::read(&artifact)?)?;
            let s = simulate_trace(&stream, &EngineModel::from_hw(&hw), serial)?;
            println!("{}", serde_json::to_string_pretty(&s.report)?);
            if trace {
                print!("{}", gantt(&stream, &s, 100));
            }
        }
        Cmd::Verify { model } => {
            let (c, hw) = build(&model)?;
            match verify(&c.graph, &c.program, &c.qm, &hw)? {
                Verification::Pass => println!("PASS"),
                Verification::Mismatch { tensor, offset, expected, actual } => {
                    println!("FAIL at byte offset {offset} (tensor {tensor}: expected {expected}, got {actual})");
                    return Ok(ExitCode::from(2));
                }
            }
        }
        Cmd::Report { strategy } => {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(strategy)?)?;
            print!("{}", report_from_json(&v));
        }
        Cmd::Presets => println!("{}", serde_json::to_string_pretty(&HwConfig::presets_json())?),
        Cmd::Templates => println!("{}", templates_json(&builtin_catalog())),
        Cmd::ExportModel { name, out } => {
            let g = zoo::by_name(&name)?;
            std::fs::create_dir_all(out.join("params"))?;
            std::fs::write(out.join("model.json"), serde_json::to_string_pretty(&to_manifest(&g))?)?;
            save_blob_store(&out.join("params"), &g.params)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("XGC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
