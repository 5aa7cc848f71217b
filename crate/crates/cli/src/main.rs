//! tawsim: schedule generation, simulation, and reporting for pipeline
//! parallel training strategies.
//!
//! Exit codes: 0 success, 2 config error, 3 validation failure, 4 schedule
//! or simulation error.

mod config;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use tawsim_core::{
    build_shard_map, bubble_ratio, generate, gwps_step_log, simulate, trace_json,
    validate_semantics, ClusterTopology, CommCostModel, Error as CoreError, Program, Strategy,
    TrainConfig,
};

use config::FileConfig;
use report::Format;

#[derive(Parser)]
#[command(name = "tawsim", version, about = "Pipeline-parallel schedule simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one strategy and print a machine-readable summary
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the timeline as a trace-event JSON file
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        format: String,
        /// Skip the semantic validator
        #[arg(long)]
        no_validate: bool,
    },
    /// Run every cell of the [sweep] axes and emit one row per cell
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Write rows to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "rows")]
        format: String,
        #[arg(long)]
        no_validate: bool,
    },
    /// Compare communication overlap across the [compare] strategies
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
        #[arg(long)]
        no_validate: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Run { config, trace, format, no_validate } => run(&config, trace, &format, no_validate),
        Cmd::Sweep { config, out, format, no_validate } => sweep(&config, out, &format, no_validate),
        Cmd::Compare { config, format, no_validate } => compare(&config, &format, no_validate),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<CoreError>()
                .map(|c| c.exit_code())
                .unwrap_or(2);
            ExitCode::from(code as u8)
        }
    }
}

// ---------------------------------------------------------------------------

/// Generate, optionally validate, and return the failed-check summary string
/// (raising a validation error if checks fail).
fn validated_program(
    strategy: Strategy,
    cfg: &TrainConfig,
    no_validate: bool,
) -> Result<(Program, String)> {
    let prog = generate(strategy, cfg, cfg.iterations)?;
    if no_validate {
        return Ok((prog, "skipped".to_string()));
    }
    let rep = validate_semantics(&prog);
    if rep.passed() {
        Ok((prog, "pass".to_string()))
    } else {
        println!("{}", rep.to_text());
        Err(CoreError::Validation(rep.failed_names().join(", ")).into())
    }
}

fn run(path: &PathBuf, trace: Option<PathBuf>, format: &str, no_validate: bool) -> Result<()> {
    Format::parse(format)?;
    let file = FileConfig::load(path)?;
    let topo = file.topology()?;
    let cost = file.cost_model()?;
    let cfg = file.train()?;
    let run_sec = file.run_section()?;
    let strategy = config::parse_strategy(&run_sec.strategy)?;

    if run_sec.show_steps.unwrap_or(false) {
        if matches!(strategy, Strategy::Tawpipe | Strategy::TawpipeNoCco) {
            let map = build_shard_map(&cfg)?;
            for line in gwps_step_log(&map) {
                println!("{line}");
            }
        } else {
            eprintln!("note: show_steps applies to grouped weight-passing strategies only");
        }
    }

    let (prog, validation) = validated_program(strategy, &cfg, no_validate)?;
    let res = simulate(&prog, &topo, &cost, file.cost.compute_flops_per_s)?;
    print!("{}", report::run_summary(&prog, &res, &validation));

    if let Some(tp) = trace {
        let json = trace_json(&prog, &topo, &res)?;
        fs::write(&tp, json).with_context(|| format!("cannot write {}", tp.display()))?;
        eprintln!("trace written to {}", tp.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

struct Cell {
    strategy: Strategy,
    p: u32,
    d: u32,
    n: u32,
    l: u32,
    h: u32,
}

fn sweep(path: &PathBuf, out: Option<PathBuf>, format: &str, no_validate: bool) -> Result<()> {
    let fmt = Format::parse(format)?;
    let file = FileConfig::load(path)?;
    let cost = file.cost_model()?;
    let base = &file.train;
    let sw = file.sweep_section()?;
    let dpn = file.topology.devices_per_node;

    let mut strategies = Vec::new();
    for name in &sw.strategies {
        strategies.push(config::parse_strategy(name)?);
    }

    // enumerate cells in deterministic axis order: strategy, p, d, h
    let mut cells = Vec::new();
    for &strategy in &strategies {
        for &p in &sw.p {
            let derived_nodes = if dpn > 0 && p % dpn == 0 { p / dpn } else { 0 };
            let ds = sw.d.clone().unwrap_or_else(|| vec![derived_nodes.max(1)]);
            let ns = match (&sw.n, sw.n_per_p) {
                (Some(list), _) => list.clone(),
                (None, Some(k)) => vec![k * p],
                (None, None) => vec![base.n],
            };
            let ls = match (&sw.l, sw.l_per_p) {
                (Some(list), _) => list.clone(),
                (None, Some(k)) => vec![k * p],
                (None, None) => vec![base.l],
            };
            let hs = sw.h.clone().unwrap_or_else(|| vec![base.h]);
            for &d in &ds {
                for &n in &ns {
                    for &l in &ls {
                        for &h in &hs {
                            cells.push(Cell { strategy, p, d, n, l, h });
                        }
                    }
                }
            }
        }
    }

    // cells are independent; parallel map keeps row order
    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|c| sweep_row(c, base, dpn, &cost, file.cost.compute_flops_per_s, no_validate))
        .collect();

    let text = report::render(&report::SWEEP_HEADER, &rows, fmt);
    match out {
        Some(p) => {
            fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?;
            eprintln!("sweep written to {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn sweep_row(
    cell: &Cell,
    base: &config::TrainSec,
    dpn: u32,
    cost: &CommCostModel,
    rate: f64,
    no_validate: bool,
) -> Vec<String> {
    let mut row = vec![
        cell.strategy.name().to_string(),
        cell.p.to_string(),
        cell.d.to_string(),
        cell.n.to_string(),
        cell.h.to_string(),
        base.s.to_string(),
        base.b.to_string(),
    ];
    let blank = |row: &mut Vec<String>| {
        for _ in 0..6 {
            row.push(String::new());
        }
    };
    let skip = |mut row: Vec<String>, reason: String| -> Vec<String> {
        blank(&mut row);
        row.push(reason);
        row
    };

    if dpn == 0 || cell.p % dpn != 0 {
        return skip(row, format!("p={} not a multiple of devices_per_node={}", cell.p, dpn));
    }
    let topo = match ClusterTopology::new(cell.p / dpn, dpn) {
        Ok(t) => t,
        Err(e) => return skip(row, e.to_string()),
    };

    let mut cfg = TrainConfig::new(cell.p, cell.d, cell.l, cell.h, base.s, base.b, cell.n);
    if let Some(v) = base.bytes_param {
        cfg.bytes_param = v;
    }
    if let Some(v) = base.bytes_grad {
        cfg.bytes_grad = v;
    }
    if let Some(v) = base.bytes_act {
        cfg.bytes_act = v;
    }
    if let Some(v) = base.opt_state_multiplier {
        cfg.opt_state_multiplier = v;
    }
    if let Some(v) = base.vocab {
        cfg.vocab = v;
    }
    if let Some(v) = base.activation_checkpointing {
        cfg.activation_checkpointing = v;
    }
    if let Some(v) = base.iterations {
        cfg.iterations = v;
    }
    if let Err(e) = cfg.validate() {
        return skip(row, e.to_string());
    }

    let prog = match generate(cell.strategy, &cfg, cfg.iterations) {
        Ok(p) => p,
        Err(e) => return skip(row, e.to_string()),
    };
    let valid = if no_validate {
        "skipped".to_string()
    } else {
        let rep = validate_semantics(&prog);
        if rep.passed() {
            "yes".to_string()
        } else {
            format!("no:{}", rep.failed_names().join("+"))
        }
    };
    let res = match simulate(&prog, &topo, cost, rate) {
        Ok(r) => r,
        Err(e) => return skip(row, e.to_string()),
    };
    let m = &res.metrics;
    row.push(format!("{}", m.makespan));
    row.push(format!("{}", m.throughput_tokens_per_s));
    row.push(bubble_ratio(m).map(|b| format!("{b}")).unwrap_or_default());
    row.push(format!("{:.0}", m.intra_bytes));
    row.push(format!("{:.0}", m.inter_bytes));
    row.push(m.peak_mem_bytes.to_string());
    row.push(valid);
    row.push(String::new());
    row
}

// ---------------------------------------------------------------------------

fn compare(path: &PathBuf, format: &str, no_validate: bool) -> Result<()> {
    let fmt = Format::parse(format)?;
    let file = FileConfig::load(path)?;
    let topo = file.topology()?;
    let cost = file.cost_model()?;
    let cfg = file.train()?;
    let cmp = file.compare_section()?;

    let mut rows = Vec::new();
    for name in &cmp.strategies {
        let strategy = config::parse_strategy(name)?;
        let (prog, _) = validated_program(strategy, &cfg, no_validate)?;
        let res = simulate(&prog, &topo, &cost, file.cost.compute_flops_per_s)?;
        let m = &res.metrics;
        let comm: f64 = m.per_device.iter().map(|d| d.comm_busy).sum();
        let nonov: f64 = m.per_device.iter().map(|d| d.comm_nonoverlapped).sum();
        rows.push(vec![
            strategy.name().to_string(),
            format!("{}", m.makespan),
            format!("{}", m.throughput_tokens_per_s),
            format!("{}", comm),
            format!("{}", nonov),
            format!("{}", m.comm_nonoverlap_fraction),
        ]);
    }
    print!("{}", report::render(&report::COMPARE_HEADER, &rows, fmt));
    Ok(())
}
