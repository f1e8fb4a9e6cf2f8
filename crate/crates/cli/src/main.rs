//! `antilimit` — batch front door for the lattice toolkit.
//!
//! Invocation: `antilimit <subcommand> --config <path> [--out <dir>]
//! [--workers N]`. The subcommand must match the config's command block.
//! Exit codes: 0 success, 2 configuration errors, 3 hypothesis/resolution
//! failures (with JSON diagnostics on stderr), 1 internal errors.

mod commands;
mod config;
mod manifest;
mod output;
mod sweep;

use std::path::PathBuf;
use std::time::Instant;

use antilimit::error::Error;
use clap::Parser;

use crate::config::{parse_config, CommandSpec, RunConfig};
use crate::manifest::{config_hash, write_outputs, WriteOutcome};
use crate::output::OutputBundle;

#[derive(Parser, Debug)]
#[command(
    name = "antilimit",
    version,
    about = "Bounded orbits, Cantor certificates and invariant-graph continuation for \
             anti-integrable-limit lattice systems"
)]
struct Cli {
    /// Subcommand; must match the config's command block.
    subcommand: String,
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count (overrides config.parallelism and ANTILIMIT_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
}

const KNOWN: &[&str] = &[
    "verify",
    "scan-fiber",
    "solve-window",
    "refine",
    "certify",
    "rotation-orbit",
    "solve-k",
    "continue",
    "iterate",
    "lyapunov",
    "gradient-flow",
    "sweep",
];

fn resolve_workers(cli: &Cli, cfg: &RunConfig) -> usize {
    if let Some(w) = cli.workers {
        return w;
    }
    if cfg.parallelism != 0 {
        return cfg.parallelism;
    }
    std::env::var("ANTILIMIT_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn execute(cli: &Cli) -> Result<i32, (i32, String)> {
    if !KNOWN.contains(&cli.subcommand.as_str()) {
        return Err((2, format!(
            "unknown subcommand {:?}; expected one of {}",
            cli.subcommand,
            KNOWN.join(", ")
        )));
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| (2, format!("cannot read config {}: {e}", cli.config.display())))?;
    let cfg = parse_config(&text).map_err(|e| (2, format!("{e}")))?;
    if cfg.command.cli_name() != cli.subcommand {
        return Err((2, format!(
            "subcommand {:?} does not match the config's command {:?}",
            cli.subcommand,
            cfg.command.cli_name()
        )));
    }
    let hash = config_hash(&cfg).map_err(|e| (2, format!("{e}")))?;
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    let workers = resolve_workers(cli, &cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| (1, format!("worker pool: {e}")))?;

    let start = Instant::now();
    let mut bundle = OutputBundle::default();
    let run: Result<Vec<(&'static str, String)>, Error> = pool.install(|| match &cfg.command {
        CommandSpec::Sweep { grid, inner } => sweep::run_sweep(&cfg, grid, inner, &mut bundle),
        CommandSpec::Continue { .. } => commands::run_continue(&cfg, &cfg.output, &mut bundle),
        other => {
            let m = cfg.model.build()?;
            commands::run_single(&m, other, &cfg.output, Some(&mut bundle))
        }
    });
    let metrics = run.map_err(to_exit)?;
    let wall = start.elapsed().as_secs_f64();
    let timings = vec![(cli.subcommand.clone(), wall)];

    match write_outputs(&out_dir, bundle, &hash, cfg.output.overwrite, wall, timings)
        .map_err(to_exit)?
    {
        WriteOutcome::Written(manifest) => {
            let summary: Vec<String> =
                metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!(
                "{}: wrote {} files to {} ({})",
                cli.subcommand,
                manifest.outputs.len() + 1,
                out_dir.display(),
                summary.join(", ")
            );
        }
        WriteOutcome::NoOp => {
            println!(
                "{}: outputs for this config already present in {} (overwrite = false); no-op",
                cli.subcommand,
                out_dir.display()
            );
        }
    }
    Ok(0)
}

fn to_exit(e: Error) -> (i32, String) {
    let code = if e.is_usage() { 2 } else { 3 };
    let diag = serde_json::json!({
        "error": format!("{e}"),
        "kind": match &e {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Hypothesis(_) => "hypothesis",
            Error::Resolution(_) => "resolution",
            Error::BoundaryEscape(_) => "boundary-escape",
            Error::NoConvergence(_) => "no-convergence",
            Error::Existence(_) => "existence",
            Error::Degenerate(_) => "degenerate",
        },
    });
    (code, diag.to_string())
}

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => std::process::exit(code),
        Err((code, msg)) => {
            eprintln!("{msg}");
            std::process::exit(code);
        }
    }
}
