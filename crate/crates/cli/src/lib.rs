//! Command-line runner: reads a JSON experiment config, dispatches to the
//! `sdgame` library and writes CSV/JSON artifacts plus a run manifest.
//!
//! Exit codes: 0 when every check passes, 2 when a check fails, 1 on any
//! error. Config errors are raised before the output directory is touched.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod manifest;
pub mod report;

pub use config::ExperimentConfig;
pub use manifest::Manifest;

pub const OUT_DIR_ENV: &str = "SDGAME_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "sdgame-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),
    #[error(transparent)]
    Core(#[from] sdgame::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "sdgame", version, about = "Reflected-state stochastic differential game laboratory")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: config `out_dir`, then $SDGAME_OUT_DIR, then ./sdgame-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Audit the domain and coefficient assumptions.
    Validate,
    /// Simulate the reflected SDE.
    Simulate,
    /// Solve the GBSDE on a simulated ensemble, with optional flow and comparison checks.
    SolveGbsde,
    /// Build the time change and check its structure.
    Timechange,
    /// Solve the Isaacs equation and its residuals.
    SolvePde,
    /// Dynamic-programming values, DPP residuals and regularity.
    Dpp,
    /// PDE, DPP and Monte Carlo values at probe points.
    CrossValidate,
    /// Convergence table from earlier solve-pde runs.
    Report {
        /// Run directories containing `manifest.json`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::SolveGbsde => "solve-gbsde",
            Command::Timechange => "timechange",
            Command::SolvePde => "solve-pde",
            Command::Dpp => "dpp",
            Command::CrossValidate => "cross-validate",
            Command::Report { .. } => "report",
        }
    }
}

/// Runs one invocation and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    if let Command::Report { runs } = &cli.command {
        let out = output_dir(cli, None);
        return report::run(runs, &out);
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let (mut cfg, bytes) = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = output_dir(cli, cfg.out_dir.clone());
    let outcome = commands::dispatch(&cli.command, &cfg, &out)?;
    let manifest = Manifest::new(cli.command.name(), &cfg, &bytes, &outcome);
    manifest.write(&out)?;
    println!("{} {}: {}", cli.command.name(), if outcome.passed { "passed" } else { "FAILED" }, out.display());
    Ok(outcome.passed)
}

fn output_dir(cli: &Cli, from_config: Option<PathBuf>) -> PathBuf {
    cli.out
        .clone()
        .or(from_config)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
