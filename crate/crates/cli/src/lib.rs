//! Command-line driver: each subcommand runs one pipeline stage against a
//! run directory, `pipeline` chains them and `sweep` solves a parameter grid.

pub mod artifacts;
pub mod config;
pub mod stages;
pub mod sweep;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fan_core::solver::Fairness;

use crate::config::{Overrides, RunConfig};
use crate::stages::{Outcome, Run};

pub const OUTPUT_DIR_ENV: &str = "FAN_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "fan-output";

#[derive(Debug, Parser)]
#[command(
    name = "fan",
    version,
    about = "Fair abstention post-processing for binary classifiers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory for all artifacts.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_fairness)]
    pub fairness: Option<Fairness>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Maximum abstention rate, applied to every group.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// No-harm slack, applied to every group.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Baseline decision threshold.
    #[arg(long, global = true)]
    pub t0: Option<f64>,
    /// Replaces every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_nodes: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialize the configured dataset (synthetic draw or CSV) into the run directory.
    GenSynth,
    /// Train the baseline scorer.
    TrainBaseline,
    /// Solve the Stage I integer program.
    Solve,
    /// Canonicalize the solved decisions by baseline confidence.
    Adjust,
    /// Train the abstention and flip surrogates.
    TrainSurrogate,
    /// Evaluate baseline, Stage I and FAN on every split.
    Eval,
    /// Run every stage in order.
    Pipeline,
    /// Solve a grid of (epsilon, delta, eta, sigma) points into sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Grid values for epsilon (comma separated).
    #[arg(long = "epsilons", value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long = "deltas", value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long = "etas", value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    /// Positive-label abstention gap bounds; `none` leaves the gap free.
    #[arg(long = "sigmas", value_delimiter = ',', value_parser = parse_sigma)]
    pub sigmas: Option<Vec<Option<f64>>>,
    /// Also train surrogates at each point and report FAN metrics.
    #[arg(long)]
    pub full: bool,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn parse_fairness(s: &str) -> Result<Fairness, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown fairness notion `{s}` (expected dp, eop or eod)"))
}

fn parse_sigma(s: &str) -> Result<Option<f64>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| format!("invalid sigma `{s}`: {e}"))
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            fairness: self.fairness,
            epsilon: self.epsilon,
            delta: self.delta,
            eta: self.eta,
            t0: self.t0,
            seed: self.seed,
            max_nodes: self.max_nodes,
            output_dir: self.out.clone(),
        }
    }
}

/// Loads the config, applies flag overrides and runs the command.
pub fn run(cli: Cli) -> Result<Outcome> {
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Command::Sweep(args) = &cli.command {
        let grid = &mut config.sweep.grid;
        if let Some(v) = &args.epsilons {
            grid.epsilon = v.clone();
        }
        if let Some(v) = &args.deltas {
            grid.delta = v.clone();
        }
        if let Some(v) = &args.etas {
            grid.eta = v.clone();
        }
        if let Some(v) = &args.sigmas {
            grid.sigma = v.clone();
        }
        config.sweep.full |= args.full;
        if args.jobs.is_some() {
            config.sweep.jobs = args.jobs;
        }
    }
    config.apply(&cli.global.overrides());
    let root = config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let run = Run::new(config, root).context("invalid configuration")?;
    log::info!("run directory {}", run.layout.root.display());

    match cli.command {
        Command::GenSynth => run.gen_data(),
        Command::TrainBaseline => run.train_baseline(),
        Command::Solve => run.solve(),
        Command::Adjust => run.adjust(),
        Command::TrainSurrogate => run.train_surrogate(),
        Command::Eval => run.eval(),
        Command::Pipeline => run.pipeline(),
        Command::Sweep(_) => {
            let sweep = run.config.sweep.clone();
            let rows = sweep::run_sweep(&run, &sweep.grid, sweep.full, sweep.jobs)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} grid points, {failed} failed", rows.len());
            Ok(Outcome::Success)
        }
    }
}
