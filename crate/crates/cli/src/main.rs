//! `rumc`: solve for optimal horizon distributions, run estimators, produce
//! sweep data and self-check reference numbers.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver or domain error,
//! 4 verification failure.

mod commands;
mod config;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format, Objective};

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Solver(anyhow::Error),
    Verify(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verify(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Solver(e) => write!(f, "solver error: {e:#}"),
            CliError::Verify(n) => write!(f, "verification failed: {n} check(s)"),
        }
    }
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    match s {
        "penalty" => Ok(Objective::Penalty),
        "budget" => Ok(Objective::Budget),
        "work_variance" => Ok(Objective::WorkVariance),
        _ => Err(format!(
            "unknown objective {s:?} (penalty | budget | work_variance)"
        )),
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format {s:?} (csv | json)")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rumc",
    version,
    about = "Randomized unbiased estimation of expected cumulative discounted costs"
)]
struct Cli {
    /// TOML experiment file; the built-in GBM experiment is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Master seed (overrides the file and RUMC_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replications: Option<u64>,
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_parser = parse_objective)]
    objective: Option<Objective>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    m: Option<f64>,
    /// Output file.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal horizon distribution of the configured objective.
    Solve,
    /// Run the randomized and/or fixed-horizon estimators.
    Estimate,
    /// Emit a parameter sweep (threshold/MSE curves or the work-variance surface).
    Sweep,
    /// Check the reference numbers; exits with 4 on any failure.
    Verify,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(seed) = cli.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(n) = cli.replications {
        cfg.run.replications = n;
    }
    if let Some(step) = cli.step {
        cfg.run.step = step;
    }
    if let Some(w) = cli.workers {
        cfg.run.workers = w;
    }
    if let Some(o) = cli.objective {
        cfg.solver.objective = o;
    }
    if cli.lambda.is_some() {
        cfg.solver.lambda = cli.lambda;
    }
    if cli.m.is_some() {
        cfg.solver.m = cli.m;
    }
    if cli.output.is_some() {
        cfg.output.path = cli.output.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        Some(Command::Solve) => commands::solve(&cfg),
        Some(Command::Estimate) => commands::estimate(&cfg),
        Some(Command::Sweep) => commands::sweep(&cfg),
        Some(Command::Verify) => verify::run(),
        None => Err(CliError::Config(anyhow::anyhow!(
            "no subcommand given (solve | estimate | sweep | verify)"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
