use anyhow::anyhow;
use rumc::diagnostics::{self, ThresholdPoint};
use rumc::estimators::{fixed_estimate, randomized_estimate, EstimateReport, EstimatorKind};
use rumc::models::{levy_exponents, CostModel};
use rumc::randomization::{
    solve_budget, solve_penalty, solve_work_variance, ShiftedSurvival, SolutionRecord,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, Objective, SweepVariable};
use crate::output::{print_kv, write_rows};
use crate::CliError;

fn solver_error(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(anyhow!("{e}"))
}

pub fn solve_configured(
    cfg: &ExperimentConfig,
) -> Result<(SolutionRecord, ShiftedSurvival), CliError> {
    cfg.validate_solver()?;
    let profile = cfg.model.profile().map_err(solver_error)?;
    Ok(match cfg.solver.objective {
        Objective::Penalty => {
            let sol = solve_penalty(profile, cfg.lambda()?).map_err(solver_error)?;
            (sol.record(), sol.q)
        }
        Objective::Budget => {
            let sol = solve_budget(profile, cfg.budget()?).map_err(solver_error)?;
            (sol.record(), sol.q)
        }
        Objective::WorkVariance => {
            let sol = solve_work_variance(profile).map_err(solver_error)?;
            (sol.record(), sol.q)
        }
    })
}

fn finish<T: Serialize>(cfg: &ExperimentConfig, rows: &[T]) -> Result<(), CliError> {
    if let Some(path) = &cfg.output.path {
        write_rows(path, cfg.output.format, rows)?;
        println!("output={}", path.display());
    }
    Ok(())
}

pub fn solve(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (record, _) = solve_configured(cfg)?;
    print_kv(None, &record);
    finish(cfg, &[record])
}

#[derive(Debug, Serialize)]
struct EstimateRow {
    kind: &'static str,
    mean: f64,
    var: f64,
    stderr: f64,
    ci_low: f64,
    ci_high: f64,
    n: u64,
    mean_work: f64,
    seed: u64,
}

impl From<&EstimateReport> for EstimateRow {
    fn from(r: &EstimateReport) -> Self {
        EstimateRow {
            kind: r.kind.as_str(),
            mean: r.mean,
            var: r.sample_variance,
            stderr: r.stderr,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            n: r.n,
            mean_work: r.mean_work,
            seed: r.master_seed,
        }
    }
}

pub fn estimate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate_model()?;
    cfg.validate_run()?;
    let mut reports = Vec::new();
    for kind in &cfg.estimate.kinds {
        let report = match kind {
            EstimatorKind::Randomized => {
                let (_, q) = solve_configured(cfg)?;
                randomized_estimate(&cfg.model, &q, &cfg.run)
            }
            EstimatorKind::Fixed => fixed_estimate(&cfg.model, cfg.fixed_horizon()?, &cfg.run),
        }
        .map_err(|e| CliError::Config(anyhow!("{e}")))?;
        print_kv(Some(kind.as_str()), &EstimateRow::from(&report));
        reports.push(report);
    }
    match cfg.output.format {
        crate::config::Format::Csv => {
            let rows: Vec<EstimateRow> = reports.iter().map(EstimateRow::from).collect();
            finish(cfg, &rows)
        }
        crate::config::Format::Json => finish(cfg, &reports),
    }
}

#[derive(Debug, Serialize)]
struct SurfaceRow {
    delta: f64,
    eta: f64,
    p: f64,
}

fn arg_extreme(values: &[f64], grid: &[f64], better: impl Fn(f64, f64) -> bool) -> (f64, f64) {
    let mut best = (grid[0], values[0]);
    for (&x, &v) in grid.iter().zip(values) {
        if better(v, best.1) {
            best = (x, v);
        }
    }
    best
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate_model()?;
    let s = cfg.sweep()?;
    let grid = s.grid();
    println!(
        "variable={}",
        match s.variable {
            SweepVariable::M => "m",
            SweepVariable::Delta => "delta",
            SweepVariable::Eta => "eta",
        }
    );
    println!("rows={}", grid.len());
    match s.variable {
        SweepVariable::M => {
            let rows = grid
                .iter()
                .map(|&m| match &cfg.model {
                    CostModel::Gbm(spec) => diagnostics::exp_levy_threshold(spec, m),
                    CostModel::Cir(spec) => diagnostics::cir_threshold(spec, m),
                })
                .collect::<Result<Vec<ThresholdPoint>, _>>()
                .map_err(solver_error)?;
            let w: Vec<f64> = rows.iter().map(|p| p.w).collect();
            let (arg, max) = arg_extreme(&w, &grid, |a, b| a > b);
            println!("max_w={max}");
            println!("argmax_m={arg}");
            println!(
                "mse_fixed_below_randomized={}",
                rows.iter().all(|p| p.mse_fixed < p.mse_randomized)
            );
            finish(cfg, &rows)
        }
        SweepVariable::Delta | SweepVariable::Eta => {
            let CostModel::Gbm(spec) = &cfg.model else {
                return Err(CliError::Config(anyhow!(
                    "work-variance surface sweeps need model.family = \"gbm\""
                )));
            };
            let rho = levy_exponents(spec).map_err(solver_error)?.second_rate();
            let rows = grid
                .iter()
                .map(|&x| {
                    let (delta, eta) = match s.variable {
                        SweepVariable::Delta => (x, s.eta.unwrap_or(0.5 * rho)),
                        _ => (s.delta.unwrap_or(0.0), x),
                    };
                    diagnostics::work_variance_surface(spec, delta, eta).map(|p| SurfaceRow {
                        delta,
                        eta,
                        p,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(solver_error)?;
            let p: Vec<f64> = rows.iter().map(|r| r.p).collect();
            let (arg, min) = arg_extreme(&p, &grid, |a, b| a < b);
            println!("min_p={min}");
            println!("argmin={arg}");
            finish(cfg, &rows)
        }
    }
}
