//! Built-in self-check of the reference numbers. Each check prints
//! `check.<name>=pass|fail` followed by its measured values.

use std::sync::Arc;

use rumc::diagnostics::{cir_threshold, exp_levy_threshold, mse_compare, work_variance_surface};
use rumc::estimators::{randomized_estimate, RunConfig};
use rumc::models::{cir_gamma, exp_levy_gamma, CirSpec, CostModel, ExpLevySpec, GammaProfile};
use rumc::numerics::linspace;
use rumc::randomization::{closed_form, solve_budget, solve_penalty, solve_work_variance};

use crate::CliError;

type Check = Result<(bool, String), String>;
type NamedCheck = (&'static str, fn() -> Check);

fn gbm() -> Arc<dyn GammaProfile> {
    Arc::new(exp_levy_gamma(&ExpLevySpec::reference()).expect("reference parameters are valid"))
}

fn constants() -> Check {
    let g = exp_levy_gamma(&ExpLevySpec::reference()).map_err(|e| e.to_string())?;
    let (_, rho) = g.exponential_form().ok_or("not exponential")?;
    let alpha = g.alpha();
    Ok((
        (alpha - 1.7689).abs() < 1e-4 && (0.5 * rho - 0.55).abs() < 1e-12,
        format!("alpha={alpha} eta_star={}", 0.5 * rho),
    ))
}

fn work_variance() -> Check {
    let sol = solve_work_variance(gbm()).map_err(|e| e.to_string())?;
    Ok((
        (sol.product - 0.68358).abs() < 5e-3
            && (sol.optimal_budget - sol.shift - 2.0 / 1.1).abs() < 1e-8,
        format!(
            "shift={} optimal_budget={} product={}",
            sol.shift, sol.optimal_budget, sol.product
        ),
    ))
}

fn closed_forms() -> Check {
    let g = exp_levy_gamma(&ExpLevySpec::reference()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for lambda in [0.5, 1.0, 3.53786, 10.0] {
        let sol = solve_penalty(gbm(), lambda).map_err(|e| e.to_string())?;
        let (shift, head, _, obj) = closed_form::penalty(&g, lambda);
        worst = worst
            .max((sol.shift - shift).abs())
            .max((sol.q.head() - head).abs())
            .max((sol.objective - obj).abs());
    }
    for m in [0.5, 1.0, 1.81818, 3.0, 10.0] {
        let sol = solve_budget(gbm(), m).map_err(|e| e.to_string())?;
        let (shift, head, _, var) = closed_form::budget(&g, m);
        worst = worst
            .max((sol.shift - shift).abs())
            .max((sol.q.head() - head).abs())
            .max((sol.min_variance - var).abs());
        worst = worst.max((sol.q.expected_horizon() - m).abs());
    }
    Ok((worst < 1e-8, format!("max_deviation={worst:e}")))
}

fn mse() -> Check {
    let grid = [0.25, 0.5, 1.0, 1.81818, 2.0, 3.0, 5.0, 10.0];
    let rows = mse_compare(&ExpLevySpec::reference(), &grid).map_err(|e| e.to_string())?;
    let worst = rows
        .iter()
        .map(|p| p.mse_fixed - p.mse_randomized)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((worst < 0.0, format!("max_mse_gap={worst:e}")))
}

fn thresholds() -> Check {
    let spec = ExpLevySpec::reference();
    let mut gbm_max: f64 = 0.0;
    for m in linspace(0.05, 20.0, 400) {
        gbm_max = gbm_max.max(exp_levy_threshold(&spec, m).map_err(|e| e.to_string())?.w);
    }
    let mut cir_max: f64 = 0.0;
    for m in linspace(0.025, 10.0, 400) {
        cir_max = cir_max.max(
            cir_threshold(&CirSpec::reference(), m)
                .map_err(|e| e.to_string())?
                .w,
        );
    }
    let small = exp_levy_threshold(&spec, 1e-3)
        .map_err(|e| e.to_string())?
        .w;
    Ok((
        gbm_max < 0.13 && cir_max < 0.14 && small < 1e-3,
        format!("gbm_max_w={gbm_max} cir_max_w={cir_max} w_small={small}"),
    ))
}

fn surface() -> Check {
    let spec = ExpLevySpec::reference();
    let best = solve_work_variance(gbm()).map_err(|e| e.to_string())?;
    let mut flat_min = f64::INFINITY;
    for eta in linspace(0.01, 1.09, 200) {
        flat_min = flat_min.min(work_variance_surface(&spec, 0.0, eta).map_err(|e| e.to_string())?);
    }
    let deltas = linspace(1.81818, 20.0, 200);
    let mut arg = (0.0, f64::INFINITY);
    for &d in &deltas {
        let p = work_variance_surface(&spec, d, 0.55).map_err(|e| e.to_string())?;
        if p < arg.1 {
            arg = (d, p);
        }
    }
    let step = deltas[1] - deltas[0];
    Ok((
        flat_min > best.product && (arg.0 - best.shift).abs() <= step,
        format!("min_p_delta0={flat_min} argmin_delta={}", arg.0),
    ))
}

fn cir_budget() -> Check {
    let profile: Arc<dyn GammaProfile> =
        Arc::new(cir_gamma(&CirSpec::reference()).map_err(|e| e.to_string())?);
    let mut worst: f64 = 0.0;
    for m in [0.5, 1.0, 1.81818, 3.0, 10.0] {
        let sol = solve_budget(profile.clone(), m).map_err(|e| e.to_string())?;
        worst = worst.max((sol.q.expected_horizon() - m).abs());
    }
    Ok((worst < 1e-8, format!("max_budget_error={worst:e}")))
}

fn unbiased() -> Check {
    let model = CostModel::Gbm(ExpLevySpec::reference());
    let q = solve_budget(gbm(), 3.0).map_err(|e| e.to_string())?.q;
    let cfg = RunConfig::new(20_000, 0.01, 42);
    let a = randomized_estimate(&model, &q, &cfg).map_err(|e| e.to_string())?;
    let b = randomized_estimate(&model, &q, &cfg.with_workers(2)).map_err(|e| e.to_string())?;
    let z = (a.mean - 1.7689) / a.stderr;
    Ok((
        z.abs() < 3.29 && a == b,
        format!(
            "mean={} stderr={} z={z} worker_invariant={}",
            a.mean,
            a.stderr,
            a == b
        ),
    ))
}

pub fn run() -> Result<(), CliError> {
    let checks: [NamedCheck; 8] = [
        ("constants", constants),
        ("work_variance", work_variance),
        ("closed_forms", closed_forms),
        ("cir_budget", cir_budget),
        ("mse_ordering", mse),
        ("thresholds", thresholds),
        ("surface", surface),
        ("unbiased", unbiased),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error={e}")),
        };
        failed += usize::from(!ok);
        println!("check.{name}={}", if ok { "pass" } else { "fail" });
        println!("check.{name}.detail={detail}");
    }
    println!("verify.passed={}", checks.len() - failed);
    println!("verify.failed={failed}");
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Verify(failed))
    }
}
