//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use common::{random_exp_levy_specs, rel_err};
use rumc::diagnostics::{
    self, cir_threshold, exp_levy_threshold, mse_compare, work_variance_surface,
};
use rumc::estimators::{fixed_estimate, randomized_estimate, RunConfig};
use rumc::models::{
    cir_gamma, exp_levy_gamma, levy_exponents, CirSpec, CostModel, ExpLevySpec, FnGamma,
    GammaProfile,
};
use rumc::numerics::linspace;
use rumc::randomization::{self, closed_form, solve_budget, solve_penalty, solve_work_variance};

const ALPHA_GBM: f64 = 1.7689;

fn workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn gbm_spec() -> ExpLevySpec {
    ExpLevySpec::reference()
}

fn gbm() -> Arc<dyn GammaProfile> {
    Arc::new(exp_levy_gamma(&gbm_spec()).unwrap())
}

/// The exponential profile seen only through quadrature and root finding.
fn gbm_opaque() -> Arc<dyn GammaProfile> {
    let g = exp_levy_gamma(&gbm_spec()).unwrap();
    let (gamma0, rho) = g.exponential_form().unwrap();
    Arc::new(FnGamma::new(
        move |s: f64| gamma0 * (-rho * s).exp(),
        g.alpha(),
        rho,
    ))
}

fn cir() -> Arc<dyn GammaProfile> {
    Arc::new(cir_gamma(&CirSpec::reference()).unwrap())
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_constants() -> Outcome {
    let g = exp_levy_gamma(&gbm_spec()).map_err(|e| e.to_string())?;
    let e = levy_exponents(&gbm_spec()).map_err(|e| e.to_string())?;
    let alpha = g.alpha();
    let eta = 0.5 * e.second_rate();
    check(
        (alpha - ALPHA_GBM).abs() < 1e-4 && (eta - 0.55).abs() < 1e-12,
        format!("alpha={alpha:.9} eta*={eta:.15}"),
    )
}

fn c2_work_variance() -> Outcome {
    let sol = solve_work_variance(gbm()).map_err(|e| e.to_string())?;
    let residual = randomization::work_variance_equation(gbm().as_ref(), sol.shift)
        .map_err(|e| e.to_string())?;
    let m_target = sol.shift + 2.0 / 1.1;
    check(
        (sol.product - 0.68358).abs() < 5e-3
            && (sol.optimal_budget - m_target).abs() < 1e-8
            && residual.abs() < 1e-10,
        format!(
            "s**={:.9} m**={:.9} product={:.9} residual={residual:.2e}",
            sol.shift, sol.optimal_budget, sol.product
        ),
    )
}

fn c3_equivalence() -> Outcome {
    let g = exp_levy_gamma(&gbm_spec()).unwrap();
    let mut worst: f64 = 0.0;
    for profile in [gbm(), gbm_opaque()] {
        for lambda in [0.5, 1.0, 3.53786, 10.0] {
            let sol = solve_penalty(profile.clone(), lambda).map_err(|e| e.to_string())?;
            let (shift, head, rate, obj) = closed_form::penalty(&g, lambda);
            worst = worst
                .max((sol.shift - shift).abs())
                .max((sol.q.head() - head).abs())
                .max((sol.q.tail_rate() - rate).abs())
                .max((sol.objective - obj).abs());
        }
        for m in [0.5, 1.0, 1.81818, 3.0, 10.0] {
            let sol = solve_budget(profile.clone(), m).map_err(|e| e.to_string())?;
            let (shift, head, rate, var) = closed_form::budget(&g, m);
            worst = worst
                .max((sol.shift - shift).abs())
                .max((sol.q.head() - head).abs())
                .max((sol.q.tail_rate() - rate).abs())
                .max((sol.min_variance - var).abs());
        }
    }
    check(worst < 1e-8, format!("max abs deviation={worst:.2e}"))
}

fn c4_budget_constraint() -> Outcome {
    let mut worst: f64 = 0.0;
    for profile in [gbm(), cir()] {
        for m in [0.5, 1.0, 1.81818, 3.0, 10.0] {
            let sol = solve_budget(profile.clone(), m).map_err(|e| e.to_string())?;
            worst = worst.max((sol.q.expected_horizon() - m).abs());
        }
    }
    check(worst < 1e-8, format!("max |E[N]-m|={worst:.2e}"))
}

fn c5_unbiasedness() -> Outcome {
    let model = CostModel::Gbm(gbm_spec());
    let qs = [
        (
            "penalty(1)",
            solve_penalty(gbm(), 1.0).map_err(|e| e.to_string())?.q,
        ),
        (
            "budget(3)",
            solve_budget(gbm(), 3.0).map_err(|e| e.to_string())?.q,
        ),
        (
            "work_variance",
            solve_work_variance(gbm()).map_err(|e| e.to_string())?.q,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, q)) in qs.iter().enumerate() {
        let cfg = RunConfig::new(100_000, 0.01, 5000 + k as u64).with_workers(workers());
        let r = randomized_estimate(&model, q, &cfg).map_err(|e| e.to_string())?;
        let z = (r.mean - ALPHA_GBM) / r.stderr;
        ok &= z.abs() < 3.29;
        parts.push(format!(
            "{name}: mean={:.5} se={:.5} z={z:.2}",
            r.mean, r.stderr
        ));
    }
    check(ok, parts.join("; "))
}

fn c6_variance() -> Outcome {
    let model = CostModel::Gbm(gbm_spec());
    let budget = solve_budget(gbm(), 3.0).map_err(|e| e.to_string())?;
    let cfg = RunConfig::new(1_000_000, 0.002, 6001).with_workers(workers());
    let r = randomized_estimate(&model, &budget.q, &cfg).map_err(|e| e.to_string())?;
    let rand_err = rel_err(r.sample_variance, budget.min_variance);
    let delta4 = diagnostics::exp_levy_deltas(&gbm_spec(), 1.0)
        .map_err(|e| e.to_string())?
        .delta4;
    let cfg = RunConfig::new(1_000_000, 0.002, 6002).with_workers(workers());
    let f = fixed_estimate(&model, 1.0, &cfg).map_err(|e| e.to_string())?;
    let fixed_err = rel_err(f.sample_variance, delta4);
    check(
        rand_err < 0.05 && fixed_err < 0.05,
        format!(
            "randomized var={:.5} vs {:.5} ({:.2}%); fixed var={:.6} vs {delta4:.6} ({:.2}%)",
            r.sample_variance,
            budget.min_variance,
            100.0 * rand_err,
            f.sample_variance,
            100.0 * fixed_err
        ),
    )
}

fn c7_mse_ordering() -> Outcome {
    let grid = [0.25, 0.5, 1.0, 1.81818, 2.0, 3.0, 5.0, 10.0];
    let mut specs = vec![gbm_spec()];
    specs.extend(random_exp_levy_specs(20, 7));
    let mut worst = f64::NEG_INFINITY;
    for spec in &specs {
        for p in mse_compare(spec, &grid).map_err(|e| e.to_string())? {
            worst = worst.max(p.mse_fixed - p.mse_randomized);
        }
    }
    check(
        worst < 0.0,
        format!("{} parameter sets, max(MSE1-MSE2)={worst:.3e}", specs.len()),
    )
}

fn c8_thresholds() -> Outcome {
    let gbm_max = linspace(0.05, 20.0, 400)
        .into_iter()
        .map(|m| exp_levy_threshold(&gbm_spec(), m).map(|p| p.w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(0.0, f64::max);
    let cir_max = linspace(0.025, 10.0, 400)
        .into_iter()
        .map(|m| cir_threshold(&CirSpec::reference(), m).map(|p| p.w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(0.0, f64::max);
    let w_small = exp_levy_threshold(&gbm_spec(), 1e-3)
        .map_err(|e| e.to_string())?
        .w;
    check(
        gbm_max < 0.13 && cir_max < 0.14 && w_small < 1e-3,
        format!("gbm max w={gbm_max:.5} cir max w={cir_max:.5} w(1e-3)={w_small:.2e}"),
    )
}

fn c9_brute_force() -> Outcome {
    let profile = gbm();
    let grid = linspace(0.0, 30.0, 601);
    let h = grid[1] - grid[0];
    let q_grid: Vec<f64> = (0..=12_000)
        .map(|k| 10f64.powf(-(k as f64) / 1000.0))
        .collect();
    let mut worst: f64 = 0.0;
    for lambda in [0.5, 1.0, 2.0] {
        let sol = solve_penalty(profile.clone(), lambda).map_err(|e| e.to_string())?;
        let pointwise: Vec<f64> = grid
            .iter()
            .map(|&s| {
                let g = profile.gamma(s);
                q_grid
                    .iter()
                    .map(|&q| 2.0 * g / q + lambda * q)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let brute: f64 = h
            * (pointwise.iter().sum::<f64>()
                - 0.5 * (pointwise[0] + pointwise[pointwise.len() - 1]));
        worst = worst.max(rel_err(brute, sol.objective));
    }
    check(worst < 1e-3, format!("max relative gap={worst:.2e}"))
}

fn c10_orderings() -> Outcome {
    let mut profiles: Vec<Arc<dyn GammaProfile>> = vec![gbm(), cir()];
    for spec in random_exp_levy_specs(20, 10) {
        profiles.push(Arc::new(exp_levy_gamma(&spec).map_err(|e| e.to_string())?));
    }
    let mut min_margin = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    for p in &profiles {
        let alpha = p.alpha();
        let total = p.int_gamma_total().map_err(|e| e.to_string())?;
        min_margin = min_margin.min(total - 0.5 * alpha * alpha);
        let inf = diagnostics::infinite_horizon_variance(p.as_ref()).map_err(|e| e.to_string())?;
        let scale = 1.0 / p.decay_rate_hint();
        let mut qs = Vec::new();
        for m in [0.5, 1.0, 2.0, 5.0, 10.0] {
            qs.push(
                solve_budget(p.clone(), m * scale)
                    .map_err(|e| e.to_string())?
                    .q,
            );
        }
        qs.push(solve_work_variance(p.clone()).map_err(|e| e.to_string())?.q);
        qs.push(
            solve_penalty(p.clone(), 0.5 * p.gamma_at_zero())
                .map_err(|e| e.to_string())?
                .q,
        );
        for q in &qs {
            let v = diagnostics::randomized_variance_analytic(p.as_ref(), q)
                .map_err(|e| e.to_string())?;
            min_gap = min_gap.min((v - inf) / inf.abs());
        }
    }
    check(
        min_margin > 0.0 && min_gap >= 0.0,
        format!(
            "{} profiles, min(∫Γ-α²/2)={min_margin:.3e}, min relative excess variance={min_gap:.3e}",
            profiles.len()
        ),
    )
}

fn c11_shapes() -> Outcome {
    let best = solve_work_variance(gbm()).map_err(|e| e.to_string())?;
    let flat_min = linspace(0.01, 1.09, 200)
        .into_iter()
        .map(|eta| work_variance_surface(&gbm_spec(), 0.0, eta))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let deltas = linspace(1.81818, 20.0, 200);
    let step = deltas[1] - deltas[0];
    let values = deltas
        .iter()
        .map(|&d| work_variance_surface(&gbm_spec(), d, 0.55))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let (arg, _) =
        values.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc },
        );
    let argmin = deltas[arg];
    check(
        flat_min > best.product && (argmin - best.shift).abs() <= step,
        format!(
            "min p(0,eta)={flat_min:.5} > {:.5}; argmin p(delta,0.55)={argmin:.4} vs s**={:.4} (grid step {step:.4})",
            best.product, best.shift
        ),
    )
}

fn c12_determinism() -> Outcome {
    let model = CostModel::Gbm(gbm_spec());
    let q = solve_budget(gbm(), 3.0).map_err(|e| e.to_string())?.q;
    let cfg = RunConfig::new(20_000, 0.01, 1212);
    let runs = [1usize, 2, 4, 1]
        .iter()
        .map(|&w| {
            let r =
                randomized_estimate(&model, &q, &cfg.with_workers(w)).map_err(|e| e.to_string())?;
            let f = fixed_estimate(&model, 1.0, &cfg.with_workers(w)).map_err(|e| e.to_string())?;
            Ok(format!("{}{}", format_report(&r), format_report(&f)))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    check(
        identical,
        format!(
            "{} runs (workers 1,2,4,1) byte-identical: {identical}",
            runs.len()
        ),
    )
}

fn format_report(r: &rumc::EstimateReport) -> String {
    format!(
        "{:?}|{:016x}|{:016x}|{:016x}|{:016x}|{:016x}|{}|{:016x}\n",
        r.kind,
        r.mean.to_bits(),
        r.sample_variance.to_bits(),
        r.stderr.to_bits(),
        r.ci_low.to_bits(),
        r.ci_high.to_bits(),
        r.n,
        r.total_work.to_bits()
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("closed-form constants", c1_constants),
        ("work-variance optimum", c2_work_variance),
        ("closed-form vs generic solvers", c3_equivalence),
        ("budget constraint", c4_budget_constraint),
        ("statistical unbiasedness", c5_unbiasedness),
        ("analytic vs empirical variance", c6_variance),
        ("fixed MSE below randomized MSE", c7_mse_ordering),
        ("threshold bounds", c8_thresholds),
        ("brute-force penalty optimum", c9_brute_force),
        ("integrability and variance ordering", c10_orderings),
        ("work-variance surface shape", c11_shapes),
        ("determinism", c12_determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
