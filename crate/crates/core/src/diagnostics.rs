//! Bias, variance and utility comparisons between the fixed-horizon estimator
//! `∫₀^m g` and the budget-optimal randomized estimator with `E[N] = m`.
//!
//! Exponential Lévy quantities are closed forms `Δ₁…Δ₄` (squared bias, the two
//! randomized-variance branches, fixed-horizon variance), all proportional to
//! `x₀^{2β}`. CIR quantities combine closed forms with the generic budget
//! solver.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{self, CirSpec, ExpLevySpec, GammaProfile, ModelError};
use crate::numerics::{self, exp_diff_quotient, one_minus_exp_over, NumericsError};
use crate::randomization::{self, ShiftedSurvival, SolverError, Tail};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("invalid argument {name} = {value}: {reason}")]
    Argument {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("threshold undefined at m = {m}: randomized variance {var_randomized} does not exceed fixed variance {var_fixed}")]
    DegenerateDenominator {
        m: f64,
        var_randomized: f64,
        var_fixed: f64,
    },
    #[error("eta = {eta} must lie in (0, {limit}); the variance integral diverges otherwise")]
    EtaDomain { eta: f64, limit: f64 },
    #[error("∫Γ/Q diverges: tail rate {tail_rate} is not below the decay rate {gamma_rate} of Γ")]
    Divergent { tail_rate: f64, gamma_rate: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub m: f64,
    pub w: f64,
    pub bias_sq: f64,
    pub var_randomized: f64,
    pub var_fixed: f64,
    pub mse_fixed: f64,
    pub mse_randomized: f64,
}

impl ThresholdPoint {
    fn new(
        m: f64,
        bias_sq: f64,
        var_randomized: f64,
        var_fixed: f64,
    ) -> Result<Self, DiagnosticsError> {
        let gap = var_randomized - var_fixed;
        if !(gap > 0.0) {
            return Err(DiagnosticsError::DegenerateDenominator {
                m,
                var_randomized,
                var_fixed,
            });
        }
        Ok(ThresholdPoint {
            m,
            w: bias_sq / gap,
            bias_sq,
            var_randomized,
            var_fixed,
            mse_fixed: var_fixed + bias_sq,
            mse_randomized: var_randomized,
        })
    }
}

fn check_budget(m: f64) -> Result<(), DiagnosticsError> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(DiagnosticsError::Argument {
            name: "m",
            value: m,
            reason: "budget must be positive and finite",
        })
    }
}

// ---------------------------------------------------------------------------
// Exponential Lévy
// ---------------------------------------------------------------------------

/// `(|φ₁|, |φ₂|, x₀^{2β})`.
fn exp_levy_rates(spec: &ExpLevySpec) -> Result<(f64, f64, f64), ModelError> {
    let e = models::levy_exponents(spec)?;
    Ok((
        e.first_rate(),
        e.second_rate(),
        spec.x0.powf(2.0 * spec.beta),
    ))
}

/// The four closed-form terms at budget `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpLevyDeltas {
    /// Squared bias of the fixed estimator, `(E ∫_m^∞ g)²`.
    pub delta1: f64,
    /// Randomized variance, branch `m|φ₂| ≤ 2`.
    pub delta2: f64,
    /// Randomized variance, branch `m|φ₂| > 2`.
    pub delta3: f64,
    /// Fixed-horizon variance `Var ∫₀^m g`.
    pub delta4: f64,
}

pub fn exp_levy_deltas(spec: &ExpLevySpec, m: f64) -> Result<ExpLevyDeltas, DiagnosticsError> {
    check_budget(m)?;
    let (p1, p2, scale) = exp_levy_rates(spec)?;
    let alpha_sq = 1.0 / (p1 * p1);
    let delta1 = (-2.0 * p1 * m).exp() / (p1 * p1);
    let delta2 = 8.0 / (m * p1 * p2 * p2) - alpha_sq;
    let delta3 = (2.0 + 2.0 * (2.0 - m * p2).exp()) / (p1 * p2) - alpha_sq;
    let mean = m * one_minus_exp_over(p1 * m);
    let delta4 = 2.0 * m * one_minus_exp_over(p2 * m) / p1
        + 2.0 / p1 * exp_diff_quotient(m, p2, p1)
        - mean * mean;
    Ok(ExpLevyDeltas {
        delta1: scale * delta1,
        delta2: scale * delta2,
        delta3: scale * delta3,
        delta4: scale * delta4,
    })
}

/// Threshold `w(m)` with its ingredients.
pub fn exp_levy_threshold(spec: &ExpLevySpec, m: f64) -> Result<ThresholdPoint, DiagnosticsError> {
    let d = exp_levy_deltas(spec, m)?;
    let p2 = models::levy_exponents(spec)?.second_rate();
    let var_randomized = if m * p2 <= 2.0 { d.delta2 } else { d.delta3 };
    ThresholdPoint::new(m, d.delta1, var_randomized, d.delta4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub m: f64,
    pub mse_fixed: f64,
    pub mse_randomized: f64,
}

/// MSE of the fixed estimator (`Δ₄ + Δ₁`) against the randomized variance on a grid.
pub fn mse_compare(spec: &ExpLevySpec, m_grid: &[f64]) -> Result<Vec<MsePoint>, DiagnosticsError> {
    let p2 = models::levy_exponents(spec)?.second_rate();
    m_grid
        .iter()
        .map(|&m| {
            let d = exp_levy_deltas(spec, m)?;
            Ok(MsePoint {
                m,
                mse_fixed: d.delta4 + d.delta1,
                mse_randomized: if m * p2 <= 2.0 { d.delta2 } else { d.delta3 },
            })
        })
        .collect()
}

/// Work–variance product `p(δ, η)` of the shifted exponential with shift `δ`
/// and rate `η`.
pub fn work_variance_surface(
    spec: &ExpLevySpec,
    delta: f64,
    eta: f64,
) -> Result<f64, DiagnosticsError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(DiagnosticsError::Argument {
            name: "delta",
            value: delta,
            reason: "shift must be finite and non-negative",
        });
    }
    let (p1, p2, scale) = exp_levy_rates(spec)?;
    if !(eta > 0.0 && eta < p2) {
        return Err(DiagnosticsError::EtaDomain { eta, limit: p2 });
    }
    let decay = (-delta * p2).exp();
    let variance =
        2.0 * (1.0 - decay) / (p1 * p2) + 2.0 * decay / (p1 * (p2 - eta)) - 1.0 / (p1 * p1);
    Ok(scale * variance * (delta + 1.0 / eta))
}

// ---------------------------------------------------------------------------
// CIR
// ---------------------------------------------------------------------------

/// `(E ∫_m^∞ g)² = (θ/c e^{-cm} + (x₀-θ)/(c+κ) e^{-(c+κ)m})²`.
pub fn cir_bias_sq(spec: &CirSpec, m: f64) -> Result<f64, DiagnosticsError> {
    check_budget(m)?;
    spec.validate()?;
    let CirSpec {
        kappa: k,
        theta: th,
        x0,
        c,
        ..
    } = *spec;
    let tail = th / c * (-c * m).exp() + (x0 - th) / (c + k) * (-(c + k) * m).exp();
    Ok(tail * tail)
}

fn cir_fixed_variance_terms(
    spec: &CirSpec,
    m: f64,
    corrected: bool,
) -> Result<f64, DiagnosticsError> {
    check_budget(m)?;
    spec.validate()?;
    let CirSpec {
        kappa: k,
        theta: th,
        sigma: sg,
        x0,
        c,
    } = *spec;
    let e = |r: f64| (-r * m).exp();
    let s2 = sg * sg;
    let d = (th - x0).powi(2) + s2 / (2.0 * k) * (th - 2.0 * x0);
    let one_c = 1.0 - e(c);
    let one_kc = 1.0 - e(k + c);
    let int_2c_k = m * one_minus_exp_over((2.0 * c + k) * m);
    let (a_term, d_term) = if corrected {
        (
            th * th / (c * c) * one_c * one_c,
            d * one_kc * one_kc / ((k + c) * (k + c)),
        )
    } else {
        (th * th / c * one_c * one_c, d * one_kc * one_kc / (k + c))
    };
    let mean = (x0 - th) * one_kc / (c + k) + th * one_c / c;
    Ok(a_term
        + (x0 - th) * (th + s2 / k) * 2.0 / (c + k) * (int_2c_k - (e(c + k) - e(2.0 * c + k)) / c)
        + 2.0 * th * (x0 - th) / c * (int_2c_k - (e(c) - e(2.0 * c + k)) / (k + c))
        + d_term
        + th * s2 / (k * (c + k))
            * (m * one_minus_exp_over(2.0 * c * m) + exp_diff_quotient(m, c + k, 2.0 * c))
        - mean * mean)
}

/// `Var ∫₀^m g` for the CIR cost `e^{-ct} X_t`.
pub fn cir_fixed_variance(spec: &CirSpec, m: f64) -> Result<f64, DiagnosticsError> {
    cir_fixed_variance_terms(spec, m, true)
}

/// The fixed-horizon variance with `θ²/c` and `(…)/(κ+c)` in place of
/// `θ²/c²` and `(…)/(κ+c)²`. It disagrees with quadrature of the cross moment
/// and is kept only for comparison.
pub fn cir_fixed_variance_unsquared(spec: &CirSpec, m: f64) -> Result<f64, DiagnosticsError> {
    cir_fixed_variance_terms(spec, m, false)
}

/// Threshold `w(m)` for the CIR cost; the randomized variance comes from
/// [`randomization::solve_budget`].
pub fn cir_threshold(spec: &CirSpec, m: f64) -> Result<ThresholdPoint, DiagnosticsError> {
    let bias_sq = cir_bias_sq(spec, m)?;
    let profile: Arc<dyn GammaProfile> = Arc::new(models::cir_gamma(spec)?);
    let var_randomized = randomization::solve_budget(profile, m)?.min_variance;
    ThresholdPoint::new(m, bias_sq, var_randomized, cir_fixed_variance(spec, m)?)
}

// ---------------------------------------------------------------------------
// Utility and generic variances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub w: f64,
}

impl UtilitySpec {
    pub fn new(w: f64) -> Result<Self, DiagnosticsError> {
        if w >= 0.0 && w.is_finite() {
            Ok(UtilitySpec { w })
        } else {
            Err(DiagnosticsError::Argument {
                name: "w",
                value: w,
                reason: "variance weight must be non-negative",
            })
        }
    }
}

/// `U_w = -bias² - w · Var`.
pub fn utility(u: UtilitySpec, bias_sq: f64, variance: f64) -> f64 {
    -bias_sq - u.w * variance
}

/// `Var ∫₀^∞ g = 2∫₀^∞ Γ - α²`.
pub fn infinite_horizon_variance(profile: &dyn GammaProfile) -> Result<f64, DiagnosticsError> {
    let alpha = profile.alpha();
    Ok(2.0 * profile.int_gamma_total()? - alpha * alpha)
}

/// Variance `2∫₀^∞ Γ / Q - α²` of the randomized estimator with horizon law `q`.
pub fn randomized_variance_analytic(
    profile: &dyn GammaProfile,
    q: &ShiftedSurvival,
) -> Result<f64, DiagnosticsError> {
    let alpha = profile.alpha();
    let shift = q.shift();
    let head = q.head();
    let tail = match q.tail() {
        Tail::SqrtGamma {
            gamma_at_shift,
            tail_integral,
            ..
        } => gamma_at_shift.sqrt() * tail_integral,
        Tail::Exponential { rate } => {
            let rate = *rate;
            if let Some((gamma0, rho)) = profile.exponential_form() {
                if !(rate < rho) {
                    return Err(DiagnosticsError::Divergent {
                        tail_rate: rate,
                        gamma_rate: rho,
                    });
                }
                gamma0 * (-rho * shift).exp() / (rho - rate)
            } else {
                let hint = profile.decay_rate_hint();
                if !(rate < hint) {
                    return Err(DiagnosticsError::Divergent {
                        tail_rate: rate,
                        gamma_rate: hint,
                    });
                }
                numerics::integrate_semi_infinite(
                    |s| profile.gamma(s) * (rate * (s - shift)).exp(),
                    shift,
                    &profile.quad_config(),
                    Some(hint - rate),
                )?
            }
        }
    };
    Ok(2.0 * (profile.int_gamma(shift)? + tail) / head - alpha * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{cir_gamma, exp_levy_gamma};
    use crate::numerics::{integrate, QuadConfig};

    fn gbm() -> ExpLevySpec {
        ExpLevySpec::reference()
    }

    fn gbm_profile() -> Arc<dyn GammaProfile> {
        Arc::new(exp_levy_gamma(&gbm()).unwrap())
    }

    #[test]
    fn reference_deltas() {
        let d = exp_levy_deltas(&gbm(), 1.0).unwrap();
        assert!((d.delta2 - 8.566_301).abs() < 1e-5);
        assert!((d.delta4 - 0.005_186_6).abs() < 1e-6);
        let budget = randomization::solve_budget(gbm_profile(), 1.0).unwrap();
        assert!((d.delta2 - budget.min_variance).abs() < 1e-10);
        let d3 = exp_levy_deltas(&gbm(), 3.0).unwrap().delta3;
        let budget = randomization::solve_budget(gbm_profile(), 3.0).unwrap();
        assert!((d3 - budget.min_variance).abs() < 1e-9 * d3);
    }

    #[test]
    fn delta4_matches_quadrature() {
        let (p1, p2) = (0.565_312_5, 1.1);
        let cfg = QuadConfig::default();
        for m in [0.3, 1.0, 4.0] {
            let inner =
                |s: f64| integrate(|t: f64| (-(t - s) * p1 - s * p2).exp(), s, m, &cfg).unwrap();
            let second = 2.0 * integrate(inner, 0.0, m, &cfg).unwrap();
            let mean = (1.0 - (-p1 * m).exp()) / p1;
            let d4 = exp_levy_deltas(&gbm(), m).unwrap().delta4;
            assert!((d4 - (second - mean * mean)).abs() < 1e-10);
        }
    }

    #[test]
    fn branch_continuity() {
        let d = exp_levy_deltas(&gbm(), 2.0 / 1.1).unwrap();
        assert!((d.delta2 - d.delta3).abs() < 1e-10);
    }

    #[test]
    fn threshold_bounds() {
        let max = numerics::linspace(0.05, 20.0, 400)
            .into_iter()
            .map(|m| exp_levy_threshold(&gbm(), m).unwrap().w)
            .fold(0.0, f64::max);
        assert!(max < 0.13 && max > 0.12, "{max}");
        assert!(exp_levy_threshold(&gbm(), 1e-3).unwrap().w < 1e-3);
    }

    #[test]
    fn threshold_is_x0_invariant() {
        let spec = ExpLevySpec { x0: 2.5, ..gbm() };
        let a = exp_levy_threshold(&gbm(), 2.0).unwrap();
        let b = exp_levy_threshold(&spec, 2.0).unwrap();
        assert!((a.w - b.w).abs() < 1e-12);
        let scale = 2.5f64.powf(1.0);
        assert!((b.var_fixed - scale * a.var_fixed).abs() < 1e-12);
    }

    #[test]
    fn mse_ordering_reference() {
        let grid = [0.25, 0.5, 1.0, 1.818_18, 2.0, 3.0, 5.0, 10.0];
        for p in mse_compare(&gbm(), &grid).unwrap() {
            assert!(p.mse_fixed < p.mse_randomized, "{p:?}");
        }
        let far = mse_compare(&gbm(), &[60.0]).unwrap()[0];
        let limit = infinite_horizon_variance(gbm_profile().as_ref()).unwrap();
        assert!((far.mse_fixed - limit).abs() < 1e-10);
        assert!((far.mse_randomized - limit).abs() < 1e-10);
    }

    #[test]
    fn surface_reference_values() {
        let s = 4.979_055_031;
        let best = work_variance_surface(&gbm(), s, 0.55).unwrap();
        assert!((best - 0.683_585).abs() < 1e-6);
        for delta in [1.818_18, 4.0, 4.9, 5.05, 6.0, 20.0] {
            assert!(work_variance_surface(&gbm(), delta, 0.55).unwrap() > best);
        }
        for eta in numerics::linspace(0.01, 1.09, 200) {
            assert!(work_variance_surface(&gbm(), 0.0, eta).unwrap() > best);
        }
        assert!(matches!(
            work_variance_surface(&gbm(), 1.0, 1.1),
            Err(DiagnosticsError::EtaDomain { .. })
        ));
        assert!(work_variance_surface(&gbm(), -1.0, 0.5).is_err());
    }

    #[test]
    fn surface_matches_identity_away_from_unit_x0() {
        let spec = ExpLevySpec { x0: 2.0, ..gbm() };
        let profile = exp_levy_gamma(&spec).unwrap();
        for (delta, eta) in [(0.0, 0.3), (2.0, 0.55), (5.0, 1.0)] {
            let q = ShiftedSurvival::shifted_exponential(delta, eta).unwrap();
            let product =
                randomized_variance_analytic(&profile, &q).unwrap() * q.expected_horizon();
            let p = work_variance_surface(&spec, delta, eta).unwrap();
            assert!((p - product).abs() < 1e-10 * p);
        }
    }

    #[test]
    fn analytic_variance_identities() {
        let profile = gbm_profile();
        let q = randomization::solve_budget(profile.clone(), 1.0).unwrap().q;
        let v = randomized_variance_analytic(profile.as_ref(), &q).unwrap();
        assert!((v - 8.566_301).abs() < 1e-5);
        let wv = randomization::solve_work_variance(profile.clone()).unwrap();
        let v = randomized_variance_analytic(profile.as_ref(), &wv.q).unwrap();
        assert!((v - wv.product / wv.optimal_budget).abs() < 1e-10);
        let inf = infinite_horizon_variance(profile.as_ref()).unwrap();
        assert!((inf - 0.087).abs() < 1e-3);
        let q = ShiftedSurvival::shifted_exponential(0.0, 1.1).unwrap();
        assert!(matches!(
            randomized_variance_analytic(profile.as_ref(), &q),
            Err(DiagnosticsError::Divergent { .. })
        ));
    }

    #[test]
    fn analytic_variance_matches_solvers_cir() {
        let profile: Arc<dyn GammaProfile> = Arc::new(cir_gamma(&CirSpec::reference()).unwrap());
        for m in [0.5, 1.0, 3.0, 10.0] {
            let sol = randomization::solve_budget(profile.clone(), m).unwrap();
            let v = randomized_variance_analytic(profile.as_ref(), &sol.q).unwrap();
            assert!(
                (v - sol.min_variance).abs() < 1e-9 * v.abs(),
                "m={m}: {v} vs {}",
                sol.min_variance
            );
        }
        let q = ShiftedSurvival::shifted_exponential(0.5, 0.3).unwrap();
        let v = randomized_variance_analytic(profile.as_ref(), &q).unwrap();
        assert!(v > infinite_horizon_variance(profile.as_ref()).unwrap());
    }

    /// Independent second moment `E[X_s X_t]`, `s ≤ t`, of the CIR process.
    fn cir_cross(spec: &CirSpec, s: f64, t: f64) -> f64 {
        let CirSpec {
            kappa: k,
            theta: th,
            sigma: sg,
            x0,
            ..
        } = *spec;
        let mean = th + (x0 - th) * (-k * s).exp();
        let var = x0 * sg * sg / k * ((-k * s).exp() - (-2.0 * k * s).exp())
            + th * sg * sg / (2.0 * k) * (1.0 - (-k * s).exp()).powi(2);
        th * mean + (-k * (t - s)).exp() * (var + mean * mean - th * mean)
    }

    #[test]
    fn cir_fixed_variance_matches_double_quadrature() {
        let spec = CirSpec::reference();
        let cfg = QuadConfig::default();
        let c = spec.c;
        for (m, expected) in [
            (0.5, 0.000_402_880),
            (1.0, 0.000_974_248),
            (3.0, 0.001_596_42),
        ] {
            let inner = |s: f64| {
                integrate(
                    |t: f64| (-c * (s + t)).exp() * cir_cross(&spec, s, t),
                    s,
                    m,
                    &cfg,
                )
                .unwrap()
            };
            let second = 2.0 * integrate(inner, 0.0, m, &cfg).unwrap();
            let mean = integrate(|s: f64| (-c * s).exp() * spec.mean(s), 0.0, m, &cfg).unwrap();
            let quad = second - mean * mean;
            let v = cir_fixed_variance(&spec, m).unwrap();
            assert!((v - quad).abs() < 1e-12, "m={m}: {v} vs {quad}");
            assert!((v - expected).abs() < 1e-8);
        }
        assert!((cir_fixed_variance_unsquared(&spec, 1.0).unwrap() - 0.000_974_248).abs() > 1e-3);
        assert!(cir_fixed_variance_unsquared(&spec, 3.0).unwrap() < 0.0);
    }

    #[test]
    fn cir_threshold_bounds() {
        let spec = CirSpec::reference();
        let ws: Vec<f64> = numerics::linspace(0.025, 10.0, 400)
            .into_iter()
            .map(|m| cir_threshold(&spec, m).unwrap().w)
            .collect();
        let max = ws.iter().copied().fold(0.0, f64::max);
        assert!(max < 0.14, "{max}");
        assert!(ws[1] > ws[0]);
        assert!(cir_threshold(&spec, 1e-3).unwrap().w < 1e-3);
    }

    #[test]
    fn utility_definition() {
        let u = UtilitySpec::new(0.0).unwrap();
        assert_eq!(utility(u, 0.0, 5.0), 0.0);
        let p = exp_levy_threshold(&gbm(), 2.0).unwrap();
        let one = UtilitySpec::new(1.0).unwrap();
        assert!((utility(one, p.bias_sq, p.var_fixed) + p.mse_fixed).abs() < 1e-15);
        for frac in [0.1, 0.5, 0.99] {
            let u = UtilitySpec::new(frac * p.w).unwrap();
            assert!(utility(u, 0.0, p.var_randomized) > utility(u, p.bias_sq, p.var_fixed));
        }
        assert!(UtilitySpec::new(-1.0).is_err());
    }

    #[test]
    fn bias_decreases_to_alpha_sq() {
        let mut prev = f64::INFINITY;
        for m in numerics::linspace(0.01, 10.0, 100) {
            let b = exp_levy_deltas(&gbm(), m).unwrap().delta1;
            assert!(b < prev);
            prev = b;
        }
        let alpha = 1.0 / 0.565_312_5;
        assert!((exp_levy_deltas(&gbm(), 1e-12).unwrap().delta1 - alpha * alpha).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        assert!(exp_levy_threshold(&gbm(), 0.0).is_err());
        assert!(cir_threshold(&CirSpec::reference(), -1.0).is_err());
        let err = ThresholdPoint::new(1.0, 0.1, 0.5, 0.5).unwrap_err();
        assert!(matches!(
            err,
            DiagnosticsError::DegenerateDenominator { .. }
        ));
    }
}
