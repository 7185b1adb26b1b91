//! Optimal randomization distributions for the random truncation horizon.
//!
//! All three optima (penalized variance, variance at fixed expected work,
//! work–variance product) belong to the same shifted family: survival one up
//! to a shift, then a tail proportional to `√Γ(s)`. [`ShiftedSurvival`]
//! represents that family, including the atom at zero that appears in the
//! small-budget case.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{self, ExpLevyGamma, GammaProfile};
use crate::numerics::{self, NumericsError, RootConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid argument {name} = {value}: {reason}")]
    Argument {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("profile violates the positivity and monotonicity requirement at s = {s} ({kind:?})")]
    ProfileInvalid { s: f64, kind: models::ViolationKind },
    #[error("∫Γ = {int_gamma} does not exceed α²/2 = {half_alpha_sq}; Γ and α are inconsistent")]
    AlphaInconsistent { int_gamma: f64, half_alpha_sq: f64 },
    #[error("invalid survival function: {0}")]
    Survival(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

// ---------------------------------------------------------------------------
// Shifted survival family
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub enum Tail {
    /// `Q(N > s) = head · e^{-rate (s - shift)}`.
    Exponential { rate: f64 },
    /// `Q(N > s) = head · √(Γ(s) / Γ(shift))`.
    SqrtGamma {
        profile: Arc<dyn GammaProfile>,
        gamma_at_shift: f64,
        /// `∫_shift^∞ √Γ(u) du`.
        tail_integral: f64,
    },
}

impl fmt::Debug for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tail::Exponential { rate } => {
                f.debug_struct("Exponential").field("rate", rate).finish()
            }
            Tail::SqrtGamma {
                gamma_at_shift,
                tail_integral,
                ..
            } => f
                .debug_struct("SqrtGamma")
                .field("gamma_at_shift", gamma_at_shift)
                .field("tail_integral", tail_integral)
                .finish_non_exhaustive(),
        }
    }
}

/// Survival function `Q(N > s)` equal to `head` on `[0, shift]` followed by a
/// strictly positive, decreasing tail. `1 - head` is the probability mass of
/// `N = 0`; a positive shift implies `head = 1`.
#[derive(Debug, Clone)]
pub struct ShiftedSurvival {
    shift: f64,
    head: f64,
    tail: Tail,
}

/// Serializable description of a [`ShiftedSurvival`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub shift: f64,
    pub head: f64,
    pub atom_at_zero: f64,
    pub tail_kind: String,
    /// Exponential rate, or the tail's asymptotic rate for `sqrt_gamma` tails.
    pub rate: f64,
    pub expected_horizon: f64,
}

impl ShiftedSurvival {
    fn check(shift: f64, head: f64) -> Result<(), SolverError> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(SolverError::Survival(
                "shift must be finite and non-negative",
            ));
        }
        if !(head > 0.0 && head <= 1.0) {
            return Err(SolverError::Survival("head must lie in (0, 1]"));
        }
        if shift > 0.0 && head != 1.0 {
            return Err(SolverError::Survival("a positive shift requires head = 1"));
        }
        Ok(())
    }

    pub fn exponential(shift: f64, head: f64, rate: f64) -> Result<Self, SolverError> {
        Self::check(shift, head)?;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(SolverError::Survival("rate must be positive"));
        }
        Ok(ShiftedSurvival {
            shift,
            head,
            tail: Tail::Exponential { rate },
        })
    }

    /// Shifted exponential with no atom: one up to `shift`, then `e^{-rate(s-shift)}`.
    pub fn shifted_exponential(shift: f64, rate: f64) -> Result<Self, SolverError> {
        Self::exponential(shift, 1.0, rate)
    }

    pub fn sqrt_gamma(
        profile: Arc<dyn GammaProfile>,
        shift: f64,
        head: f64,
    ) -> Result<Self, SolverError> {
        Self::check(shift, head)?;
        let gamma_at_shift = profile.gamma(shift);
        if !(gamma_at_shift > 0.0) {
            return Err(SolverError::Survival("Γ(shift) must be positive"));
        }
        let tail_integral = profile.int_sqrt_gamma_tail(shift)?;
        Ok(ShiftedSurvival {
            shift,
            head,
            tail: Tail::SqrtGamma {
                profile,
                gamma_at_shift,
                tail_integral,
            },
        })
    }

    /// Builds the family member for `profile`, using an exponential tail
    /// whenever `Γ` is a single exponential.
    fn for_profile(
        profile: &Arc<dyn GammaProfile>,
        shift: f64,
        head: f64,
    ) -> Result<Self, SolverError> {
        match profile.exponential_form() {
            Some((_, rho)) => Self::exponential(shift, head, 0.5 * rho),
            None => Self::sqrt_gamma(Arc::clone(profile), shift, head),
        }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn head(&self) -> f64 {
        self.head
    }

    pub fn atom_at_zero(&self) -> f64 {
        1.0 - self.head
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    /// Exponential rate of the tail, or its asymptotic rate for `√Γ` tails.
    pub fn tail_rate(&self) -> f64 {
        match &self.tail {
            Tail::Exponential { rate } => *rate,
            Tail::SqrtGamma { profile, .. } => 0.5 * profile.decay_rate_hint(),
        }
    }

    /// `Q(N > s)` for `s ≥ 0`.
    pub fn survival(&self, s: f64) -> f64 {
        if s <= self.shift {
            return self.head;
        }
        match &self.tail {
            Tail::Exponential { rate } => self.head * (-rate * (s - self.shift)).exp(),
            Tail::SqrtGamma {
                profile,
                gamma_at_shift,
                ..
            } => self.head * (profile.gamma(s).max(0.0) / gamma_at_shift).sqrt(),
        }
    }

    /// `E[N] = ∫₀^∞ Q(N > s) ds`.
    pub fn expected_horizon(&self) -> f64 {
        let tail = match &self.tail {
            Tail::Exponential { rate } => 1.0 / rate,
            Tail::SqrtGamma {
                gamma_at_shift,
                tail_integral,
                ..
            } => tail_integral / gamma_at_shift.sqrt(),
        };
        self.head * (self.shift + tail)
    }

    /// Generalized inverse of the survival function: the horizon `N` produced
    /// by the uniform variate `u ∈ (0, 1)`. Values above `head` land on the
    /// atom at zero.
    pub fn inverse_survival(&self, u: f64) -> f64 {
        if u > self.head {
            return 0.0;
        }
        let ratio = u / self.head;
        match &self.tail {
            Tail::Exponential { rate } => self.shift - ratio.ln() / rate,
            Tail::SqrtGamma {
                profile,
                gamma_at_shift,
                ..
            } => {
                if ratio >= 1.0 {
                    return self.shift;
                }
                let target = gamma_at_shift * ratio * ratio;
                let f = |s: f64| -> Result<f64, NumericsError> { Ok(profile.gamma(s) - target) };
                let span = 1.0 / profile.decay_rate_hint();
                let bracket = numerics::expand_bracket(f, self.shift, self.shift + span, 200);
                match bracket {
                    Ok((lo, hi)) => {
                        let cfg = RootConfig::new(lo, hi).with_tol(1e-12 * (1.0 + hi));
                        numerics::find_root(|s| profile.gamma(s) - target, &cfg).unwrap_or(hi)
                    }
                    // Γ underflowed before reaching the target; the horizon is effectively infinite.
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }

    /// Draws a horizon by inverse transform.
    pub fn sample_horizon<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.inverse_survival(u)
    }

    pub fn record(&self) -> SurvivalRecord {
        SurvivalRecord {
            shift: self.shift,
            head: self.head,
            atom_at_zero: self.atom_at_zero(),
            tail_kind: match self.tail {
                Tail::Exponential { .. } => "exponential".into(),
                Tail::SqrtGamma { .. } => "sqrt_gamma".into(),
            },
            rate: self.tail_rate(),
            expected_horizon: self.expected_horizon(),
        }
    }
}

// ---------------------------------------------------------------------------
// Solutions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PenaltySolution {
    pub lambda: f64,
    pub shift: f64,
    pub q: ShiftedSurvival,
    /// `2∫Γ/Q + λ∫Q` at the optimum.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetCase {
    /// `m > ∫√Γ / √Γ(0)`: positive shift.
    Interior,
    /// `m ≤ ∫√Γ / √Γ(0)`: no shift, possibly an atom at zero.
    Boundary,
}

#[derive(Debug, Clone)]
pub struct BudgetSolution {
    pub budget: f64,
    pub case: BudgetCase,
    pub shift: f64,
    pub q: ShiftedSurvival,
    pub min_variance: f64,
}

#[derive(Debug, Clone)]
pub struct WorkVarianceSolution {
    pub shift: f64,
    pub optimal_budget: f64,
    pub q: ShiftedSurvival,
    pub product: f64,
}

/// Serializable solver output shared by the three objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub objective: String,
    pub shift: f64,
    pub head: f64,
    pub atom_at_zero: f64,
    pub tail_kind: String,
    pub rate: f64,
    pub expected_horizon: f64,
    pub objective_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<BudgetCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_budget: Option<f64>,
}

fn record_from(objective: &str, q: &ShiftedSurvival, objective_value: f64) -> SolutionRecord {
    let r = q.record();
    SolutionRecord {
        objective: objective.into(),
        shift: r.shift,
        head: r.head,
        atom_at_zero: r.atom_at_zero,
        tail_kind: r.tail_kind,
        rate: r.rate,
        expected_horizon: r.expected_horizon,
        objective_value,
        lambda: None,
        budget: None,
        case: None,
        optimal_budget: None,
    }
}

impl PenaltySolution {
    pub fn record(&self) -> SolutionRecord {
        SolutionRecord {
            lambda: Some(self.lambda),
            ..record_from("penalty", &self.q, self.objective)
        }
    }
}

impl BudgetSolution {
    pub fn record(&self) -> SolutionRecord {
        SolutionRecord {
            budget: Some(self.budget),
            case: Some(self.case),
            ..record_from("budget", &self.q, self.min_variance)
        }
    }
}

impl WorkVarianceSolution {
    pub fn record(&self) -> SolutionRecord {
        SolutionRecord {
            optimal_budget: Some(self.optimal_budget),
            ..record_from("work_variance", &self.q, self.product)
        }
    }
}

// ---------------------------------------------------------------------------
// Generic solvers
// ---------------------------------------------------------------------------

const SHIFT_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 80;

fn require_profile(profile: &dyn GammaProfile) -> Result<(), SolverError> {
    let report = models::validate_profile(profile, &models::default_grid(profile));
    match report.first_violation {
        None => Ok(()),
        Some(v) if v.kind == models::ViolationKind::AlphaInconsistent => {
            let alpha = profile.alpha();
            Err(SolverError::AlphaInconsistent {
                int_gamma: profile.int_gamma_total()?,
                half_alpha_sq: 0.5 * alpha * alpha,
            })
        }
        Some(v) => Err(SolverError::ProfileInvalid {
            s: v.s,
            kind: v.kind,
        }),
    }
}

fn newton_derivative<'a>(
    profile: &'a dyn GammaProfile,
    f: impl Fn(f64, f64) -> f64 + 'a,
) -> Option<impl FnMut(f64) -> Result<f64, SolverError> + 'a> {
    profile.gamma_prime(0.0)?;
    Some(move |s: f64| Ok(f(s, profile.gamma_prime(s).unwrap_or(f64::NAN))))
}

/// Minimizes `2∫Γ/Q + λ E[N]`: `Q = 1` up to the first `s` with `Γ(s) ≤ λ/2`,
/// then `√(2Γ(s)/λ)`.
pub fn solve_penalty(
    profile: Arc<dyn GammaProfile>,
    lambda: f64,
) -> Result<PenaltySolution, SolverError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SolverError::Argument {
            name: "lambda",
            value: lambda,
            reason: "must be positive",
        });
    }
    require_profile(profile.as_ref())?;
    let p = profile.as_ref();
    let level = 0.5 * lambda;
    let gamma0 = p.gamma_at_zero();
    let (shift, head) = if gamma0 <= level {
        (0.0, (gamma0 / level).sqrt().min(1.0))
    } else {
        let f = |s: f64| -> Result<f64, SolverError> { Ok(p.gamma(s) - level) };
        let (lo, hi) = numerics::expand_bracket(f, 0.0, 1.0 / p.decay_rate_hint(), MAX_DOUBLINGS)?;
        let cfg = RootConfig::new(lo, hi).with_tol(SHIFT_TOL);
        let df = newton_derivative(p, |_, gp| gp);
        (numerics::find_root_with(f, df, &cfg)?, 1.0)
    };
    let q = ShiftedSurvival::for_profile(&profile, shift, head)?;
    let objective = 2.0 * p.int_gamma(shift)?
        + 2.0 * (2.0 * lambda).sqrt() * p.int_sqrt_gamma_tail(shift)?
        + lambda * shift;
    Ok(PenaltySolution {
        lambda,
        shift,
        q,
        objective,
    })
}

/// `∫₀^∞ √Γ / √Γ(0)`: budgets at or below this value give the unshifted
/// (boundary) optimum.
pub fn budget_threshold(profile: &dyn GammaProfile) -> Result<f64, SolverError> {
    Ok(profile.int_sqrt_gamma_tail(0.0)? / profile.gamma_at_zero().sqrt())
}

/// `G(s) = s + ∫_s^∞√Γ / √Γ(s) - m`, whose root is the interior shift.
pub fn budget_equation(profile: &dyn GammaProfile, m: f64, s: f64) -> Result<f64, SolverError> {
    Ok(s + profile.int_sqrt_gamma_tail(s)? / profile.gamma(s).sqrt() - m)
}

/// Minimizes the estimator variance subject to `E[N] = m`.
pub fn solve_budget(profile: Arc<dyn GammaProfile>, m: f64) -> Result<BudgetSolution, SolverError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(SolverError::Argument {
            name: "m",
            value: m,
            reason: "budget must be positive",
        });
    }
    let p = profile.as_ref();
    let alpha = p.alpha();
    let root_total = p.int_sqrt_gamma_tail(0.0)?;
    let gamma0 = p.gamma_at_zero();
    if m <= root_total / gamma0.sqrt() {
        let head = (m * gamma0.sqrt() / root_total).min(1.0);
        let q = ShiftedSurvival::for_profile(&profile, 0.0, head)?;
        return Ok(BudgetSolution {
            budget: m,
            case: BudgetCase::Boundary,
            shift: 0.0,
            q,
            min_variance: 2.0 / m * root_total * root_total - alpha * alpha,
        });
    }
    let g = |s: f64| budget_equation(p, m, s);
    let df = newton_derivative(p, |s, gp| {
        let gs = p.gamma(s);
        -gp * p.int_sqrt_gamma_tail(s).unwrap_or(f64::NAN) / (2.0 * gs * gs.sqrt())
    });
    let shift = numerics::find_root_with(g, df, &RootConfig::new(0.0, m).with_tol(SHIFT_TOL))?;
    let q = ShiftedSurvival::for_profile(&profile, shift, 1.0)?;
    let min_variance =
        2.0 * p.int_gamma(shift)? + 2.0 * p.gamma(shift) * (m - shift) - alpha * alpha;
    Ok(BudgetSolution {
        budget: m,
        case: BudgetCase::Interior,
        shift,
        q,
        min_variance,
    })
}

/// `H(s) = α²/2 + sΓ(s) - ∫₀^s Γ`, the first-order condition of the
/// work–variance product.
pub fn work_variance_equation(profile: &dyn GammaProfile, s: f64) -> Result<f64, SolverError> {
    let alpha = profile.alpha();
    Ok(0.5 * alpha * alpha + s * profile.gamma(s) - profile.int_gamma(s)?)
}

/// Work–variance product `K(s)` of the budget-optimal distribution with shift
/// `s`: `m(s) · [2∫₀^s Γ + 2√Γ(s) ∫_s^∞ √Γ - α²]`.
pub fn work_variance_objective(profile: &dyn GammaProfile, s: f64) -> Result<f64, SolverError> {
    let alpha = profile.alpha();
    let root_gamma = profile.gamma(s).sqrt();
    let tail = profile.int_sqrt_gamma_tail(s)?;
    let m = s + tail / root_gamma;
    Ok(m * (2.0 * profile.int_gamma(s)? + 2.0 * root_gamma * tail - alpha * alpha))
}

/// Minimizes `Var · E[N]` over all randomization distributions.
pub fn solve_work_variance(
    profile: Arc<dyn GammaProfile>,
) -> Result<WorkVarianceSolution, SolverError> {
    let p = profile.as_ref();
    let alpha = p.alpha();
    let int_gamma = p.int_gamma_total()?;
    if !(int_gamma > 0.5 * alpha * alpha) {
        return Err(SolverError::AlphaInconsistent {
            int_gamma,
            half_alpha_sq: 0.5 * alpha * alpha,
        });
    }
    let h = |s: f64| work_variance_equation(p, s);
    let (lo, hi) = numerics::expand_bracket(h, 0.0, 1.0 / p.decay_rate_hint(), MAX_DOUBLINGS)?;
    let df = newton_derivative(p, |s, gp| s * gp);
    let shift = numerics::find_root_with(h, df, &RootConfig::new(lo, hi).with_tol(SHIFT_TOL))?;
    let gamma_shift = p.gamma(shift);
    let optimal_budget = shift + p.int_sqrt_gamma_tail(shift)? / gamma_shift.sqrt();
    let q = ShiftedSurvival::for_profile(&profile, shift, 1.0)?;
    Ok(WorkVarianceSolution {
        shift,
        optimal_budget,
        q,
        product: 2.0 * optimal_budget * optimal_budget * gamma_shift,
    })
}

// ---------------------------------------------------------------------------
// Exponential Lévy closed forms
// ---------------------------------------------------------------------------

/// Closed-form optima when `Γ(s) = Γ₀ e^{-ρs}`, written for general `x₀`
/// (`Γ₀ = x₀^{2β}/|φ₁|`). They serve as the independent route against which
/// the generic solvers are checked.
pub mod closed_form {
    use super::*;

    fn parts(g: &ExpLevyGamma) -> (f64, f64, f64) {
        let (gamma0, rho) = g.exponential_form().expect("exponential profile");
        (gamma0, rho, g.alpha())
    }

    /// Penalty optimum: `s* = 0` if `λ ≥ 2Γ₀`, else `-(1/ρ) ln(λ / 2Γ₀)`.
    /// Returns `(shift, head, rate, objective)`.
    pub fn penalty(g: &ExpLevyGamma, lambda: f64) -> (f64, f64, f64, f64) {
        let (gamma0, rho, _) = parts(g);
        let (shift, head) = if lambda >= 2.0 * gamma0 {
            (0.0, (2.0 * gamma0 / lambda).sqrt())
        } else {
            (-(lambda / (2.0 * gamma0)).ln() / rho, 1.0)
        };
        let decay = (-rho * shift).exp();
        let objective = 2.0 * gamma0 * (1.0 - decay) / rho
            + 2.0 * (2.0 * lambda).sqrt() * 2.0 * gamma0.sqrt() / rho * decay.sqrt()
            + lambda * shift;
        (shift, head, 0.5 * rho, objective)
    }

    /// Fixed-budget optimum. Returns `(shift, head, rate, min_variance)`.
    pub fn budget(g: &ExpLevyGamma, m: f64) -> (f64, f64, f64, f64) {
        let (gamma0, rho, alpha) = parts(g);
        let a2 = alpha * alpha;
        if m * rho <= 2.0 {
            (
                0.0,
                0.5 * m * rho,
                0.5 * rho,
                8.0 * gamma0 / (m * rho * rho) - a2,
            )
        } else {
            let var = (2.0 * gamma0 + 2.0 * gamma0 * (2.0 - m * rho).exp()) / rho - a2;
            (m - 2.0 / rho, 1.0, 0.5 * rho, var)
        }
    }

    /// Work–variance shift through the lower Lambert branch.
    ///
    /// With `k = 1/ρ - α²/(2Γ₀)` the first-order condition reads
    /// `e^{-ρs}(s + 1/ρ) = k`; substituting `y = ρs + 1` gives
    /// `(-y) e^{-y} = -ρk/e` with `y > 1`, so `-y = W₋₁(-ρk/e)`.
    pub fn work_variance_shift(g: &ExpLevyGamma) -> Result<f64, NumericsError> {
        let (gamma0, rho, alpha) = parts(g);
        let k = 1.0 / rho - alpha * alpha / (2.0 * gamma0);
        let w = numerics::lambert_wm1(-rho * k / std::f64::consts::E)?;
        Ok((-w - 1.0) / rho)
    }

    /// Returns `(shift, optimal_budget, product)`.
    pub fn work_variance(g: &ExpLevyGamma) -> Result<(f64, f64, f64), NumericsError> {
        let (gamma0, rho, _) = parts(g);
        let shift = work_variance_shift(g)?;
        let m = shift + 2.0 / rho;
        Ok((shift, m, 2.0 * m * m * gamma0 * (-rho * shift).exp()))
    }
}
