//! Process and cost models.
//!
//! Two families are supported: an exponential Lévy process (simulated as GBM)
//! with power cost `g(x, t) = e^{-ct} x^β`, and a CIR square-root diffusion
//! with linear cost `g(x, t) = e^{-ct} x`. Each exposes the tail
//! second-moment kernel `Γ(s) = ∫_s^∞ E[g(X_t,t) g(X_s,s)] dt` through the
//! [`GammaProfile`] trait, which is the only view of a model the optimal
//! randomization solvers need.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsError, QuadConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("integrability violated: {which} = {value} must be negative")]
    Integrability { which: &'static str, value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Parameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

fn require_finite(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Parameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

// ---------------------------------------------------------------------------
// Γ profiles
// ---------------------------------------------------------------------------

/// Tail second-moment kernel `Γ(s)` of a cost process together with its
/// integrals and `α = E ∫₀^∞ g`.
///
/// Closed-form implementations override the integral methods; the defaults
/// fall back on adaptive quadrature.
pub trait GammaProfile: fmt::Debug + Send + Sync {
    fn gamma(&self, s: f64) -> f64;

    fn alpha(&self) -> f64;

    /// Dominant exponential decay rate of `Γ`, used to seed brackets, default
    /// grids and analytic tail corrections.
    fn decay_rate_hint(&self) -> f64;

    fn gamma_at_zero(&self) -> f64 {
        self.gamma(0.0)
    }

    /// `Γ'(s)` when available in closed form.
    fn gamma_prime(&self, _s: f64) -> Option<f64> {
        None
    }

    /// `(Γ(0), ρ)` when `Γ(s) = Γ(0) e^{-ρ s}` exactly.
    fn exponential_form(&self) -> Option<(f64, f64)> {
        None
    }

    fn quad_config(&self) -> QuadConfig {
        QuadConfig::default()
    }

    /// `∫₀^s Γ(u) du`.
    fn int_gamma(&self, s: f64) -> Result<f64, NumericsError> {
        numerics::integrate(|u| self.gamma(u), 0.0, s, &self.quad_config())
    }

    /// `∫₀^∞ Γ(u) du`.
    fn int_gamma_total(&self) -> Result<f64, NumericsError> {
        numerics::integrate_semi_infinite(
            |u| self.gamma(u),
            0.0,
            &self.quad_config(),
            Some(self.decay_rate_hint()),
        )
    }

    /// `∫_s^∞ √Γ(u) du`.
    fn int_sqrt_gamma_tail(&self, s: f64) -> Result<f64, NumericsError> {
        numerics::integrate_semi_infinite(
            |u| self.gamma(u).max(0.0).sqrt(),
            s,
            &self.quad_config(),
            Some(0.5 * self.decay_rate_hint()),
        )
    }
}

// ---------------------------------------------------------------------------
// Exponential Lévy / GBM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpLevySpec {
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
    pub beta: f64,
    pub c: f64,
}

impl ExpLevySpec {
    /// GBM parameter set used in the numerical experiments.
    pub fn reference() -> Self {
        ExpLevySpec {
            mu: 0.1,
            sigma: 0.35,
            x0: 1.0,
            beta: 0.5,
            c: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        require_finite("mu", self.mu)?;
        require_finite("beta", self.beta)?;
        require_positive("x0", self.x0)?;
        require_positive("c", self.c)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ModelError::Parameter {
                name: "sigma",
                value: self.sigma,
                reason: "must be non-negative and finite",
            });
        }
        Ok(())
    }

    /// Gaussian characteristic exponent `φ(b) = (μ - σ²/2) b + σ²/2 b²`.
    pub fn phi(&self, b: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (self.mu - 0.5 * s2) * b + 0.5 * s2 * b * b
    }
}

/// Discounted first- and second-moment exponents of the power cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyExponents {
    /// `φ(β)`.
    pub phi: f64,
    /// `φ₁(β) = φ(β) - c`.
    pub phi1: f64,
    /// `φ₂(2β) = φ(2β) - 2c`.
    pub phi2: f64,
}

impl LevyExponents {
    /// `|φ₁(β)|`, the decay rate of `E[g(X_t, t)]`.
    pub fn first_rate(&self) -> f64 {
        -self.phi1
    }

    /// `|φ₂(2β)|`, the decay rate of `Γ`.
    pub fn second_rate(&self) -> f64 {
        -self.phi2
    }
}

pub fn levy_exponents(spec: &ExpLevySpec) -> Result<LevyExponents, ModelError> {
    spec.validate()?;
    let phi = spec.phi(spec.beta);
    let phi1 = phi - spec.c;
    let phi2 = spec.phi(2.0 * spec.beta) - 2.0 * spec.c;
    if !(phi1 < 0.0) {
        return Err(ModelError::Integrability {
            which: "phi1(beta)",
            value: phi1,
        });
    }
    if !(phi2 < 0.0) {
        return Err(ModelError::Integrability {
            which: "phi2(2 beta)",
            value: phi2,
        });
    }
    Ok(LevyExponents { phi, phi1, phi2 })
}

/// `Γ(s) = (x₀^{2β} / |φ₁|) e^{-s |φ₂|}` with all integrals in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpLevyGamma {
    pub spec: ExpLevySpec,
    pub exponents: LevyExponents,
    gamma0: f64,
    rate: f64,
    alpha: f64,
}

pub fn exp_levy_gamma(spec: &ExpLevySpec) -> Result<ExpLevyGamma, ModelError> {
    let exponents = levy_exponents(spec)?;
    let a1 = exponents.first_rate();
    let scale = spec.x0.powf(spec.beta);
    Ok(ExpLevyGamma {
        spec: *spec,
        exponents,
        gamma0: scale * scale / a1,
        rate: exponents.second_rate(),
        alpha: scale / a1,
    })
}

impl ExpLevyGamma {
    /// `x₀^{2β}`, the factor by which every second moment scales.
    pub fn moment_scale(&self) -> f64 {
        let s = self.spec.x0.powf(self.spec.beta);
        s * s
    }
}

impl GammaProfile for ExpLevyGamma {
    fn gamma(&self, s: f64) -> f64 {
        self.gamma0 * (-self.rate * s).exp()
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn decay_rate_hint(&self) -> f64 {
        self.rate
    }

    fn gamma_at_zero(&self) -> f64 {
        self.gamma0
    }

    fn gamma_prime(&self, s: f64) -> Option<f64> {
        Some(-self.rate * self.gamma(s))
    }

    fn exponential_form(&self) -> Option<(f64, f64)> {
        Some((self.gamma0, self.rate))
    }

    fn int_gamma(&self, s: f64) -> Result<f64, NumericsError> {
        Ok(self.gamma0 * s * numerics::one_minus_exp_over(self.rate * s))
    }

    fn int_gamma_total(&self) -> Result<f64, NumericsError> {
        Ok(self.gamma0 / self.rate)
    }

    fn int_sqrt_gamma_tail(&self, s: f64) -> Result<f64, NumericsError> {
        Ok(2.0 * self.gamma0.sqrt() / self.rate * (-0.5 * self.rate * s).exp())
    }
}

// ---------------------------------------------------------------------------
// CIR
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirSpec {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub x0: f64,
    pub c: f64,
}

impl CirSpec {
    /// CIR parameter set used in the numerical experiments.
    pub fn reference() -> Self {
        CirSpec {
            kappa: 3.0,
            theta: 0.2,
            sigma: 0.3,
            x0: 0.5,
            c: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("kappa", self.kappa)?;
        require_positive("theta", self.theta)?;
        require_positive("x0", self.x0)?;
        require_positive("c", self.c)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ModelError::Parameter {
                name: "sigma",
                value: self.sigma,
                reason: "must be non-negative and finite",
            });
        }
        Ok(())
    }

    /// Threshold `θ + σ²/2κ + √(σ²/2κ · (θ + σ²/2κ))` above which `x₀`
    /// guarantees a positive, strictly decreasing `Γ`.
    pub fn monotonicity_threshold(&self) -> f64 {
        let v = self.sigma * self.sigma / (2.0 * self.kappa);
        self.theta + v + (v * (self.theta + v)).sqrt()
    }

    pub fn sufficient_condition_holds(&self) -> bool {
        self.x0 > self.monotonicity_threshold()
    }

    /// `E[X_t]`.
    pub fn mean(&self, t: f64) -> f64 {
        self.theta + (self.x0 - self.theta) * (-self.kappa * t).exp()
    }

    /// `α = θ/c + (x₀ - θ)/(κ + c)`.
    pub fn alpha(&self) -> f64 {
        self.theta / self.c + (self.x0 - self.theta) / (self.kappa + self.c)
    }
}

/// Coefficients of `Γ(s) = A e^{-2cs} + B e^{-(κ+2c)s} + C e^{-2(κ+c)s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirGammaCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn cir_gamma_coeffs(spec: &CirSpec) -> Result<CirGammaCoeffs, ModelError> {
    spec.validate()?;
    let CirSpec {
        kappa,
        theta,
        sigma,
        x0,
        c,
    } = *spec;
    let s2 = sigma * sigma;
    let a = theta * theta / c + theta * s2 / (2.0 * kappa * (kappa + c));
    let b = (x0 - theta) * (theta + s2 / kappa) / (kappa + c) + theta * (x0 - theta) / c;
    let cc = ((theta - x0).powi(2) + s2 / (2.0 * kappa) * (theta - 2.0 * x0)) / (kappa + c);
    Ok(CirGammaCoeffs { a, b, c: cc })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirGamma {
    pub spec: CirSpec,
    pub coeffs: CirGammaCoeffs,
    rates: [f64; 3],
    alpha: f64,
}

pub fn cir_gamma(spec: &CirSpec) -> Result<CirGamma, ModelError> {
    let coeffs = cir_gamma_coeffs(spec)?;
    let (k, c) = (spec.kappa, spec.c);
    Ok(CirGamma {
        spec: *spec,
        coeffs,
        rates: [2.0 * c, k + 2.0 * c, 2.0 * (k + c)],
        alpha: spec.alpha(),
    })
}

impl CirGamma {
    fn weights(&self) -> [f64; 3] {
        [self.coeffs.a, self.coeffs.b, self.coeffs.c]
    }
}

impl GammaProfile for CirGamma {
    fn gamma(&self, s: f64) -> f64 {
        self.weights()
            .iter()
            .zip(self.rates)
            .map(|(w, r)| w * (-r * s).exp())
            .sum()
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn decay_rate_hint(&self) -> f64 {
        self.rates[0]
    }

    fn gamma_at_zero(&self) -> f64 {
        self.coeffs.a + self.coeffs.b + self.coeffs.c
    }

    fn gamma_prime(&self, s: f64) -> Option<f64> {
        Some(
            self.weights()
                .iter()
                .zip(self.rates)
                .map(|(w, r)| -r * w * (-r * s).exp())
                .sum(),
        )
    }

    fn int_gamma(&self, s: f64) -> Result<f64, NumericsError> {
        Ok(self
            .weights()
            .iter()
            .zip(self.rates)
            .map(|(w, r)| w * s * numerics::one_minus_exp_over(r * s))
            .sum())
    }

    fn int_gamma_total(&self) -> Result<f64, NumericsError> {
        Ok(self
            .weights()
            .iter()
            .zip(self.rates)
            .map(|(w, r)| w / r)
            .sum())
    }
}

// ---------------------------------------------------------------------------
// User-supplied profiles
// ---------------------------------------------------------------------------

/// A `Γ` supplied as a closure; every integral is computed by quadrature.
pub struct FnGamma<F> {
    gamma: F,
    alpha: f64,
    decay_rate_hint: f64,
    quad: QuadConfig,
}

impl<F> FnGamma<F>
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    pub fn new(gamma: F, alpha: f64, decay_rate_hint: f64) -> Self {
        FnGamma {
            gamma,
            alpha,
            decay_rate_hint,
            quad: QuadConfig::default(),
        }
    }

    pub fn with_quad_config(mut self, quad: QuadConfig) -> Self {
        self.quad = quad;
        self
    }
}

impl<F> fmt::Debug for FnGamma<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnGamma")
            .field("alpha", &self.alpha)
            .field("decay_rate_hint", &self.decay_rate_hint)
            .finish_non_exhaustive()
    }
}

impl<F> GammaProfile for FnGamma<F>
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn gamma(&self, s: f64) -> f64 {
        (self.gamma)(s)
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn decay_rate_hint(&self) -> f64 {
        self.decay_rate_hint
    }

    fn quad_config(&self) -> QuadConfig {
        self.quad
    }
}

// ---------------------------------------------------------------------------
// Profile check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonPositive,
    NotDecreasing,
    AlphaInconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub s: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub passed: bool,
    pub first_violation: Option<Violation>,
    /// `∫₀^∞ Γ - α²/2`; must be positive.
    pub consistency_margin: f64,
}

/// Default check grid: 1000 points on `[0, 10 / decay_rate_hint]`.
pub fn default_grid(profile: &dyn GammaProfile) -> Vec<f64> {
    numerics::linspace(0.0, 10.0 / profile.decay_rate_hint(), 1000)
}

/// Checks positivity and strict decrease of `Γ` on `grid`, and the
/// inequality `∫₀^∞ Γ > α²/2`.
pub fn validate_profile(profile: &dyn GammaProfile, grid: &[f64]) -> ProfileReport {
    let mut first_violation = None;
    let mut prev: Option<f64> = None;
    for (index, &s) in grid.iter().enumerate() {
        let g = profile.gamma(s);
        let kind = if !(g > 0.0) {
            Some(ViolationKind::NonPositive)
        } else if prev.is_some_and(|p| !(g < p)) {
            Some(ViolationKind::NotDecreasing)
        } else {
            None
        };
        if let Some(kind) = kind {
            first_violation = Some(Violation { index, s, kind });
            break;
        }
        prev = Some(g);
    }
    let alpha = profile.alpha();
    let consistency_margin = profile
        .int_gamma_total()
        .map(|total| total - 0.5 * alpha * alpha)
        .unwrap_or(f64::NAN);
    if first_violation.is_none() && !(consistency_margin > 0.0) {
        first_violation = Some(Violation {
            index: grid.len(),
            s: f64::INFINITY,
            kind: ViolationKind::AlphaInconsistent,
        });
    }
    ProfileReport {
        passed: first_violation.is_none(),
        first_violation,
        consistency_margin,
    }
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

/// A process together with its running cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostModel {
    Gbm(ExpLevySpec),
    Cir(CirSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostPath {
    pub times: Vec<f64>,
    pub cost_values: Vec<f64>,
    pub step: f64,
}

impl CostPath {
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            CostModel::Gbm(spec) => levy_exponents(spec).map(|_| ()),
            CostModel::Cir(spec) => spec.validate(),
        }
    }

    pub fn profile(&self) -> Result<Arc<dyn GammaProfile>, ModelError> {
        Ok(match self {
            CostModel::Gbm(spec) => Arc::new(exp_levy_gamma(spec)?),
            CostModel::Cir(spec) => Arc::new(cir_gamma(spec)?),
        })
    }

    pub fn alpha(&self) -> Result<f64, ModelError> {
        Ok(self.profile()?.alpha())
    }

    /// Visits `(t_j, g(X_{t_j}, t_j))` on the grid `0, h, 2h, …` up to
    /// `horizon`, ending exactly at `horizon` with a final partial step.
    ///
    /// GBM is sampled with exact Gaussian log increments; CIR uses the
    /// full-truncation Euler scheme (the negative part of `X` is zeroed in the
    /// drift, the diffusion and the cost).
    pub fn visit_costs<R, V>(&self, horizon: f64, step: f64, rng: &mut R, mut visit: V)
    where
        R: Rng + ?Sized,
        V: FnMut(f64, f64),
    {
        debug_assert!(horizon >= 0.0 && step > 0.0);
        let full = (horizon / step).floor();
        let mut n_full = full as usize;
        let remainder = horizon - full * step;
        let partial = if remainder > 1e-9 * step {
            true
        } else {
            // Close enough to the grid: land on the horizon with the last full step.
            false
        };
        if !partial && n_full == 0 && horizon > 0.0 {
            n_full = 1;
        }
        let n_steps = n_full + usize::from(partial);
        let time_at = |j: usize| {
            if j == n_steps {
                horizon
            } else {
                j as f64 * step
            }
        };

        match *self {
            CostModel::Gbm(spec) => {
                let drift = spec.mu - 0.5 * spec.sigma * spec.sigma;
                let mut log_x = spec.x0.ln();
                let mut t_prev = 0.0;
                visit(0.0, (spec.beta * log_x).exp());
                for j in 1..=n_steps {
                    let t = time_at(j);
                    let dt = t - t_prev;
                    let z: f64 = rng.sample(StandardNormal);
                    log_x += drift * dt + spec.sigma * dt.sqrt() * z;
                    visit(t, (spec.beta * log_x - spec.c * t).exp());
                    t_prev = t;
                }
            }
            CostModel::Cir(spec) => {
                let mut x = spec.x0;
                let mut t_prev = 0.0;
                visit(0.0, x.max(0.0));
                for j in 1..=n_steps {
                    let t = time_at(j);
                    let dt = t - t_prev;
                    let z: f64 = rng.sample(StandardNormal);
                    let xp = x.max(0.0);
                    x += spec.kappa * (spec.theta - xp) * dt + spec.sigma * (xp * dt).sqrt() * z;
                    visit(t, (-spec.c * t).exp() * x.max(0.0));
                    t_prev = t;
                }
            }
        }
    }

    pub fn simulate_cost_path<R: Rng + ?Sized>(
        &self,
        horizon: f64,
        step: f64,
        rng: &mut R,
    ) -> CostPath {
        let cap = (horizon / step).ceil() as usize + 2;
        let mut times = Vec::with_capacity(cap);
        let mut cost_values = Vec::with_capacity(cap);
        self.visit_costs(horizon, step, rng, |t, g| {
            times.push(t);
            cost_values.push(g);
        });
        CostPath {
            times,
            cost_values,
            step,
        }
    }
}
