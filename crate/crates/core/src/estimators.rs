//! Monte Carlo estimators: the randomized unbiased estimator
//! `∫₀^N g / Q(N > s) ds` and the fixed-horizon estimator `∫₀^m g ds`.
//!
//! Each replication `i` owns the random stream `rng_stream(master_seed, i)`,
//! and replications are reduced in fixed-size blocks merged in index order,
//! so reports are bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::models::{CostModel, CostPath};
use crate::randomization::ShiftedSurvival;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("invalid run configuration: {field} {reason}")]
    Config {
        field: &'static str,
        reason: &'static str,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Quadrature rule applied on the simulated grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    Trapezoid,
    LeftRiemann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Randomized,
    Fixed,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Randomized => "randomized",
            EstimatorKind::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub replications: u64,
    pub step: f64,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub rule: Rule,
}

fn default_workers() -> usize {
    1
}

fn default_confidence() -> f64 {
    0.95
}

impl RunConfig {
    pub fn new(replications: u64, step: f64, master_seed: u64) -> Self {
        RunConfig {
            replications,
            step,
            master_seed,
            workers: default_workers(),
            confidence: default_confidence(),
            rule: Rule::default(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let fail = |field, reason| Err(EstimatorError::Config { field, reason });
        if self.replications < 2 {
            return fail("replications", "must be at least 2");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return fail("step", "must be positive and finite");
        }
        if self.workers == 0 {
            return fail("workers", "must be at least 1");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return fail("confidence", "must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimatorKind,
    pub mean: f64,
    pub sample_variance: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    /// Sum of simulated horizons.
    pub total_work: f64,
    pub mean_work: f64,
    /// Sample variance of the simulated horizons.
    pub work_variance: f64,
    pub master_seed: u64,
}

/// The random stream of replication `index`.
pub fn rng_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Streaming quadrature over `(t, y)` points in increasing `t`.
#[derive(Debug, Clone, Copy)]
pub struct GridIntegral {
    rule: Rule,
    prev: Option<(f64, f64)>,
    sum: f64,
}

impl GridIntegral {
    pub fn new(rule: Rule) -> Self {
        GridIntegral {
            rule,
            prev: None,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64, y: f64) {
        if let Some((t0, y0)) = self.prev {
            let dt = t - t0;
            self.sum += match self.rule {
                Rule::LeftRiemann => y0 * dt,
                Rule::Trapezoid => 0.5 * (y0 + y) * dt,
            };
        }
        self.prev = Some((t, y));
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Integral of a simulated cost path, optionally weighted by `1 / Q(N > t)`.
pub fn path_integral(path: &CostPath, weight: Option<&ShiftedSurvival>, rule: Rule) -> f64 {
    if path.horizon() <= 0.0 {
        return 0.0;
    }
    let mut acc = GridIntegral::new(rule);
    for (&t, &g) in path.times.iter().zip(&path.cost_values) {
        let y = match weight {
            Some(q) => g / q.survival(t),
            None => g,
        };
        acc.push(t, y);
    }
    acc.value()
}

/// One randomized replication: draws `N`, then integrates `g / Q` over `[0, N]`.
/// Returns `(estimate, N)`.
pub fn randomized_replication(
    model: &CostModel,
    q: &ShiftedSurvival,
    cfg: &RunConfig,
    index: u64,
) -> (f64, f64) {
    let mut rng = rng_stream(cfg.master_seed, index);
    let horizon = q.sample_horizon(&mut rng);
    if horizon <= 0.0 {
        return (0.0, 0.0);
    }
    let mut acc = GridIntegral::new(cfg.rule);
    model.visit_costs(horizon, cfg.step, &mut rng, |t, g| {
        acc.push(t, g / q.survival(t))
    });
    (acc.value(), horizon)
}

/// One fixed-horizon replication over `[0, m]`.
pub fn fixed_replication(model: &CostModel, m: f64, cfg: &RunConfig, index: u64) -> f64 {
    let mut rng = rng_stream(cfg.master_seed, index);
    let mut acc = GridIntegral::new(cfg.rule);
    model.visit_costs(m, cfg.step, &mut rng, |t, g| acc.push(t, g));
    acc.value()
}

const BLOCK: u64 = 1024;

/// Welford moments of the estimates and of the horizons.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    work_mean: f64,
    work_m2: f64,
    work_sum: f64,
}

impl Moments {
    fn push(&mut self, x: f64, work: f64) {
        self.n += 1;
        let n = self.n as f64;
        let d = x - self.mean;
        self.mean += d / n;
        self.m2 += d * (x - self.mean);
        let dw = work - self.work_mean;
        self.work_mean += dw / n;
        self.work_m2 += dw * (work - self.work_mean);
        self.work_sum += work;
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let dw = other.work_mean - self.work_mean;
        Moments {
            n: self.n + other.n,
            mean: self.mean + d * nb / n,
            m2: self.m2 + other.m2 + d * d * na * nb / n,
            work_mean: self.work_mean + dw * nb / n,
            work_m2: self.work_m2 + other.work_m2 + dw * dw * na * nb / n,
            work_sum: self.work_sum + other.work_sum,
        }
    }
}

fn run_block<F>(replicate: &F, block: u64, total: u64) -> Moments
where
    F: Fn(u64) -> (f64, f64),
{
    let mut m = Moments::default();
    let end = ((block + 1) * BLOCK).min(total);
    for i in block * BLOCK..end {
        let (x, w) = replicate(i);
        m.push(x, w);
    }
    m
}

#[cfg(feature = "parallel")]
fn collect_blocks<F>(replicate: &F, cfg: &RunConfig) -> Result<Vec<Moments>, EstimatorError>
where
    F: Fn(u64) -> (f64, f64) + Sync,
{
    use rayon::prelude::*;
    let n_blocks = cfg.replications.div_ceil(BLOCK);
    if cfg.workers == 1 {
        return Ok((0..n_blocks)
            .map(|b| run_block(replicate, b, cfg.replications))
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| EstimatorError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| run_block(replicate, b, cfg.replications))
            .collect()
    }))
}

#[cfg(not(feature = "parallel"))]
fn collect_blocks<F>(replicate: &F, cfg: &RunConfig) -> Result<Vec<Moments>, EstimatorError>
where
    F: Fn(u64) -> (f64, f64) + Sync,
{
    let n_blocks = cfg.replications.div_ceil(BLOCK);
    Ok((0..n_blocks)
        .map(|b| run_block(replicate, b, cfg.replications))
        .collect())
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn aggregate<F>(
    kind: EstimatorKind,
    cfg: &RunConfig,
    replicate: F,
) -> Result<EstimateReport, EstimatorError>
where
    F: Fn(u64) -> (f64, f64) + Sync,
{
    cfg.validate()?;
    let blocks = collect_blocks(&replicate, cfg)?;
    let m = blocks.into_iter().fold(Moments::default(), Moments::merge);
    let n = m.n as f64;
    let sample_variance = m.m2 / (n - 1.0);
    let stderr = (sample_variance / n).sqrt();
    let half = normal_quantile(0.5 * (1.0 + cfg.confidence)) * stderr;
    Ok(EstimateReport {
        kind,
        mean: m.mean,
        sample_variance,
        stderr,
        ci_low: m.mean - half,
        ci_high: m.mean + half,
        n: m.n,
        total_work: m.work_sum,
        mean_work: m.work_sum / n,
        work_variance: m.work_m2 / (n - 1.0),
        master_seed: cfg.master_seed,
    })
}

/// Randomized unbiased estimate of `α` with horizon distribution `q`.
pub fn randomized_estimate(
    model: &CostModel,
    q: &ShiftedSurvival,
    cfg: &RunConfig,
) -> Result<EstimateReport, EstimatorError> {
    aggregate(EstimatorKind::Randomized, cfg, |i| {
        randomized_replication(model, q, cfg, i)
    })
}

/// Fixed-horizon estimate of `E ∫₀^m g`.
pub fn fixed_estimate(
    model: &CostModel,
    m: f64,
    cfg: &RunConfig,
) -> Result<EstimateReport, EstimatorError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(EstimatorError::Config {
            field: "m",
            reason: "horizon must be positive and finite",
        });
    }
    let mut report = aggregate(EstimatorKind::Fixed, cfg, |i| {
        (fixed_replication(model, m, cfg, i), m)
    })?;
    report.total_work = cfg.replications as f64 * m;
    report.mean_work = m;
    report.work_variance = 0.0;
    Ok(report)
}
