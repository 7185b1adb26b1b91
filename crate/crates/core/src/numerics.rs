//! Scalar kernels shared by the solvers: real Lambert-W branches, bracketed
//! root finding and adaptive quadrature on `[a, b]` and `[a, ∞)`.

use std::f64::consts::E;

use thiserror::Error;

const INV_E: f64 = 1.0 / E;
const HALLEY_MAX_ITER: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("{function}: argument {x} outside the domain {domain}")]
    Domain {
        function: &'static str,
        x: f64,
        domain: &'static str,
    },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("root finder did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    RootNoConvergence { iterations: usize, lo: f64, hi: f64 },
    #[error("could not bracket a root starting from [{lo}, {hi}]")]
    BracketNotFound { lo: f64, hi: f64 },
    #[error("function value is not finite at x = {x}")]
    NotFinite { x: f64 },
    #[error("quadrature did not converge after {subdivisions} subdivisions (estimate {estimate}, error {error})")]
    QuadratureNoConvergence {
        subdivisions: usize,
        estimate: f64,
        error: f64,
    },
    #[error("integrand did not decay below the cutoff ratio starting from {lower}")]
    TailNotFound { lower: f64 },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

// ---------------------------------------------------------------------------
// Lambert W
// ---------------------------------------------------------------------------

/// Square root of `2(e·x + 1)`, the natural small parameter near the branch
/// point. Returns `None` below the branch point, allowing a few ulps of
/// rounding slack so that `-1.0 / E` itself is accepted.
fn branch_distance(x: f64) -> Option<f64> {
    let t = E * x + 1.0;
    if t < -4.0 * f64::EPSILON {
        None
    } else {
        Some((2.0 * t.max(0.0)).sqrt())
    }
}

fn halley(mut w: f64, x: f64) -> f64 {
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Principal branch `W₀`: the solution `w ≥ -1` of `w·eʷ = x`, for `x ≥ -1/e`.
pub fn lambert_w0(x: f64) -> Result<f64, NumericsError> {
    let domain_err = NumericsError::Domain {
        function: "lambert_w0",
        x,
        domain: "[-1/e, ∞)",
    };
    if x.is_nan() {
        return Err(domain_err);
    }
    let p = branch_distance(x).ok_or(domain_err)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if p == 0.0 {
        return Ok(-1.0);
    }
    let guess = if x < -0.25 {
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        // Padé-like start that is good on the middle range.
        let l = (1.0 + x).ln();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    Ok(halley(guess, x).max(-1.0))
}

/// Lower branch `W₋₁`: the solution `w ≤ -1` of `w·eʷ = x`, for `-1/e ≤ x < 0`.
pub fn lambert_wm1(x: f64) -> Result<f64, NumericsError> {
    let domain_err = NumericsError::Domain {
        function: "lambert_wm1",
        x,
        domain: "[-1/e, 0)",
    };
    if x.is_nan() || x >= 0.0 {
        return Err(domain_err);
    }
    let p = branch_distance(x).ok_or(domain_err)?;
    if p == 0.0 {
        return Ok(-1.0);
    }
    let guess = if x < -0.25 {
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    Ok(halley(guess, x).min(-1.0))
}

/// Value of `-1/e`, the common branch point of `W₀` and `W₋₁`.
pub fn lambert_branch_point() -> f64 {
    -INV_E
}

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootConfig {
    pub abs_tol: f64,
    pub max_iter: usize,
    pub bracket: (f64, f64),
}

impl RootConfig {
    pub fn new(lo: f64, hi: f64) -> Self {
        RootConfig {
            abs_tol: 1e-12,
            max_iter: 200,
            bracket: (lo, hi),
        }
    }

    pub fn with_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    fn validate(&self) -> Result<(), NumericsError> {
        if !(self.abs_tol > 0.0) {
            return Err(NumericsError::Config("abs_tol must be positive"));
        }
        let (lo, hi) = self.bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(NumericsError::Config("bracket must be finite with lo < hi"));
        }
        Ok(())
    }
}

/// Bisection on a sign-changing bracket. The returned point lies in a final
/// bracket of width at most `cfg.abs_tol`.
pub fn find_root<F>(mut f: F, cfg: &RootConfig) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    find_root_with::<_, fn(f64) -> Result<f64, NumericsError>, NumericsError>(
        |x| Ok(f(x)),
        None,
        cfg,
    )
}

/// Bisection safeguarded Newton iteration. Newton steps are taken only when
/// they stay strictly inside the current bracket; convergence is certified by
/// a sign change across `[s - tol/2, s + tol/2]`.
pub fn find_root_newton<F, D>(mut f: F, mut df: D, cfg: &RootConfig) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    find_root_with::<_, _, NumericsError>(|x| Ok(f(x)), Some(|x| Ok(df(x))), cfg)
}

/// Fallible form of the root finder, for objective functions that themselves
/// evaluate quadratures.
pub fn find_root_with<F, D, Err>(mut f: F, mut df: Option<D>, cfg: &RootConfig) -> Result<f64, Err>
where
    F: FnMut(f64) -> Result<f64, Err>,
    D: FnMut(f64) -> Result<f64, Err>,
    Err: From<NumericsError>,
{
    cfg.validate()?;
    let (mut lo, mut hi) = cfg.bracket;
    let eval = |x: f64, f: &mut F| -> Result<f64, Err> {
        let v = f(x)?;
        if v.is_nan() {
            Err(NumericsError::NotFinite { x }.into())
        } else {
            Ok(v)
        }
    };
    let f_lo = eval(lo, &mut f)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let f_hi = eval(hi, &mut f)?;
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(NumericsError::NoSignChange { lo, hi, f_lo, f_hi }.into());
    }
    let lo_positive = f_lo > 0.0;
    let tol = cfg.abs_tol;
    let mut x = 0.5 * (lo + hi);

    for _ in 0..cfg.max_iter {
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let fx = eval(x, &mut f)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == lo_positive {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = 0.5 * (lo + hi);
        if let Some(d) = df.as_mut() {
            let dfx = d(x)?;
            if dfx != 0.0 && dfx.is_finite() {
                let candidate = x - fx / dfx;
                if candidate > lo && candidate < hi {
                    if (candidate - x).abs() < tol {
                        // Certify the Newton limit before accepting it.
                        let a = (candidate - 0.5 * tol).max(lo);
                        let b = (candidate + 0.5 * tol).min(hi);
                        let fa = eval(a, &mut f)?;
                        let fb = eval(b, &mut f)?;
                        if fa == 0.0 {
                            return Ok(a);
                        }
                        if fb == 0.0 {
                            return Ok(b);
                        }
                        if (fa > 0.0) != (fb > 0.0) {
                            return Ok(candidate);
                        }
                    }
                    next = candidate;
                }
            }
        }
        x = next;
    }
    if hi - lo <= tol {
        return Ok(0.5 * (lo + hi));
    }
    Err(NumericsError::RootNoConvergence {
        iterations: cfg.max_iter,
        lo,
        hi,
    }
    .into())
}

/// Doubles the distance of `hi` from `lo` until `f(hi)` has the opposite sign
/// of `f(lo)`. Returns the sign-changing bracket.
pub fn expand_bracket<F, Err>(
    mut f: F,
    lo: f64,
    hi: f64,
    max_doublings: usize,
) -> Result<(f64, f64), Err>
where
    F: FnMut(f64) -> Result<f64, Err>,
    Err: From<NumericsError>,
{
    let f_lo = f(lo)?;
    let mut width = hi - lo;
    if !(width > 0.0) {
        return Err(NumericsError::Config("expand_bracket needs hi > lo").into());
    }
    let mut prev = lo;
    for _ in 0..=max_doublings {
        let b = lo + width;
        let fb = f(b)?;
        if fb.is_nan() {
            return Err(NumericsError::NotFinite { x: b }.into());
        }
        if fb == 0.0 || (fb > 0.0) != (f_lo > 0.0) {
            return Ok((prev, b));
        }
        prev = b;
        width *= 2.0;
    }
    Err(NumericsError::BracketNotFound { lo, hi }.into())
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub tail_cutoff_ratio: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-10,
            tail_cutoff_ratio: 1e-14,
            max_subdivisions: 2000,
        }
    }
}

impl QuadConfig {
    fn validate(&self) -> Result<(), NumericsError> {
        if !(self.rel_tol > 0.0) {
            return Err(NumericsError::Config("rel_tol must be positive"));
        }
        if !(self.tail_cutoff_ratio > 0.0 && self.tail_cutoff_ratio < 1.0) {
            return Err(NumericsError::Config(
                "tail_cutoff_ratio must lie in (0, 1)",
            ));
        }
        if self.max_subdivisions == 0 {
            return Err(NumericsError::Config("max_subdivisions must be positive"));
        }
        Ok(())
    }
}

// Gauss-Kronrod 7/15 nodes and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    (kronrod, (kronrod - gauss).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` on the finite interval
/// `[a, b]`, refined until the summed error estimate is below
/// `rel_tol · |integral|`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    cfg.validate()?;
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, cfg).map(|v| -v);
    }
    // (a, b, estimate, error)
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (est, err) = gk15(&mut f, a, b);
    pieces.push((a, b, est, err));
    let mut total = est;
    let mut total_err = err;
    let mut subdivisions = 1;
    loop {
        if !total.is_finite() {
            return Err(NumericsError::NotFinite { x: a });
        }
        if total_err <= cfg.rel_tol * total.abs() || total_err <= f64::MIN_POSITIVE {
            return Ok(total);
        }
        if subdivisions >= cfg.max_subdivisions {
            return Err(NumericsError::QuadratureNoConvergence {
                subdivisions,
                estimate: total,
                error: total_err,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, e0, r0) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval below floating resolution; accept what we have.
            return Ok(total);
        }
        let (e1, r1) = gk15(&mut f, lo, mid);
        let (e2, r2) = gk15(&mut f, mid, hi);
        pieces.push((lo, mid, e1, r1));
        pieces.push((mid, hi, e2, r2));
        total += e1 + e2 - e0;
        total_err += r1 + r2 - r0;
        subdivisions += 1;
        // Re-sum occasionally to stop cancellation drift in the running totals.
        if subdivisions % 64 == 0 {
            total = pieces.iter().map(|p| p.2).sum();
            total_err = pieces.iter().map(|p| p.3).sum();
        }
    }
}

/// `∫_lower^∞ f(u) du` for non-negative, eventually decreasing `f`.
///
/// The range is truncated at the first `T` (found by doubling) with
/// `f(T) ≤ tail_cutoff_ratio · f(lower)`. When `decay_rate` is supplied the
/// analytic tail `f(T) / decay_rate` of an exponential is added, and the
/// doubling starts from a span of `1 / decay_rate`.
pub fn integrate_semi_infinite<F>(
    mut f: F,
    lower: f64,
    cfg: &QuadConfig,
    decay_rate: Option<f64>,
) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    cfg.validate()?;
    if let Some(rate) = decay_rate {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(NumericsError::Config("decay_rate must be positive"));
        }
    }
    let f_lower = f(lower);
    if !f_lower.is_finite() {
        return Err(NumericsError::NotFinite { x: lower });
    }
    if f_lower == 0.0 {
        return Ok(0.0);
    }
    let target = cfg.tail_cutoff_ratio * f_lower.abs();
    let mut span = decay_rate.map_or(1.0, |r| 1.0 / r);
    let mut upper = None;
    for _ in 0..200 {
        let t = lower + span;
        let ft = f(t);
        if ft.is_finite() && ft.abs() <= target {
            upper = Some((t, ft));
            break;
        }
        span *= 2.0;
    }
    let (upper, f_upper) = upper.ok_or(NumericsError::TailNotFound { lower })?;
    let body = integrate(&mut f, lower, upper, cfg)?;
    let tail = decay_rate.map_or(0.0, |r| f_upper / r);
    Ok(body + tail)
}

/// `(1 - e^{-x}) / x`, continuous at zero.
pub(crate) fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(e^{-m a} - e^{-m b}) / (a - b)`, continuous on the diagonal `a = b`.
pub(crate) fn exp_diff_quotient(m: f64, a: f64, b: f64) -> f64 {
    // e^{-ma} - e^{-mb} = -e^{-mb} (1 - e^{-m(a-b)}) = -e^{-mb} m φ(m(a-b))
    -(-m * b).exp() * m * one_minus_exp_over(m * (a - b))
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                .collect()
        }
    }
}
