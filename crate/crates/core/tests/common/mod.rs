#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rumc::models::{levy_exponents, ExpLevySpec};

/// Valid exponential Lévy parameter sets drawn from a fixed seed.
pub fn random_exp_levy_specs(count: usize, seed: u64) -> Vec<ExpLevySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mu = rng.random_range(-0.2..0.3);
        let sigma = rng.random_range(0.05..0.6);
        let beta = rng.random_range(0.2..1.5);
        let base = ExpLevySpec {
            mu,
            sigma,
            x0: 1.0,
            beta,
            c: 0.0,
        };
        // Both discounted exponents are negative once c exceeds φ(2β)/2.
        let floor = (0.5 * base.phi(2.0 * beta)).max(base.phi(beta)).max(0.0);
        let spec = ExpLevySpec {
            c: floor + rng.random_range(0.05..1.0),
            ..base
        };
        if levy_exponents(&spec).is_ok() {
            out.push(spec);
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
