//! Unbiased randomized-truncation estimators for `α = E ∫₀^∞ g(X_t, t) dt`.
//!
//! - [`numerics`]: Lambert W, safeguarded root finding, adaptive quadrature.
//! - [`models`]: second-moment kernels `Γ` for exponential Lévy and CIR costs, path simulation.
//! - [`randomization`]: optimal horizon distributions.
//! - [`estimators`]: randomized and fixed-horizon Monte Carlo estimators.
//! - [`diagnostics`]: bias, variance and MSE comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod estimators;
pub mod models;
pub mod numerics;
pub mod randomization;

pub use estimators::{EstimateReport, RunConfig};
pub use models::{CirSpec, CostModel, ExpLevySpec, GammaProfile};
pub use randomization::{ShiftedSurvival, SolverError};
