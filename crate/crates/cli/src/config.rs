use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rumc::estimators::{EstimatorKind, RunConfig};
use rumc::models::{CostModel, ExpLevySpec, ModelError};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "RUMC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Penalty,
    Budget,
    WorkVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            objective: Objective::WorkVariance,
            lambda: None,
            m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<EstimatorKind>,
    /// Horizon of the fixed estimator; defaults to `solver.m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_horizon: Option<f64>,
}

fn default_kinds() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Randomized]
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            kinds: default_kinds(),
            fixed_horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Threshold and MSE curves over the budget.
    M,
    /// `p(δ, η)` over the shift at fixed `eta`.
    Delta,
    /// `p(δ, η)` over the rate at fixed `delta`.
    Eta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// Fixed shift for `variable = "eta"` (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Fixed rate for `variable = "delta"` (default `|φ₂|/2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl SweepSection {
    pub fn grid(&self) -> Vec<f64> {
        rumc::numerics::linspace(self.from, self.to, self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: CostModel,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default = "default_run")]
    pub run: RunConfig,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_run() -> RunConfig {
    RunConfig::new(100_000, 0.01, 42)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: CostModel::Gbm(ExpLevySpec::reference()),
            solver: SolverSection::default(),
            run: default_run(),
            estimate: EstimateSection::default(),
            sweep: None,
            output: OutputSection::default(),
        }
    }
}

fn positive(name: &str, v: Option<f64>) -> anyhow::Result<f64> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => bail!("{name} = {x} must be positive and finite"),
        None => bail!("{name} is required for this objective"),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(anyhow!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .map_err(CliError::Config)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the seed override from the environment.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.run.master_seed = raw.trim().parse().map_err(|_| {
                CliError::Config(anyhow!(
                    "{SEED_ENV} = {raw:?} is not a 64-bit unsigned integer"
                ))
            })?;
        }
        Ok(())
    }

    pub fn lambda(&self) -> Result<f64, CliError> {
        positive("solver.lambda", self.solver.lambda).map_err(CliError::Config)
    }

    pub fn budget(&self) -> Result<f64, CliError> {
        positive("solver.m", self.solver.m).map_err(CliError::Config)
    }

    pub fn fixed_horizon(&self) -> Result<f64, CliError> {
        positive(
            "estimate.fixed_horizon",
            self.estimate.fixed_horizon.or(self.solver.m),
        )
        .map_err(CliError::Config)
    }

    /// Parameter errors are configuration errors; integrability failures are
    /// domain errors.
    pub fn validate_model(&self) -> Result<(), CliError> {
        match self.model.validate() {
            Ok(()) => Ok(()),
            Err(e @ ModelError::Parameter { .. }) => Err(CliError::Config(anyhow!("model: {e}"))),
            Err(e) => Err(CliError::Solver(anyhow!("model: {e}"))),
        }
    }

    pub fn validate_solver(&self) -> Result<(), CliError> {
        self.validate_model()?;
        match self.solver.objective {
            Objective::Penalty => self.lambda().map(|_| ()),
            Objective::Budget => self.budget().map(|_| ()),
            Objective::WorkVariance => Ok(()),
        }
    }

    pub fn validate_run(&self) -> Result<(), CliError> {
        self.run
            .validate()
            .map_err(|e| CliError::Config(anyhow!("run: {e}")))?;
        if self.estimate.kinds.is_empty() {
            return Err(CliError::Config(anyhow!(
                "estimate.kinds must not be empty"
            )));
        }
        if self.estimate.kinds.contains(&EstimatorKind::Fixed) {
            self.fixed_horizon()?;
        }
        Ok(())
    }

    pub fn sweep(&self) -> Result<&SweepSection, CliError> {
        let s = self.sweep.as_ref().ok_or_else(|| {
            CliError::Config(anyhow!("the sweep command needs a [sweep] section"))
        })?;
        let low_ok = match s.variable {
            SweepVariable::Delta => s.from >= 0.0,
            _ => s.from > 0.0,
        };
        if !(low_ok && s.from < s.to && s.to.is_finite()) {
            return Err(CliError::Config(anyhow!(
                "sweep bounds from = {} and to = {} must be positive and ordered",
                s.from,
                s.to
            )));
        }
        if s.steps < 2 {
            return Err(CliError::Config(anyhow!(
                "sweep.steps = {} must be at least 2",
                s.steps
            )));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
[model]
family = "cir"
kappa = 3.0
theta = 0.2
sigma = 0.3
x0 = 0.5
c = 0.6

[solver]
objective = "budget"
m = 3.0

[run]
replications = 1000
step = 0.01
master_seed = 7
workers = 2
confidence = 0.999
rule = "left_riemann"

[estimate]
kinds = ["randomized", "fixed"]
fixed_horizon = 1.0

[sweep]
variable = "m"
from = 0.025
to = 10.0
steps = 400

[output]
path = "out.csv"
format = "json"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.run.workers, 2);
        assert_eq!(cfg.fixed_horizon().unwrap(), 1.0);
    }

    #[test]
    fn rejects_unknown_and_missing() {
        assert!(matches!(
            ExperimentConfig::from_toml("[model]\nfamily = \"gbm\"\n"),
            Err(CliError::Config(_))
        ));
        let mut cfg = ExperimentConfig::default();
        cfg.solver.objective = Objective::Penalty;
        assert!(matches!(cfg.validate_solver(), Err(CliError::Config(_))));
        cfg.solver.lambda = Some(-1.0);
        assert!(matches!(cfg.validate_solver(), Err(CliError::Config(_))));
    }
}
