//! Run configuration: one TOML file describes a whole run, command line
//! flags override individual values, and the effective configuration is
//! recorded verbatim in the run's provenance so any report can be
//! reproduced from its output directory alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use logebp::bootstrap::{AlphaVariant, BootstrapConfig};
use logebp::fit::FitOptions;

use crate::CliError;

/// Environment variable with the default worker count.
pub const WORKERS_ENV: &str = "LOGEBP_WORKERS";

/// Maximum likelihood options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlSection {
    /// Maximum Fisher scoring iterations.
    pub max_iter: usize,
    /// Convergence tolerance on the scoring step norm.
    pub tol: f64,
}

impl Default for MlSection {
    fn default() -> Self {
        let d = FitOptions::default();
        Self {
            max_iter: d.max_iter,
            tol: d.tol,
        }
    }
}

impl MlSection {
    pub fn to_options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            theta_init: None,
        }
    }
}

/// Back-transform constant used inside bootstrap replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSection {
    /// Conditional-mean constant, matching the production predictors.
    #[default]
    Full,
    /// Comparison variant that omits the unit-level half-variance.
    DropUnitHalf,
}

impl AlphaSection {
    pub fn to_variant(self) -> AlphaVariant {
        match self {
            AlphaSection::Full => AlphaVariant::Full,
            AlphaSection::DropUnitHalf => AlphaVariant::DropUnitHalf,
        }
    }
}

/// Parametric bootstrap options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    /// Replicate count `B`.
    pub replicates: usize,
    /// Seed override; the run's master seed when absent.
    pub seed: Option<u64>,
    /// Back-transform variant.
    pub alpha: AlphaSection,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            replicates: 200,
            seed: None,
            alpha: AlphaSection::default(),
        }
    }
}

/// One block of identically sized areas in a simulated design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGroup {
    /// Population size per area.
    pub pop: usize,
    /// Sampled units per area.
    pub sample: usize,
    /// How many areas of this shape.
    pub count: usize,
}

/// Simulation design: area shapes, true parameters and replicate budget.
/// Covariates follow the built-in recipe (intercept plus one uniform
/// column, drawn once from the seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Area shape blocks, expanded in order.
    pub groups: Vec<SimGroup>,
    /// True regression coefficients (intercept first).
    pub beta: Vec<f64>,
    /// True between-area variance.
    pub sigma_u2: f64,
    /// True within-area variance.
    pub sigma_e2: f64,
    /// Replicate count for empirical error runs.
    pub replicates: usize,
    /// Seed override; the run's master seed when absent.
    pub seed: Option<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            groups: vec![SimGroup {
                pop: 20,
                sample: 4,
                count: 50,
            }],
            beta: vec![0.5, 0.2],
            sigma_u2: 0.25,
            sigma_e2: 0.5,
            replicates: 200,
            seed: None,
        }
    }
}

impl SimSection {
    /// Expands the groups into per-area `(pop, sample)` pairs.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat((g.pop, g.sample)).take(g.count))
            .collect()
    }
}

/// The full configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Sampled-data CSV (`area_id, w, covariates...`).
    pub sample: Option<PathBuf>,
    /// Out-of-sample covariate CSV (`area_id, covariates...`).
    pub oos: Option<PathBuf>,
    /// Report directory.
    pub out_dir: PathBuf,
    /// Shift constant `k` in `y = log(w + k)`, original scale units.
    pub shift: f64,
    /// Prepend an intercept column to the file covariates.
    pub intercept: bool,
    /// Master seed for every seeded stage without its own override.
    pub seed: u64,
    /// Worker threads for replicate loops; 0 means one per core.
    pub workers: usize,
    /// Maximum likelihood options.
    pub ml: MlSection,
    /// Bootstrap options.
    pub bootstrap: BootstrapSection,
    /// Simulation design.
    pub sim: SimSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample: None,
            oos: None,
            out_dir: PathBuf::from("."),
            shift: 0.0,
            intercept: true,
            seed: 0,
            workers: 0,
            ml: MlSection::default(),
            bootstrap: BootstrapSection::default(),
            sim: SimSection::default(),
        }
    }
}

impl RunConfig {
    /// Loads a configuration file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::User(format!("invalid config {}: {e}", path.display())))
    }

    /// Serializes the effective configuration; embedded verbatim in every
    /// provenance record.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Checks cross-field rules after all overrides are applied.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(CliError::User(format!(
                "shift constant must be finite and nonnegative, got {}",
                self.shift
            )));
        }
        if self.sim.beta.is_empty() {
            return Err(CliError::User("sim.beta must not be empty".into()));
        }
        Ok(())
    }

    /// Bootstrap configuration with inherited defaults resolved.
    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.bootstrap.replicates,
            seed: self.bootstrap.seed.unwrap_or(self.seed),
            parallelism: self.workers,
            alpha: self.bootstrap.alpha.to_variant(),
            fit_options: self.ml.to_options(),
            ..BootstrapConfig::default()
        }
    }

    /// Seed for the simulation stages.
    pub fn sim_seed(&self) -> u64 {
        self.sim.seed.unwrap_or(self.seed)
    }
}

/// Reads the default worker count from the environment; 0 when unset or
/// unparsable.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}
