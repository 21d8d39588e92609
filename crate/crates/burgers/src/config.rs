//! Experiment configuration: a flat `key = value` file (TOML grammar, one
//! section for the spectrum), validated and canonicalized at load time.
//! The run manifest records a hash of the canonicalized config, so the hash
//! changes exactly when a semantically meaningful field changes.

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Which experiment the runner executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MomentConvergence,
    SolverCrosscheck,
    FkCrosscheck,
    VariationalCompare,
    BoundAudit,
    CovarianceCheck,
}

/// Spectrum declaration: an explicit list `a = [..]`, or the power family
/// `a_n = c · n^(−q)` with cutoff `n_max`, expanded at load time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumConfig {
    Explicit { a: Vec<f64> },
    Family { c: f64, q: f64, n_max: usize },
}

impl SpectrumConfig {
    pub fn build(&self) -> Result<Spectrum<f64>> {
        match self {
            SpectrumConfig::Explicit { a } => Spectrum::new(a.clone()),
            SpectrumConfig::Family { c, q, n_max } => Spectrum::power_family(*c, *q, *n_max),
        }
    }

    /// Canonical form: always the explicit list.
    fn canonicalize(&self) -> Result<SpectrumConfig> {
        Ok(SpectrumConfig::Explicit {
            a: self.build()?.coeffs().to_vec(),
        })
    }
}

/// One or several viscosities; sweeps need the list form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonField {
    Single(f64),
    List(Vec<f64>),
}

impl EpsilonField {
    pub fn list(&self) -> Vec<f64> {
        match self {
            EpsilonField::Single(e) => vec![*e],
            EpsilonField::List(v) => v.clone(),
        }
    }

    pub fn first(&self) -> f64 {
        self.list()[0]
    }
}

fn default_workers() -> usize {
    1
}
fn default_cfl() -> f64 {
    0.9
}
fn default_orders() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_walkers() -> usize {
    10_000
}
fn default_fk_points() -> usize {
    8
}
fn default_restarts() -> usize {
    8
}
fn default_x_targets() -> usize {
    16
}
fn default_bound_orders() -> Vec<usize> {
    vec![1, 2, 4]
}
fn default_bound_times() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_output() -> String {
    "out".into()
}
fn default_true() -> bool {
    true
}

/// Full experiment configuration. `horizon`, `steps` and `grid_points` are
/// the `T`, `K`, `M` of the solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub spectrum: SpectrumConfig,
    pub horizon: f64,
    pub steps: usize,
    pub grid_points: usize,
    pub epsilon: EpsilonField,
    pub n_realizations: usize,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Moment orders estimated by the moment experiments.
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    /// Walker count for the walker-average estimator.
    #[serde(default = "default_walkers")]
    pub n_walkers: usize,
    /// Number of (t, x) evaluation points for the walker cross-check.
    #[serde(default = "default_fk_points")]
    pub fk_points: usize,
    /// Multi-start count for the least-action minimizer.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Number of endpoint targets per realization for the inviscid route.
    #[serde(default = "default_x_targets")]
    pub x_targets: usize,
    /// Variational trajectory steps (coarsened from `steps`).
    #[serde(default)]
    pub variational_steps: Option<usize>,
    /// Orders `p` exercised by the sup-bound audits.
    #[serde(default = "default_bound_orders")]
    pub bound_orders: Vec<usize>,
    /// Times exercised by the sup-bound audits.
    #[serde(default = "default_bound_times")]
    pub bound_times: Vec<f64>,
    /// Run the halved-resolution leg of the solver cross-check.
    #[serde(default = "default_true")]
    pub refine: bool,
    /// Store the transform solve in log space (needed for very small ε).
    #[serde(default)]
    pub log_space: bool,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spectrum.build()?;
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if self.grid_points <= 2 * spec.n_max() {
            return Err(Error::Config(format!(
                "grid_points = {} must exceed 2·n_max = {}",
                self.grid_points,
                2 * spec.n_max()
            )));
        }
        let eps = self.epsilon.list();
        if eps.is_empty() {
            return Err(Error::Config("epsilon list must be nonempty".into()));
        }
        if eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("every epsilon must be positive".into()));
        }
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config("cfl_safety must lie in (0, 1]".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if let Some(vk) = self.variational_steps {
            if vk == 0 || self.steps % vk != 0 {
                return Err(Error::Config(format!(
                    "variational_steps = {vk} must divide steps = {}",
                    self.steps
                )));
            }
        }
        Ok(())
    }

    /// Hash of the canonicalized config: the spectrum is expanded to its
    /// explicit list and the struct is serialized with fixed field order.
    pub fn canonical_hash(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.spectrum = self.spectrum.canonicalize()?;
        let text = serde_json::to_string(&canon).map_err(|e| Error::Config(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}
