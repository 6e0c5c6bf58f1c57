//! Run configuration: one flat, human-editable JSON file.
//!
//! Coefficient functions use the compact string forms of the core parser
//! (`constant:V`, `sin:AMP:MODE`, `cos:AMP:MODE`, `poly:C0,C1,...`) plus
//! `csv:PATH` for tabulations (two columns `x,value` with a header row;
//! paths resolve relative to the config file).

use dlrom_core::constructor::{BudgetConstants, BudgetInput, SampleBudget};
use dlrom_core::fom::{Coefficient, DiffusionProblem};
use dlrom_core::linalg::stable_hash_hex;
use dlrom_core::training::{ArchTemplate, OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_one() -> f64 {
    1.0
}
fn default_failure_prob() -> f64 {
    0.1
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_epochs() -> usize {
    800
}
fn default_batch() -> usize {
    100
}
fn default_lr() -> f64 {
    3e-3
}
fn default_hidden_layers() -> usize {
    2
}
fn default_n_test() -> usize {
    256
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Problem definition.
    pub a0: String,
    pub psis: Vec<String>,
    pub forcing: String,
    pub ellipticity_margin: f64,
    pub bernstein_budget: f64,
    pub gamma: f64,
    pub eps: f64,

    // Discretization and compression.
    pub grid_k: u32,
    pub smoothness: usize,
    pub bandwidth: usize,

    // Sample sizes.
    pub n_train: usize,
    #[serde(default)]
    pub n_sweep: Vec<usize>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,

    // Training.
    /// Regularization weight; when absent the placeholder default
    /// n_tilde^{-1/2} is used and flagged in the train metadata.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    /// 0 selects the harness default max(32, 4 p m_tilde).
    #[serde(default)]
    pub hidden_width: usize,
    #[serde(default)]
    pub eta_star_normalization: bool,

    // Budget constants and failure probability.
    #[serde(default = "default_one")]
    pub c0: f64,
    #[serde(default = "default_one")]
    pub c1: f64,
    #[serde(default = "default_one")]
    pub c2: f64,
    #[serde(default = "default_one")]
    pub c3: f64,
    #[serde(default = "default_one")]
    pub c4: f64,
    #[serde(default = "default_failure_prob")]
    pub failure_prob: f64,

    // Seeds.
    pub seed_train: u64,
    pub seed_test: u64,

    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            ConfigError::Invalid(e) => write!(f, "invalid config: {e}"),
        }
    }
}

/// A validated configuration: parsed problem, canonical hash, and the
/// directory paths derived from it.
pub struct LoadedConfig {
    pub raw: RunConfig,
    pub problem: DiffusionProblem,
    pub config_hash: String,
}

fn parse_coefficient(spec: &str, base: &Path) -> Result<Coefficient, ConfigError> {
    if let Some(path) = spec.strip_prefix("csv:") {
        let full = base.join(path);
        let text = std::fs::read_to_string(&full).map_err(|e| {
            ConfigError::Invalid(format!("coefficient table {}: {e}", full.display()))
        })?;
        return Coefficient::from_csv_text(&text)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", full.display())));
    }
    Coefficient::parse_spec(spec).map_err(|e| ConfigError::Invalid(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    let raw: RunConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if raw.grid_k < 3 {
        return Err(ConfigError::Invalid("grid_k must be at least 3".into()));
    }
    if raw.bandwidth < 1 {
        return Err(ConfigError::Invalid("bandwidth must be at least 1".into()));
    }
    if raw.smoothness < 1 || raw.smoothness > 8 {
        return Err(ConfigError::Invalid("smoothness must be in 1..=8".into()));
    }
    if raw.n_train == 0 {
        return Err(ConfigError::Invalid("n_train must be positive".into()));
    }
    if !(0.0 < raw.failure_prob && raw.failure_prob < 1.0) {
        return Err(ConfigError::Invalid(
            "failure_prob must lie in (0, 1)".into(),
        ));
    }
    if let Some(l) = raw.lambda {
        if l < 0.0 {
            return Err(ConfigError::Invalid("lambda must be nonnegative".into()));
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let a0 = parse_coefficient(&raw.a0, base)?;
    let psis = raw
        .psis
        .iter()
        .map(|s| parse_coefficient(s, base))
        .collect::<Result<Vec<_>, _>>()?;
    if psis.is_empty() {
        return Err(ConfigError::Invalid("need at least one psi".into()));
    }
    let forcing = parse_coefficient(&raw.forcing, base)?;
    let problem = DiffusionProblem {
        a0,
        psis,
        forcing,
        r: raw.ellipticity_margin,
        xi: raw.bernstein_budget,
        gamma: raw.gamma,
        eps: raw.eps,
    };
    // Hash the canonical serialization of the parsed config so formatting
    // differences do not change the fingerprint.
    let canonical = serde_json::to_string(&raw).expect("config serializes");
    let config_hash = stable_hash_hex(canonical.as_bytes());
    Ok(LoadedConfig {
        raw,
        problem,
        config_hash,
    })
}

impl LoadedConfig {
    pub fn optimizer(&self) -> Result<OptimizerKind, ConfigError> {
        match self.raw.optimizer.as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(ConfigError::Invalid(format!(
                "unknown optimizer {other:?} (adam | sgd)"
            ))),
        }
    }

    pub fn arch(&self) -> ArchTemplate {
        let m_tilde = 2 * self.raw.bandwidth + 1;
        let p = self.problem.param_dim();
        if self.raw.hidden_width == 0 {
            dlrom_core::training::default_arch(p, m_tilde)
        } else {
            ArchTemplate {
                hidden_layers: self.raw.hidden_layers,
                hidden_width: self.raw.hidden_width,
            }
        }
    }

    pub fn budget_constants(&self) -> BudgetConstants {
        BudgetConstants {
            c0: self.raw.c0,
            c1: self.raw.c1,
            c2: self.raw.c2,
            c3: self.raw.c3,
            c4: self.raw.c4,
        }
    }

    pub fn budget_input(&self, n: usize, g_norm: Option<f64>) -> BudgetInput {
        BudgetInput {
            constants: self.budget_constants(),
            gamma: self.raw.gamma,
            eps: self.raw.eps,
            p: self.problem.param_dim(),
            s: self.raw.smoothness,
            m: self.raw.bandwidth,
            grid_k: self.raw.grid_k,
            sample: SampleBudget::TrainingSize {
                n,
                failure_prob: self.raw.failure_prob,
            },
            g_norm,
        }
    }

    /// The regularization weight plus a tag describing where it came from.
    pub fn lambda_for(&self, n: usize) -> (f64, &'static str) {
        match self.raw.lambda {
            Some(l) => (l, "config"),
            None => {
                let n_tilde = dlrom_core::constructor::effective_sample_size(
                    n,
                    self.problem.param_dim(),
                    self.raw.failure_prob,
                    self.raw.c0,
                );
                (n_tilde.powf(-0.5), "default_placeholder_ntilde")
            }
        }
    }

    pub fn train_config(&self, n: usize, eta_star: Option<f64>, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda_for(n).0,
            optimizer: self.optimizer().unwrap_or(OptimizerKind::Adam),
            learning_rate: self.raw.learning_rate,
            epochs: self.raw.epochs,
            batch_size: self.raw.batch_size,
            seed,
            eta_star: if self.raw.eta_star_normalization {
                eta_star
            } else {
                None
            },
        }
    }
}
