use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::data::{PartitionMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::ledger::CostMode;

/// Learning rate `δ`: a constant, or `"theory"` for `1/√(T‖L‖₁)` (quadratic
/// models only).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRate {
    Constant(f64),
    Schedule(RateSchedule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateSchedule {
    Theory,
}

/// Mini-batch size `B`: a constant, or `"horizon"` for `B = T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Constant(usize),
    Schedule(BatchSchedule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchSchedule {
    Horizon,
}

impl Default for BatchSize {
    fn default() -> Self {
        BatchSize::Constant(1)
    }
}

/// A scalar broadcast to every coordinate, or one value per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScalarOrVec {
    pub fn expand(&self, what: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrVec::Vector(v) if v.len() == n => Ok(v.clone()),
            ScalarOrVec::Vector(v) => Err(Error::invalid(format!(
                "{what} has {} entries, expected {n}",
                v.len()
            ))),
        }
    }
}

fn scalar_one() -> ScalarOrVec {
    ScalarOrVec::Scalar(1.0)
}

fn scalar_zero() -> ScalarOrVec {
    ScalarOrVec::Scalar(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// Diagonal quadratic `½ Σ L_n x_n²` with Gaussian gradient noise.
    Quadratic {
        dim: usize,
        #[serde(rename = "L", default = "scalar_one")]
        l_diag: ScalarOrVec,
        #[serde(default = "scalar_zero")]
        noise_std: ScalarOrVec,
        #[serde(default = "scalar_one")]
        x0: ScalarOrVec,
    },
    /// Multinomial logistic regression sized by the dataset.
    Logistic,
    /// Tanh MLP with the given hidden widths, sized by the dataset.
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Keep only the first `limit` training samples.
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx(IdxSource),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub partition: PartitionMode,
    pub source: DataSource,
}

fn default_eta() -> f64 {
    1.0
}

/// One experiment. JSON field names follow the usual notation: `M` workers,
/// `N` model size, `gamma = K/N`, `T` rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(rename = "M")]
    pub workers: usize,
    /// Optional; checked against the size implied by the model.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub model_size: Option<usize>,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
    /// Defaults to 1e-1 for full-precision algorithms and 1e-3 for
    /// sign-based ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<LearningRate>,
    #[serde(default)]
    pub batch_size: BatchSize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub cost_mode: CostMode,
    /// Keep per-round, per-coordinate selection counts.
    #[serde(default)]
    pub record_selection: bool,
    /// Compute worker steps on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
}

impl ExperimentConfig {
    /// A config with the documented defaults for everything but the
    /// essentials.
    pub fn new(algorithm: Algorithm, workers: usize, gamma: f64, rounds: usize, model: ModelSpec) -> Self {
        Self {
            algorithm,
            workers,
            model_size: None,
            gamma,
            rounds,
            learning_rate: None,
            batch_size: BatchSize::default(),
            eta: default_eta(),
            mu: 0.0,
            seed: 0,
            model,
            data: None,
            cost_mode: CostMode::default(),
            record_selection: false,
            parallel: false,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// `K = round(γN)`, at least 1 when `γ > 0`.
    pub fn k_for(&self, n: usize) -> usize {
        let k = (self.gamma * n as f64).round() as usize;
        if self.gamma > 0.0 {
            k.clamp(1, n)
        } else {
            0
        }
    }

    pub fn batch_for_round(&self) -> usize {
        match self.batch_size {
            BatchSize::Constant(b) => b,
            BatchSize::Schedule(BatchSchedule::Horizon) => self.rounds,
        }
    }

    /// Resolves `δ`; `l1_norm` is `‖L‖₁` when the model knows it.
    pub fn resolve_learning_rate(&self, l1_norm: Option<f64>) -> Result<f64> {
        match self.learning_rate {
            None if self.algorithm.is_sign_based() => Ok(1e-3),
            None => Ok(1e-1),
            Some(LearningRate::Constant(d)) => Ok(d),
            Some(LearningRate::Schedule(RateSchedule::Theory)) => match l1_norm {
                Some(l1) => Ok(1.0 / (self.rounds as f64 * l1).sqrt()),
                None => Err(Error::invalid(
                    "learning_rate \"theory\" needs a quadratic model with known smoothness",
                )),
            },
        }
    }

    /// Checks the invariants that do not depend on the built model.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::invalid("M must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if let Some(LearningRate::Constant(d)) = self.learning_rate {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!("learning_rate must be positive, got {d}")));
            }
        }
        if self.batch_for_round() == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0, 1), got {}", self.mu)));
        }
        match (&self.model, &self.data) {
            (ModelSpec::Quadratic { dim: 0, .. }, _) => Err(Error::invalid("quadratic dim must be at least 1")),
            (ModelSpec::Quadratic { .. }, Some(_)) => {
                Err(Error::invalid("a quadratic model takes no data spec"))
            }
            (ModelSpec::Logistic | ModelSpec::Mlp { .. }, None) => {
                Err(Error::invalid("classification models need a data spec"))
            }
            _ => Ok(()),
        }
    }
}
