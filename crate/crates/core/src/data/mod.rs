//! Datasets, worker sharding and mini-batch sampling.

mod idx;
mod partition;

pub use idx::{load_idx_dataset, parse_idx_dataset};
pub use partition::{partition_dataset, sample_minibatch, PartitionMode, WorkerShard};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Labelled samples sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    num_classes: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        let dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.label >= num_classes {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} outside [0, {num_classes})",
                    s.label
                )));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Option<&Sample> {
        self.samples.get(i)
    }

    pub fn refs(&self) -> Vec<&Sample> {
        self.samples.iter().collect()
    }

    /// First `n` samples (or all of them).
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples.iter().take(n).cloned().collect(),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }
}

/// Parameters of the Gaussian-blob classification generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Distance of each class mean from the origin.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Per-feature standard deviation around the class mean.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_separation() -> f64 {
    2.0
}

fn default_spread() -> f64 {
    1.0
}

/// Draws a train/test pair of Gaussian-blob datasets. Class means are random
/// directions scaled to `separation`; samples are grouped by class.
pub fn synthetic_classification<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    if spec.num_classes < 2 || spec.dim == 0 || spec.train_per_class == 0 {
        return Err(Error::invalid(
            "synthetic data needs >= 2 classes, dim >= 1 and train_per_class >= 1",
        ));
    }
    if !(spec.separation >= 0.0 && spec.spread >= 0.0) {
        return Err(Error::invalid("separation and spread must be non-negative"));
    }
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|a| a * spec.separation / norm).collect()
        })
        .collect();
    let draw = |per_class: usize, rng: &mut R| -> Vec<Sample> {
        let mut out = Vec::with_capacity(per_class * spec.num_classes);
        for (label, mean) in means.iter().enumerate() {
            for _ in 0..per_class {
                let features = mean
                    .iter()
                    .map(|m| m + spec.spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                out.push(Sample { features, label });
            }
        }
        out
    };
    let train = draw(spec.train_per_class, rng);
    let test = draw(spec.test_per_class, rng);
    Ok((
        Dataset::new(train, spec.num_classes)?,
        Dataset::new(test, spec.num_classes)?,
    ))
}
