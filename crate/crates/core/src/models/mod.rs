//! Differentiable toy models and the parameter/gradient vectors they act on.

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::{logistic_grad, LogisticModel};
pub use mlp::{mlp_grad, Mlp};
pub use quadratic::{quadratic_grad, QuadraticObjective};

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite entry at index {i}")));
    }
    Ok(())
}

/// The shared model state `x`. Length is fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams {
    values: Vec<f64>,
}

impl ModelParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("model parameters", &values)?;
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Replaces the contents, rejecting non-finite values so the invariant
    /// survives every update.
    pub(crate) fn set(&mut self, values: Vec<f64>) -> Result<()> {
        crate::error::check_dims("model update", self.values.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "model update produced a non-finite parameter".into(),
            ));
        }
        self.values = values;
        Ok(())
    }
}

/// A (stochastic) loss gradient, same length as the model it was taken at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gradient {
    values: Vec<f64>,
}

impl Gradient {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("gradient", &values)?;
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// A classifier trained by the simulator on a [`Dataset`](crate::data::Dataset).
pub trait Classifier: Send + Sync {
    fn num_params(&self) -> usize;

    /// Mean cross-entropy loss and its gradient over `batch`.
    fn loss_and_grad(&self, x: &ModelParams, batch: &[&Sample]) -> Result<(f64, Gradient)>;

    /// Mean cross-entropy loss over `batch` (no gradient).
    fn loss(&self, x: &ModelParams, batch: &[&Sample]) -> Result<f64>;

    fn predict(&self, x: &ModelParams, features: &[f64]) -> usize;

    /// Deterministic initial parameters.
    fn init_params(&self, seed: u64) -> ModelParams;
}

/// `log(sum(exp(z)))` and the softmax of `z`, computed stably.
pub(crate) fn log_softmax(z: &[f64], probs: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &v) in probs.iter_mut().zip(z) {
        *p = (v - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}
