use rand::Rng;
use rand_distr::StandardNormal;

use super::{argmax, log_softmax, Classifier, Gradient, ModelParams};
use crate::data::Sample;
use crate::error::{Error, Result};

/// Multinomial logistic regression.
///
/// Parameter layout: the `classes × dim` weight matrix in row-major order,
/// followed by the `classes` biases. `N = classes · (dim + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    dim: usize,
    classes: usize,
}

impl LogisticModel {
    pub fn new(dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || classes < 2 {
            return Err(Error::invalid(
                "logistic model needs dim >= 1 and at least two classes",
            ));
        }
        Ok(Self { dim, classes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, x: &[f64], features: &[f64], out: &mut [f64]) {
        let bias = &x[self.classes * self.dim..];
        for (c, z) in out.iter_mut().enumerate() {
            let row = &x[c * self.dim..(c + 1) * self.dim];
            *z = bias[c] + row.iter().zip(features).map(|(w, f)| w * f).sum::<f64>();
        }
    }

    fn check(&self, x: &ModelParams, batch: &[&Sample]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if x.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "logistic model expects {} parameters, got {}",
                self.num_params(),
                x.len()
            )));
        }
        if let Some(s) = batch
            .iter()
            .find(|s| s.features.len() != self.dim || s.label >= self.classes)
        {
            return Err(Error::invalid(format!(
                "sample with {} features and label {} does not fit a {}-dim {}-class model",
                s.features.len(),
                s.label,
                self.dim,
                self.classes
            )));
        }
        Ok(())
    }
}

impl Classifier for LogisticModel {
    fn num_params(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn loss_and_grad(&self, x: &ModelParams, batch: &[&Sample]) -> Result<(f64, Gradient)> {
        self.check(x, batch)?;
        let x = x.as_slice();
        let mut grad = vec![0.0; self.num_params()];
        let mut z = vec![0.0; self.classes];
        let mut p = vec![0.0; self.classes];
        let mut loss = 0.0;
        let bias_off = self.classes * self.dim;
        for s in batch {
            self.logits(x, &s.features, &mut z);
            let lse = log_softmax(&z, &mut p);
            loss += lse - z[s.label];
            p[s.label] -= 1.0;
            for (c, &r) in p.iter().enumerate() {
                let row = &mut grad[c * self.dim..(c + 1) * self.dim];
                for (g, f) in row.iter_mut().zip(&s.features) {
                    *g += r * f;
                }
                grad[bias_off + c] += r;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, Gradient::from_raw(grad)))
    }

    fn loss(&self, x: &ModelParams, batch: &[&Sample]) -> Result<f64> {
        self.check(x, batch)?;
        let mut z = vec![0.0; self.classes];
        let mut p = vec![0.0; self.classes];
        let total: f64 = batch
            .iter()
            .map(|s| {
                self.logits(x.as_slice(), &s.features, &mut z);
                log_softmax(&z, &mut p) - z[s.label]
            })
            .sum();
        Ok(total / batch.len() as f64)
    }

    fn predict(&self, x: &ModelParams, features: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(x.as_slice(), features, &mut z);
        argmax(&z)
    }

    fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = crate::rng::setup_stream(seed, 0x4C4F_4749);
        let scale = 0.01;
        let values = (0..self.num_params())
            .map(|i| {
                if i < self.classes * self.dim {
                    scale * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect();
        ModelParams::new(values).expect("finite init")
    }
}

/// Mini-batch mean gradient of the multinomial logistic loss.
pub fn logistic_grad(x: &ModelParams, num_classes: usize, batch: &[&Sample]) -> Result<Gradient> {
    let dim = batch
        .first()
        .map(|s| s.features.len())
        .ok_or_else(|| Error::invalid("empty batch"))?;
    let model = LogisticModel::new(dim, num_classes)?;
    model.loss_and_grad(x, batch).map(|(_, g)| g)
}
