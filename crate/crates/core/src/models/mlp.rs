use rand::Rng;
use rand_distr::StandardNormal;

use super::{argmax, log_softmax, Classifier, Gradient, ModelParams};
use crate::data::Sample;
use crate::error::{Error, Result};

/// Fully connected network with `tanh` hidden activations and a softmax
/// cross-entropy head.
///
/// `arch = [inputs, hidden..., classes]`. Each layer contributes its
/// `out × in` weight matrix (row-major) followed by its `out` biases, layers
/// in order.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    arch: Vec<usize>,
    offsets: Vec<usize>,
}

impl Mlp {
    pub fn new(arch: Vec<usize>) -> Result<Self> {
        if arch.len() < 2 || arch.contains(&0) || arch[arch.len() - 1] < 2 {
            return Err(Error::invalid(format!(
                "invalid MLP architecture {arch:?}: need >= 2 nonzero layers and >= 2 outputs"
            )));
        }
        let mut offsets = Vec::with_capacity(arch.len());
        let mut off = 0;
        offsets.push(0);
        for w in arch.windows(2) {
            off += w[1] * w[0] + w[1];
            offsets.push(off);
        }
        Ok(Self { arch, offsets })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    fn layers(&self) -> usize {
        self.arch.len() - 1
    }

    /// Weight and bias slices of layer `l`.
    fn layer<'a>(&self, x: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let (inp, out) = (self.arch[l], self.arch[l + 1]);
        let start = self.offsets[l];
        let w = &x[start..start + inp * out];
        let b = &x[start + inp * out..self.offsets[l + 1]];
        (w, b)
    }

    /// Returns every layer's activation; the last entry holds the logits.
    fn forward(&self, x: &[f64], features: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.arch.len());
        acts.push(features.to_vec());
        for l in 0..self.layers() {
            let (w, b) = self.layer(x, l);
            let inp = &acts[l];
            let last = l + 1 == self.layers();
            let next: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| {
                    let row = &w[o * inp.len()..(o + 1) * inp.len()];
                    let z = bo + row.iter().zip(inp).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(next);
        }
        acts
    }

    fn check(&self, x: &ModelParams, batch: &[&Sample]) -> Result<()> {
        if x.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "architecture {:?} has {} parameters, got {}",
                self.arch,
                self.num_params(),
                x.len()
            )));
        }
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let classes = self.arch[self.arch.len() - 1];
        if let Some(s) = batch
            .iter()
            .find(|s| s.features.len() != self.arch[0] || s.label >= classes)
        {
            return Err(Error::invalid(format!(
                "sample with {} features and label {} does not fit architecture {:?}",
                s.features.len(),
                s.label,
                self.arch
            )));
        }
        Ok(())
    }
}

impl Classifier for Mlp {
    fn num_params(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }

    fn loss_and_grad(&self, x: &ModelParams, batch: &[&Sample]) -> Result<(f64, Gradient)> {
        self.check(x, batch)?;
        let xs = x.as_slice();
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        for s in batch {
            let acts = self.forward(xs, &s.features);
            let logits = &acts[self.layers()];
            let mut delta = vec![0.0; logits.len()];
            loss += log_softmax(logits, &mut delta) - logits[s.label];
            delta[s.label] -= 1.0;
            for l in (0..self.layers()).rev() {
                let (w, _) = self.layer(xs, l);
                let inp = &acts[l];
                let start = self.offsets[l];
                let n_in = inp.len();
                for (o, d) in delta.iter().enumerate() {
                    let row = &mut grad[start + o * n_in..start + (o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(inp) {
                        *g += d * a;
                    }
                    grad[start + n_in * delta.len() + o] += d;
                }
                if l > 0 {
                    // inputs of layer l are tanh outputs: d tanh = 1 - a²
                    delta = (0..n_in)
                        .map(|i| {
                            let back: f64 = delta
                                .iter()
                                .enumerate()
                                .map(|(o, d)| d * w[o * n_in + i])
                                .sum();
                            back * (1.0 - inp[i] * inp[i])
                        })
                        .collect();
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, Gradient::from_raw(grad)))
    }

    fn loss(&self, x: &ModelParams, batch: &[&Sample]) -> Result<f64> {
        self.check(x, batch)?;
        let total: f64 = batch
            .iter()
            .map(|s| {
                let acts = self.forward(x.as_slice(), &s.features);
                let logits = &acts[self.layers()];
                let mut p = vec![0.0; logits.len()];
                log_softmax(logits, &mut p) - logits[s.label]
            })
            .sum();
        Ok(total / batch.len() as f64)
    }

    fn predict(&self, x: &ModelParams, features: &[f64]) -> usize {
        let acts = self.forward(x.as_slice(), features);
        argmax(&acts[self.layers()])
    }

    fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = crate::rng::setup_stream(seed, 0x4D4C_5000);
        let mut values = vec![0.0; self.num_params()];
        for l in 0..self.layers() {
            let (inp, out) = (self.arch[l], self.arch[l + 1]);
            let scale = (1.0 / inp as f64).sqrt();
            let start = self.offsets[l];
            for v in &mut values[start..start + inp * out] {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        ModelParams::new(values).expect("finite init")
    }
}

/// Mini-batch mean cross-entropy gradient of the MLP `arch` at `x`.
pub fn mlp_grad(x: &ModelParams, arch: &[usize], batch: &[&Sample]) -> Result<Gradient> {
    Mlp::new(arch.to_vec())?.loss_and_grad(x, batch).map(|(_, g)| g)
}
