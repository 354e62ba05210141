use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Gradient, ModelParams};
use crate::error::{check_dims, Error, Result};

/// `f(x) = ½ Σ L_n x_n²` observed through a gradient with additive
/// zero-mean Gaussian noise of per-coordinate standard deviation `noise_std`.
///
/// Coordinate-wise smooth with constants `L`, minimum `f* = 0` at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    l_diag: Vec<f64>,
    noise_std: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(l_diag: Vec<f64>, noise_std: Vec<f64>) -> Result<Self> {
        check_dims("noise_std", l_diag.len(), noise_std.len())?;
        if let Some(i) = l_diag.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!("L_diag[{i}] must be positive and finite")));
        }
        if let Some(i) = noise_std.iter().position(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("noise_std[{i}] must be non-negative and finite")));
        }
        Ok(Self { l_diag, noise_std })
    }

    pub fn dim(&self) -> usize {
        self.l_diag.len()
    }

    pub fn l_diag(&self) -> &[f64] {
        &self.l_diag
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn l1_norm(&self) -> f64 {
        self.l_diag.iter().sum()
    }

    pub fn sigma_l1_norm(&self) -> f64 {
        self.noise_std.iter().sum()
    }

    pub fn loss(&self, x: &ModelParams) -> f64 {
        0.5 * self
            .l_diag
            .iter()
            .zip(x.as_slice())
            .map(|(l, v)| l * v * v)
            .sum::<f64>()
    }

    /// Noise-free gradient `L ⊙ x`.
    pub fn exact_grad(&self, x: &ModelParams) -> Result<Gradient> {
        check_dims("quadratic gradient", self.dim(), x.len())?;
        Ok(Gradient::from_raw(
            self.l_diag.iter().zip(x.as_slice()).map(|(l, v)| l * v).collect(),
        ))
    }

    /// Mini-batch gradient: the mean of `batch_size` i.i.d. single-sample
    /// gradients, so the noise standard deviation shrinks by `1/√B`.
    pub fn batch_grad<R: Rng + ?Sized>(
        &self,
        x: &ModelParams,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Gradient> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        check_dims("quadratic gradient", self.dim(), x.len())?;
        let scale = 1.0 / (batch_size as f64).sqrt();
        let values = self
            .l_diag
            .iter()
            .zip(&self.noise_std)
            .zip(x.as_slice())
            .map(|((l, s), v)| {
                let z: f64 = rng.sample(StandardNormal);
                l * v + s * scale * z
            })
            .collect();
        Ok(Gradient::from_raw(values))
    }
}

/// Single-sample stochastic gradient of the diagonal quadratic:
/// `L ⊙ x + z`, `z_n ~ N(0, noise_std_n²)`.
pub fn quadratic_grad<R: Rng + ?Sized>(
    x: &ModelParams,
    l_diag: &[f64],
    noise_std: &[f64],
    rng: &mut R,
) -> Result<Gradient> {
    check_dims("L_diag", x.len(), l_diag.len())?;
    let objective = QuadraticObjective::new(l_diag.to_vec(), noise_std.to_vec())?;
    objective.batch_grad(x, 1, rng)
}
