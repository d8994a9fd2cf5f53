//! Diagonal Gaussian proposal `q(theta | psi)` over simulator parameters.
//!
//! `psi` is stored as a mean vector and a vector of log standard deviations.
//! Wherever `psi` is flattened (scores, gradients, optimizer state) the layout
//! is `[mean_0, .., mean_{D-1}, log_scale_0, .., log_scale_{D-1}]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalParams {
    pub mean: Vec<f64>,
    pub log_scale: Vec<f64>,
}

impl ProposalParams {
    pub fn new(mean: Vec<f64>, log_scale: Vec<f64>) -> Result<Self> {
        let params = Self { mean, log_scale };
        params.validate()?;
        Ok(params)
    }

    /// Proposal with the given mean and a shared standard deviation.
    pub fn isotropic(mean: Vec<f64>, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0) {
            return Err(Error::contract("standard deviation must be positive"));
        }
        let log_scale = vec![std_dev.ln(); mean.len()];
        Self::new(mean, log_scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() {
            return Err(Error::contract("proposal dimension must be at least 1"));
        }
        check_dim("proposal log_scale", self.mean.len(), self.log_scale.len())?;
        if self
            .mean
            .iter()
            .chain(&self.log_scale)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("proposal parameters"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of entries in `psi` (twice the theta dimension).
    pub fn num_params(&self) -> usize {
        2 * self.dim()
    }

    pub fn scale(&self) -> Vec<f64> {
        self.log_scale.iter().map(|s| s.exp()).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.mean.clone();
        flat.extend_from_slice(&self.log_scale);
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("proposal flat parameters", self.num_params(), flat.len())?;
        let d = self.dim();
        self.mean.copy_from_slice(&flat[..d]);
        self.log_scale.copy_from_slice(&flat[d..]);
        Ok(())
    }

    /// Draws `theta = mean + exp(log_scale) * eps` with `eps ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.reparameterize(&eps)
    }

    /// Maps standard-normal noise through the affine reparameterization.
    pub fn reparameterize(&self, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_scale)
            .zip(eps)
            .map(|((m, s), e)| m + s.exp() * e)
            .collect()
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        check_dim("proposal log_density", self.dim(), theta.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_scale)
            .zip(theta)
            .map(|((m, s), t)| {
                let z = (t - m) * (-s).exp();
                -0.5 * z * z - s - HALF_LN_2PI
            })
            .sum())
    }

    /// Exact `grad_psi log q(theta | psi)`, flattened as described in the
    /// module docs.
    pub fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim("proposal score", self.dim(), theta.len())?;
        let d = self.dim();
        let mut out = vec![0.0; 2 * d];
        for i in 0..d {
            let inv_sigma = (-self.log_scale[i]).exp();
            let z = (theta[i] - self.mean[i]) * inv_sigma;
            out[i] = z * inv_sigma;
            out[d + i] = z * z - 1.0;
        }
        Ok(out)
    }

    /// Differential entropy, `sum_d 0.5 ln(2 pi e) + log_scale_d`.
    pub fn entropy(&self) -> f64 {
        self.log_scale.iter().map(|s| HALF_LN_2PI + 0.5 + s).sum()
    }

    /// Gradient of [`entropy`](Self::entropy): zero for the means, one for
    /// each log-scale.
    pub fn entropy_grad(&self) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; 2 * d];
        g[d..].iter_mut().for_each(|v| *v = 1.0);
        g
    }

    /// The Gaussian mode, which is the mean.
    pub fn mode(&self) -> &[f64] {
        &self.mean
    }
}
