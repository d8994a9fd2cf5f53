//! RMSProp, minimization convention.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    squared_grad_avg: Vec<f64>,
}

impl RmsProp {
    /// Optimizer state for `dim` parameters with the default decay and
    /// epsilon.
    pub fn new(dim: usize, learning_rate: f64) -> Result<Self> {
        Self::with_hyperparameters(dim, learning_rate, DEFAULT_DECAY, DEFAULT_EPSILON)
    }

    pub fn with_hyperparameters(dim: usize, learning_rate: f64, decay: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {learning_rate} must be positive")));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Config(format!("decay {decay} must lie in (0, 1)")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {epsilon} must be positive")));
        }
        Ok(Self {
            learning_rate,
            decay,
            epsilon,
            squared_grad_avg: vec![0.0; dim],
        })
    }

    pub fn squared_grad_avg(&self) -> &[f64] {
        &self.squared_grad_avg
    }

    /// `v <- decay v + (1 - decay) g^2; p <- p - lr g / (sqrt(v) + eps)`.
    ///
    /// A non-finite gradient leaves both state and parameters untouched and
    /// returns [`Error::NonFinite`].
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_dim("rmsprop parameters", self.squared_grad_avg.len(), params.len())?;
        check_dim("rmsprop gradient", self.squared_grad_avg.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        for ((p, v), g) in params.iter_mut().zip(&mut self.squared_grad_avg).zip(grad) {
            *v = self.decay * *v + (1.0 - self.decay) * g * g;
            *p -= self.learning_rate * g / (v.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
