//! Stochastic gradient descent with momentum and L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr: 1e-3, momentum: 0.9, weight_decay: 5e-4 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// `v <- mu * v + (g + wd * w)`, `w <- w - lr * v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(config: SgdConfig, num_params: usize) -> Self {
        Sgd { config, velocity: vec![0.0; num_params] }
    }

    pub fn num_params(&self) -> usize {
        self.velocity.len()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.velocity.len(), "optimizer/parameter size mismatch");
        assert_eq!(grads.len(), self.velocity.len(), "gradient/parameter size mismatch");
        let SgdConfig { lr, momentum, weight_decay } = self.config;
        for ((w, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = momentum * *v + g + weight_decay * *w;
            *w -= lr * *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_accumulates() {
        let mut opt = Sgd::new(SgdConfig { lr: 0.1, momentum: 0.5, weight_decay: 0.0 }, 1);
        let mut w = [1.0];
        opt.step(&mut w, &[1.0]);
        assert!((w[0] - 0.9).abs() < 1e-15);
        opt.step(&mut w, &[1.0]);
        assert!((w[0] - (0.9 - 0.1 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks() {
        let mut opt = Sgd::new(SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.5 }, 1);
        let mut w = [2.0];
        opt.step(&mut w, &[0.0]);
        assert!((w[0] - 1.9).abs() < 1e-15);
    }
}
