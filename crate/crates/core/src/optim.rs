//! SGD with momentum.
//!
//! `v ← μ v + (g + λ p)`, `p ← p − η v`. Sorted-pooling weights go through the
//! same update; they may get their own learning rate and weight decay.

use crate::error::{Error, Result};
use crate::layers::{Param, ParamKind};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Overrides `learning_rate` for sorted-pooling weights.
    pub pool_learning_rate: Option<f64>,
    /// Overrides `weight_decay` for sorted-pooling weights.
    pub pool_weight_decay: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            pool_learning_rate: None,
            pool_weight_decay: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgdState {
    pub config: SgdConfig,
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(config: SgdConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) || config.pool_learning_rate.is_some_and(|lr| !(lr > 0.0)) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", config.momentum)));
        }
        if config.weight_decay < 0.0 || config.pool_weight_decay.is_some_and(|wd| wd < 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(SgdState {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Applies one update and zeroes the gradients.
    ///
    /// Fails without touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut [Param<'_>]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| p.value.zeros_like()).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} parameters, got {}",
                self.velocity.len(),
                params.len()
            )));
        }
        let c = self.config;
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            if v.shape() != p.value.shape() {
                return Err(Error::shape("sgd velocity", v.shape(), p.value.shape()));
            }
            let (lr, wd) = match p.kind {
                ParamKind::PoolWeight => (
                    c.pool_learning_rate.unwrap_or(c.learning_rate),
                    c.pool_weight_decay.unwrap_or(c.weight_decay),
                ),
                _ => (c.learning_rate, c.weight_decay),
            };
            let values = p.value.data_mut();
            for ((x, vel), &g) in values.iter_mut().zip(v.data_mut()).zip(p.grad.data()) {
                *vel = c.momentum * *vel + g + wd * *x;
                *x -= lr * *vel;
            }
        }
        zero_grads(params);
        Ok(())
    }
}

pub fn zero_grads(params: &mut [Param<'_>]) {
    for p in params {
        p.grad.fill(0.0);
    }
}
