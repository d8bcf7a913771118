//! Triangular cyclical learning rate and SGD with momentum and weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicLr {
    pub base: f64,
    pub max: f64,
    /// Steps per full cycle; the peak sits at `period / 2`.
    pub period: usize,
}

impl Default for CyclicLr {
    fn default() -> Self {
        CyclicLr {
            base: 0.01,
            max: 0.1,
            period: 40,
        }
    }
}

impl CyclicLr {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.max >= self.base && self.max.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates need 0 < base <= max, got {} and {}",
                self.base, self.max
            )));
        }
        if self.period < 2 {
            return Err(Error::Config(format!("cycle period {} must be at least 2", self.period)));
        }
        Ok(())
    }

    /// Rate at zero-based `step`: linear from `base` up to `max` at half
    /// period and back.
    pub fn at(&self, step: usize) -> f64 {
        let half = self.period as f64 / 2.0;
        let pos = (step % self.period) as f64;
        let frac = 1.0 - (pos / half - 1.0).abs();
        self.base + (self.max - self.base) * frac
    }
}

/// SGD state: one velocity buffer per parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Model,
}

impl Sgd {
    pub fn new(model: &Model, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: model.zeros_like(),
        }
    }

    /// `v <- mu v + (g + wd w)`, `w <- w - lr v`.
    pub fn step(&mut self, model: &mut Model, grads: &Model, lr: f64) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        let grads = grads.tensors();
        for ((w, v), (_, g)) in model.tensors_mut().into_iter().zip(self.velocity.tensors_mut()).zip(grads) {
            ndarray::Zip::from(&mut *w).and(&mut *v).and(g).for_each(|w, v, &g| {
                *v = mu * *v + g + wd * *w;
                *w -= lr * *v;
            });
        }
    }
}
