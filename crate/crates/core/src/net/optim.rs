use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Adam with bias-corrected moments and optional L2 weight decay folded
/// into the gradient.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(num_params: usize, weight_decay: f64) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], learning_rate: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.t += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = one - T::from_f64_lossy(self.beta1.powi(self.t));
        let c2 = one - T::from_f64_lossy(self.beta2.powi(self.t));
        let lr = T::from_f64_lossy(learning_rate);
        let eps = T::from_f64_lossy(self.eps);
        let wd = T::from_f64_lossy(self.weight_decay);
        for i in 0..params.len() {
            let g = grads[i] + wd * params[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|&g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::from_f64_lossy(max_norm / norm);
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    /// Absolute decrease of the monitored loss that counts as improvement.
    pub min_improvement: f64,
    pub min_lr: f64,
    pub cooldown: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.5,
            patience: 60,
            min_improvement: 0.1,
            min_lr: 1e-6,
            cooldown: 0,
        }
    }
}

/// Reduces the learning rate when the monitored loss stops improving.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    config: PlateauConfig,
    lr: f64,
    best: f64,
    bad_epochs: usize,
    cooldown_left: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Self {
        PlateauScheduler {
            config,
            lr: initial_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
            cooldown_left: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's loss; returns true if the rate was reduced.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best - self.config.min_improvement {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.cooldown_left > 0 {
            self.cooldown_left -= 1;
            self.bad_epochs = 0;
        }
        if self.bad_epochs > self.config.patience {
            let new_lr = (self.lr * self.config.factor).max(self.config.min_lr);
            self.bad_epochs = 0;
            self.cooldown_left = self.config.cooldown;
            if new_lr < self.lr {
                self.lr = new_lr;
                return true;
            }
        }
        false
    }
}
