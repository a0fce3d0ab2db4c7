use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::params::{ParamGrads, ParamSet};

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// AdamW with decoupled weight decay and bias-corrected moments. Tensors
/// whose `decay` flag is off (biases, layer-norm gains) are not decayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ParamSet, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = ParamGrads::zeros_like(params).grads;
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn from_config(params: &ParamSet, config: &TrainConfig) -> Self {
        Self::new(params, config.beta1, config.beta2, config.adam_eps, config.weight_decay)
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamGrads, lr: f64) -> Result<(), TrainError> {
        if self.m.len() != params.len() || grads.grads.len() != params.len() {
            return Err(TrainError::Invalid(format!(
                "optimizer state covers {} tensors, gradients {}, model {}",
                self.m.len(),
                grads.grads.len(),
                params.len()
            )));
        }
        for (entry, g) in params.entries().iter().zip(&grads.grads) {
            if let Some(index) = g.iter().position(|v| v.is_nan()) {
                return Err(TrainError::NanGradient {
                    tensor: entry.name.clone(),
                    index,
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, entry) in params.entries_mut().iter_mut().enumerate() {
            let decay = if entry.decay { lr * self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in entry.tensor.data_mut().iter_mut().enumerate() {
                let g = grads.grads[k][i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= decay * *w;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
