//! Optimization, evaluation, multi-seed runs and ensembling.

pub mod checkpoint;
pub mod ensemble;
pub mod metrics;
pub mod optim;
pub mod schedule;
pub mod trainer;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;

pub use checkpoint::Checkpoint;
pub use ensemble::majority_vote;
pub use optim::{clip_global_norm, AdamW};
pub use schedule::lr_at;
pub use trainer::{evaluate, run_seeds, train, EncodedDataset, EvalPoint, RunRecord, SeedSummary, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },
    #[error("NaN gradient in {tensor} at element {index}; step aborted")]
    NanGradient { tensor: String, index: usize },
    #[error("invalid training configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("seed {seed} failed ({} other runs finished): {source}", .partial.len())]
    SeedFailed {
        seed: u64,
        partial: Vec<RunRecord>,
        #[source]
        source: Box<TrainError>,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// When nonzero, training runs exactly this many optimizer steps
    /// (cycling epochs as needed) and `epochs` is ignored.
    pub max_steps: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub grad_clip_norm: f64,
    pub dropout_p: f64,
    pub eval_every_steps: usize,
    pub seeds: Vec<u64>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            epochs: 1,
            max_steps: 500,
            batch_size: 8,
            peak_lr: 1e-3,
            warmup_fraction: 0.1,
            grad_clip_norm: 10.0,
            dropout_p: 0.1,
            eval_every_steps: 50,
            seeds: vec![1],
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn paper() -> Self {
        Self {
            epochs: 3,
            max_steps: 0,
            batch_size: 2,
            peak_lr: 5e-6,
            eval_every_steps: 200,
            seeds: vec![1, 2, 3, 4, 5],
            ..Self::desk()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            out.push(format!("warmup_fraction {} must be in (0, 1)", self.warmup_fraction));
        }
        if self.grad_clip_norm.is_nan() || self.grad_clip_norm <= 0.0 {
            out.push(format!("grad_clip_norm {} must be positive", self.grad_clip_norm));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if self.max_steps == 0 && self.epochs == 0 {
            out.push("epochs must be at least 1 when max_steps is 0".into());
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            out.push(format!("peak_lr {} must be positive", self.peak_lr));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            out.push(format!("dropout_p {} must be in [0, 1)", self.dropout_p));
        }
        if self.eval_every_steps == 0 {
            out.push("eval_every_steps must be at least 1".into());
        }
        if self.seeds.is_empty() {
            out.push("seeds must list at least one seed".into());
        }
        if self.weight_decay < 0.0 {
            out.push(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            out.push("beta1 and beta2 must be in [0, 1)".into());
        }
        if self.adam_eps <= 0.0 {
            out.push("adam_eps must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Config(problems))
        }
    }

    /// Optimizer steps for a training set of `n` instances.
    pub fn total_steps(&self, n: usize) -> usize {
        if self.max_steps > 0 {
            self.max_steps
        } else {
            self.epochs * n.div_ceil(self.batch_size.max(1))
        }
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        ((self.warmup_fraction * total_steps as f64).round() as usize).min(total_steps.saturating_sub(1))
    }
}
