//! Pooling of the co-attended representations and per-option scoring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coattention::Representations;
use crate::params::{ParamId, ParamSet};
use crate::tensor::{Result, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    /// Scoring vector of length `2·d_model`.
    pub w_score: ParamId,
    pub bias: Option<ParamId>,
}

impl ClassifierParams {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, d_model: usize, with_bias: bool, rng: &mut R) -> Self {
        let dim = 2 * d_model;
        let std = (1.0 / dim as f64).sqrt();
        Self {
            w_score: params.add("classifier.w_score", Tensor::randn(&[dim], std, rng), true),
            bias: with_bias.then(|| params.add_bias("classifier.bias", 1)),
        }
    }
}

/// `concat(mean(REP_1), mean(REP_2))` over the unmasked rows.
pub fn pool_and_merge(tape: &mut Tape<'_>, reps: Representations, rep1_mask: &[bool], rep2_mask: &[bool]) -> Result<Var> {
    let i1 = tape.mean_pool_masked(reps.rep1, rep1_mask)?;
    let i2 = tape.mean_pool_masked(reps.rep2, rep2_mask)?;
    tape.concat(&[i1, i2])
}

/// Scalar score `M·w_score (+ bias)` as a one-element tensor.
pub fn score_option<'p>(tape: &mut Tape<'p>, params: &'p ParamSet, cls: &ClassifierParams, merged: Var) -> Result<Var> {
    let w = params.var(tape, cls.w_score);
    let score = tape.dot(merged, w)?;
    match cls.bias {
        Some(b) => {
            let b = params.var(tape, b);
            tape.add(score, b)
        }
        None => Ok(score),
    }
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(logits: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in logits.iter().enumerate() {
        match best {
            Some(b) if logits[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Joins per-option scores into the logit vector.
pub fn join_scores(tape: &mut Tape<'_>, scores: &[Var]) -> Result<Var> {
    if scores.is_empty() {
        return Err(TensorError::Parameter {
            op: "join_scores",
            message: "no option scores".into(),
        });
    }
    tape.concat(scores)
}
