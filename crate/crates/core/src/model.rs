//! The full multiple-choice model: encoder, co-attention stack and scorer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{argmax, join_scores, pool_and_merge, score_option, ClassifierParams};
use crate::coattention::{stack_k, CoAttentionInput, CoAttentionLayer, CoAttentionMode, CoAttentionSettings, Representations};
use crate::data::{DataError, ModelInput, NUM_OPTIONS};
use crate::encoder::{embed, encode, split_representations, EncodeSettings, EncoderParams, EncoderShape, SplitEncoding, SplitError};
use crate::params::{ParamGrads, ParamSet};
use crate::tensor::{Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("expected {NUM_OPTIONS} option inputs, got {0}")]
    OptionCount(usize),
    #[error("checkpoint parameter {name}: {message}")]
    Checkpoint { name: String, message: String },
}

impl From<SplitError> for ModelError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::Layout(e) => ModelError::Data(e),
            SplitError::Tensor(e) => ModelError::Tensor(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Train/eval switch and the dropout stream for one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCtx {
    pub training: bool,
    pub rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads_enc: usize,
    pub d_ff: usize,
    /// Co-attention heads.
    pub heads: usize,
    pub d_q: usize,
    pub d_k: usize,
    pub d_v: usize,
    /// Number of stacked co-attention layers.
    pub k: usize,
    pub mode: CoAttentionMode,
    /// Both co-attention passes share projection weights.
    pub shared_params: bool,
    /// Keep each segment's closing `[SEP]` row in `E_P` / `E_OD`.
    pub include_sep: bool,
    pub score_bias: bool,
    pub dropout_p: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            max_seq_len: 150,
            d_model: 64,
            n_blocks: 2,
            n_heads_enc: 4,
            d_ff: 256,
            heads: 4,
            d_q: 16,
            d_k: 16,
            d_v: 16,
            k: 1,
            mode: CoAttentionMode::Stacked,
            shared_params: false,
            include_sep: false,
            score_bias: false,
            dropout_p: 0.1,
            ln_eps: 1e-5,
        }
    }

    /// Published-scale co-attention settings over an xxlarge-sized hidden
    /// state. Recorded for reference; far too large to train here.
    pub fn paper(vocab_size: usize) -> Self {
        Self {
            d_model: 4096,
            n_blocks: 12,
            n_heads_enc: 64,
            d_ff: 16384,
            heads: 64,
            d_q: 64,
            d_k: 64,
            d_v: 64,
            ..Self::desk(vocab_size)
        }
    }

    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                out.push(msg)
            }
        };
        need(self.vocab_size >= 4, format!("vocab_size {} must cover the 4 special tokens", self.vocab_size));
        need(self.max_seq_len >= 5, format!("max_seq_len {} must be at least 5", self.max_seq_len));
        need(self.d_model > 0, "d_model must be positive".into());
        need(
            self.n_heads_enc > 0 && self.d_model.is_multiple_of(self.n_heads_enc.max(1)),
            format!("d_model {} must be divisible by n_heads_enc {}", self.d_model, self.n_heads_enc),
        );
        need(self.d_ff > 0, "d_ff must be positive".into());
        need(self.heads > 0, "heads must be positive".into());
        need(self.d_q == self.d_k, format!("d_q {} must equal d_k {}", self.d_q, self.d_k));
        need(self.d_k > 0 && self.d_v > 0, "d_k and d_v must be positive".into());
        need(self.k >= 1, "k must be at least 1".into());
        need((0.0..1.0).contains(&self.dropout_p), format!("dropout_p {} must be in [0, 1)", self.dropout_p));
        need(self.ln_eps > 0.0, "ln_eps must be positive".into());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(problems))
        }
    }
}

/// Intermediate values of one option's forward pass.
#[derive(Debug, Clone)]
pub struct OptionTrace {
    pub split: SplitEncoding,
    pub reps: Representations,
    pub merged: Var,
    pub score: Var,
}

/// Output of [`WnDuma::instance_loss`].
#[derive(Debug, Clone)]
pub struct InstanceOutput {
    pub logits: Vec<f64>,
    pub loss: f64,
    pub grads: ParamGrads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WnDuma {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub encoder: EncoderParams,
    pub coattention: Vec<CoAttentionLayer>,
    pub classifier: ClassifierParams,
}

impl WnDuma {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let shape = EncoderShape {
            vocab_size: config.vocab_size,
            max_seq_len: config.max_seq_len,
            d_model: config.d_model,
            n_blocks: config.n_blocks,
            n_heads: config.n_heads_enc,
            d_ff: config.d_ff,
        };
        let encoder = EncoderParams::new(&mut params, shape, &mut rng)?;
        let coattention = (0..config.k)
            .map(|j| {
                CoAttentionLayer::new(
                    &mut params,
                    &format!("coattention.layer{j}"),
                    config.d_model,
                    config.heads,
                    config.d_k,
                    config.d_v,
                    config.shared_params,
                    &mut rng,
                )
            })
            .collect();
        let classifier = ClassifierParams::new(&mut params, config.d_model, config.score_bias, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            coattention,
            classifier,
        })
    }

    fn settings(&self) -> (EncodeSettings, CoAttentionSettings) {
        (
            EncodeSettings {
                dropout_p: self.config.dropout_p,
                ln_eps: self.config.ln_eps,
            },
            CoAttentionSettings {
                dropout_p: self.config.dropout_p,
                ln_eps: self.config.ln_eps,
            },
        )
    }

    /// Encode, split, co-attend, pool and score one option.
    pub fn option_forward<'p>(&'p self, tape: &mut Tape<'p>, input: &ModelInput, ctx: &mut ForwardCtx) -> Result<OptionTrace> {
        let (enc_settings, co_settings) = self.settings();
        let x = embed(tape, &self.params, &self.encoder, input)?;
        let h = encode(tape, &self.params, &self.encoder, x, &input.attention_mask, enc_settings, ctx)?;
        let split = split_representations(tape, h, input, self.config.include_sep)?;
        let co_input = CoAttentionInput {
            e_p: split.e_p,
            e_od: split.e_od,
            p_mask: &split.passage_mask,
            od_mask: &split.option_mask,
        };
        let reps = stack_k(tape, &self.params, &self.coattention, co_input, self.config.mode, co_settings, ctx)?;
        let merged = pool_and_merge(tape, reps, &split.option_mask, &split.passage_mask)?;
        let score = score_option(tape, &self.params, &self.classifier, merged)?;
        Ok(OptionTrace {
            split,
            reps,
            merged,
            score,
        })
    }

    /// Logits over the five options, as a length-5 tape value.
    pub fn instance_logits<'p>(&'p self, tape: &mut Tape<'p>, inputs: &[ModelInput], ctx: &mut ForwardCtx) -> Result<Var> {
        if inputs.len() != NUM_OPTIONS {
            return Err(ModelError::OptionCount(inputs.len()));
        }
        let scores = inputs
            .iter()
            .map(|input| Ok(self.option_forward(tape, input, ctx)?.score))
            .collect::<Result<Vec<_>>>()?;
        Ok(join_scores(tape, &scores)?)
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, inputs: &[ModelInput]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let logits = self.instance_logits(&mut tape, inputs, &mut ForwardCtx::eval())?;
        Ok(tape.data(logits).to_vec())
    }

    pub fn predict(&self, inputs: &[ModelInput]) -> Result<usize> {
        let logits = self.logits(inputs)?;
        Ok(argmax(&logits).expect("five logits"))
    }

    /// Evaluation-mode cross-entropy loss without gradients.
    pub fn loss(&self, inputs: &[ModelInput], label: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let logits = self.instance_logits(&mut tape, inputs, &mut ForwardCtx::eval())?;
        let loss = tape.cross_entropy(logits, label)?;
        Ok(tape.scalar(loss))
    }

    /// Cross-entropy loss against `label` with parameter gradients.
    pub fn instance_loss(&self, inputs: &[ModelInput], label: usize, ctx: &mut ForwardCtx) -> Result<InstanceOutput> {
        let mut tape = Tape::new();
        let logits = self.instance_logits(&mut tape, inputs, ctx)?;
        let loss = tape.cross_entropy(logits, label)?;
        let logit_values = tape.data(logits).to_vec();
        let loss_value = tape.scalar(loss);
        let grads = tape.backward(loss)?;
        Ok(InstanceOutput {
            logits: logit_values,
            loss: loss_value,
            grads: ParamGrads::from_tape(&self.params, &tape, &grads),
        })
    }

    /// Copies every tensor of `other` into this model by name. Names and
    /// shapes must match exactly.
    pub fn load_params(&mut self, other: &ParamSet) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(ModelError::Checkpoint {
                name: "*".into(),
                message: format!("expected {} tensors, found {}", self.params.len(), other.len()),
            });
        }
        for entry in other.entries() {
            let id = self.params.find(&entry.name).ok_or_else(|| ModelError::Checkpoint {
                name: entry.name.clone(),
                message: "not part of this model".into(),
            })?;
            let target = self.params.get_mut(id);
            if target.shape() != entry.tensor.shape() {
                return Err(ModelError::Checkpoint {
                    name: entry.name.clone(),
                    message: format!("shape {:?} does not match {:?}", entry.tensor.shape(), target.shape()),
                });
            }
            *target = entry.tensor.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_problems_listed_together() {
        let mut c = ModelConfig::desk(100);
        c.d_q = 8;
        c.k = 0;
        c.dropout_p = 1.0;
        assert_eq!(c.problems().len(), 3);
        assert!(ModelConfig::desk(100).problems().is_empty());
        assert!(ModelConfig::paper(100).problems().is_empty());
    }

    #[test]
    fn shared_params_reduce_count() {
        let mut c = ModelConfig::desk(20);
        c.max_seq_len = 16;
        let separate = WnDuma::new(c.clone(), 0).unwrap().params.numel();
        c.shared_params = true;
        let shared = WnDuma::new(c, 0).unwrap().params.numel();
        assert_eq!(separate - shared, 4 * 3 * 64 * 16 + 64 * 64);
    }
}
