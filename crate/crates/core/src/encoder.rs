//! Small post-LN transformer encoder standing in for a pre-trained language
//! model, plus the split of its output into passage and option rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coattention::{fuse_add_normalize, multi_head_coattention, MhaParams, NormSite};
use crate::data::input::Layout;
use crate::data::{DataError, ModelInput};
use crate::model::ForwardCtx;
use crate::params::{ParamId, ParamSet};
use crate::tensor::{Result, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub attention: MhaParams,
    pub attn_norm: NormSite,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ffn_norm: NormSite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub type_embedding: ParamId,
    pub blocks: Vec<EncoderBlock>,
    pub d_model: usize,
    pub n_heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_ff: usize,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, shape: EncoderShape, rng: &mut R) -> Result<Self> {
        let EncoderShape {
            vocab_size,
            max_seq_len,
            d_model,
            n_blocks,
            n_heads,
            d_ff,
        } = shape;
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(TensorError::Parameter {
                op: "encoder",
                message: format!("d_model {d_model} is not divisible by {n_heads} heads"),
            });
        }
        // embeddings use a fixed small scale instead of 1/fan_in
        let mut table = |name: &str, rows: usize, rng: &mut R| {
            params.add(name, crate::tensor::Tensor::randn(&[rows, d_model], 0.5, rng), true)
        };
        let token_embedding = table("encoder.token_embedding", vocab_size, rng);
        let position_embedding = table("encoder.position_embedding", max_seq_len, rng);
        let type_embedding = table("encoder.type_embedding", 2, rng);
        let d_head = d_model / n_heads;
        let blocks = (0..n_blocks)
            .map(|b| {
                let p = format!("encoder.block{b}");
                EncoderBlock {
                    attention: MhaParams::new(params, &format!("{p}.attn"), d_model, n_heads, d_head, d_head, true, rng),
                    attn_norm: NormSite::new(params, &format!("{p}.attn_norm"), d_model),
                    ffn_w1: params.add_weight(format!("{p}.ffn.w1"), d_model, d_ff, rng),
                    ffn_b1: params.add_bias(format!("{p}.ffn.b1"), d_ff),
                    ffn_w2: params.add_weight(format!("{p}.ffn.w2"), d_ff, d_model, rng),
                    ffn_b2: params.add_bias(format!("{p}.ffn.b2"), d_model),
                    ffn_norm: NormSite::new(params, &format!("{p}.ffn_norm"), d_model),
                }
            })
            .collect();
        Ok(Self {
            token_embedding,
            position_embedding,
            type_embedding,
            blocks,
            d_model,
            n_heads,
        })
    }
}

/// Sum of token, position and token-type embeddings, `L×d_model`.
pub fn embed<'p>(tape: &mut Tape<'p>, params: &'p ParamSet, enc: &EncoderParams, input: &ModelInput) -> Result<Var> {
    let ids: Vec<usize> = input.token_ids.iter().map(|&i| i as usize).collect();
    let types: Vec<usize> = input.token_type_ids.iter().map(|&t| t as usize).collect();
    if types.len() != ids.len() {
        return Err(TensorError::Shape {
            op: "embed",
            left: vec![ids.len()],
            right: vec![types.len()],
        });
    }
    let positions: Vec<usize> = (0..ids.len()).collect();
    let tok = params.var(tape, enc.token_embedding);
    let pos = params.var(tape, enc.position_embedding);
    let typ = params.var(tape, enc.type_embedding);
    let a = tape.gather_rows(tok, &ids)?;
    let b = tape.gather_rows(pos, &positions)?;
    let c = tape.gather_rows(typ, &types)?;
    let ab = tape.add(a, b)?;
    tape.add(ab, c)
}

/// Runs the self-attention blocks. Keys at positions where `mask` is false
/// are excluded from attention, so padded rows never affect unpadded rows.
pub fn encode<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    enc: &EncoderParams,
    x: Var,
    mask: &[bool],
    settings: EncodeSettings,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let mut h = x;
    for block in &enc.blocks {
        let attn = multi_head_coattention(tape, params, &block.attention, h, h, mask, settings.dropout_p, ctx)?;
        h = fuse_add_normalize(tape, params, h, attn, block.attn_norm, settings.ln_eps)?;
        let w1 = params.var(tape, block.ffn_w1);
        let b1 = params.var(tape, block.ffn_b1);
        let w2 = params.var(tape, block.ffn_w2);
        let b2 = params.var(tape, block.ffn_b2);
        let inner = tape.matmul(h, w1)?;
        let inner = tape.add_row(inner, b1)?;
        let inner = tape.gelu(inner)?;
        let out = tape.matmul(inner, w2)?;
        let out = tape.add_row(out, b2)?;
        let out = tape.dropout(out, settings.dropout_p, ctx.training, &mut ctx.rng)?;
        h = fuse_add_normalize(tape, params, h, out, block.ffn_norm, settings.ln_eps)?;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeSettings {
    pub dropout_p: f64,
    pub ln_eps: f64,
}

/// Passage rows `E_P` and option-definition rows `E_OD` of an encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEncoding {
    pub e_p: Var,
    pub e_od: Var,
    /// Source positions of the rows of `e_p` / `e_od`.
    pub passage_positions: Vec<usize>,
    pub option_positions: Vec<usize>,
    /// Row masks over `e_p` / `e_od`; every gathered row is a real token.
    pub passage_mask: Vec<bool>,
    pub option_mask: Vec<bool>,
}

impl SplitEncoding {
    /// Membership masks over the full sequence (`L` entries each).
    pub fn sequence_masks(&self, len: usize) -> (Vec<bool>, Vec<bool>) {
        let mut p = vec![false; len];
        let mut od = vec![false; len];
        self.passage_positions.iter().for_each(|&i| p[i] = true);
        self.option_positions.iter().for_each(|&i| od[i] = true);
        (p, od)
    }
}

/// Row positions of the two segments. With `include_sep`, each segment
/// also keeps its closing `[SEP]`.
pub fn segment_positions(layout: Layout, include_sep: bool) -> (Vec<usize>, Vec<usize>) {
    let extra = usize::from(include_sep);
    (
        (1..layout.first_sep + extra).collect(),
        (layout.first_sep + 1..layout.second_sep + extra).collect(),
    )
}

pub fn split_representations(
    tape: &mut Tape<'_>,
    h: Var,
    input: &ModelInput,
    include_sep: bool,
) -> std::result::Result<SplitEncoding, SplitError> {
    let layout = input.layout()?;
    if tape.shape(h).first() != Some(&input.len()) {
        return Err(SplitError::Tensor(TensorError::Shape {
            op: "split_representations",
            left: tape.shape(h).to_vec(),
            right: vec![input.len()],
        }));
    }
    let (passage_positions, option_positions) = segment_positions(layout, include_sep);
    let e_p = tape.gather_rows(h, &passage_positions)?;
    let e_od = tape.gather_rows(h, &option_positions)?;
    Ok(SplitEncoding {
        e_p,
        e_od,
        passage_mask: vec![true; passage_positions.len()],
        option_mask: vec![true; option_positions.len()],
        passage_positions,
        option_positions,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error(transparent)]
    Layout(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::{CLS_ID, PAD_ID, SEP_ID};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SETTINGS: EncodeSettings = EncodeSettings {
        dropout_p: 0.0,
        ln_eps: 1e-5,
    };

    fn shape(n_blocks: usize) -> EncoderShape {
        EncoderShape {
            vocab_size: 12,
            max_seq_len: 12,
            d_model: 8,
            n_blocks,
            n_heads: 2,
            d_ff: 16,
        }
    }

    fn input() -> ModelInput {
        // [CLS] p p p [SEP] o o o o [SEP] [PAD] [PAD]
        let token_ids = vec![CLS_ID, 5, 6, 7, SEP_ID, 8, 9, 10, 11, SEP_ID, PAD_ID, PAD_ID];
        let token_type_ids = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0];
        let attention_mask = (0..12).map(|i| i < 10).collect();
        ModelInput {
            token_ids,
            token_type_ids,
            attention_mask,
        }
    }

    #[test]
    fn split_counts_and_gather() {
        let mut params = ParamSet::new();
        let enc = EncoderParams::new(&mut params, shape(1), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = input();
        let mut tape = Tape::new();
        let h = embed(&mut tape, &params, &enc, &x).unwrap();
        let split = split_representations(&mut tape, h, &x, false).unwrap();
        assert_eq!(split.passage_positions, [1, 2, 3]);
        assert_eq!(split.option_positions, [5, 6, 7, 8]);
        let hv = tape.value(h);
        let ep = tape.value(split.e_p);
        for (r, &pos) in split.passage_positions.iter().enumerate() {
            assert_eq!(ep.row(r), hv.row(pos));
        }
        let (p, od) = split.sequence_masks(x.len());
        assert!(p.iter().zip(&od).all(|(a, b)| !(a & b)));
        assert!(!p[0] && !p[4] && !od[9]);
    }

    #[test]
    fn zero_blocks_is_identity() {
        let mut params = ParamSet::new();
        let enc = EncoderParams::new(&mut params, shape(0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::randn(&[12, 8], 1.0, &mut ChaCha8Rng::seed_from_u64(2)));
        let y = encode(&mut tape, &params, &enc, x, &input().attention_mask, SETTINGS, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn embedding_type_additivity() {
        let mut params = ParamSet::new();
        let enc = EncoderParams::new(&mut params, shape(0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = input();
        let mut y = x.clone();
        y.token_type_ids[2] = 1;
        let mut tape = Tape::new();
        let a = embed(&mut tape, &params, &enc, &x).unwrap();
        let b = embed(&mut tape, &params, &enc, &y).unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        let types = params.get(enc.type_embedding);
        for j in 0..8 {
            let diff = b.at(2, j) - a.at(2, j);
            assert!((diff - (types.at(1, j) - types.at(0, j))).abs() < 1e-12);
        }
        assert_eq!(a.row(3), b.row(3));
    }

    #[test]
    fn out_of_range_id_is_index_error() {
        let mut params = ParamSet::new();
        let enc = EncoderParams::new(&mut params, shape(1), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut x = input();
        x.token_ids[1] = 99;
        let mut tape = Tape::new();
        assert!(matches!(
            embed(&mut tape, &params, &enc, &x),
            Err(TensorError::Index { .. })
        ));
    }

    #[test]
    fn pad_rows_do_not_leak() {
        let mut params = ParamSet::new();
        let enc = EncoderParams::new(&mut params, shape(2), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let x = input();
        let mut tape = Tape::new();
        let e = embed(&mut tape, &params, &enc, &x).unwrap();
        let mut perturbed = tape.value(e);
        for j in 0..8 {
            perturbed.data_mut()[11 * 8 + j] += 3.0;
        }
        let e2 = tape.constant(perturbed);
        let a = encode(&mut tape, &params, &enc, e, &x.attention_mask, SETTINGS, &mut ForwardCtx::eval()).unwrap();
        let b = encode(&mut tape, &params, &enc, e2, &x.attention_mask, SETTINGS, &mut ForwardCtx::eval()).unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        for r in 0..10 {
            assert_eq!(a.row(r), b.row(r));
        }
    }
}
