//! Dual multi-head co-attention between the passage encoding `E_P` and the
//! option-definition encoding `E_OD`.
//!
//! The first pass lets every option-definition row attend over the passage
//! (`REP_1 = LN(E_OD + MHA(E_OD, E_P))`). In stacked mode the second pass
//! lets the passage attend over `REP_1` (`REP_2 = LN(E_P + MHA(E_P, REP_1))`);
//! in parallel mode it attends over the raw `E_OD` instead.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::ForwardCtx;
use crate::params::{ParamId, ParamSet};
use crate::tensor::{Result, Tape, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoAttentionMode {
    /// The second pass reads the first pass's output.
    #[default]
    Stacked,
    /// Both passes read the encoder output.
    Parallel,
}

impl fmt::Display for CoAttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoAttentionMode::Stacked => "stacked",
            CoAttentionMode::Parallel => "parallel",
        })
    }
}

impl FromStr for CoAttentionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "stacked" => Ok(CoAttentionMode::Stacked),
            "parallel" => Ok(CoAttentionMode::Parallel),
            other => Err(format!("unknown mode {other:?} (expected stacked or parallel)")),
        }
    }
}

/// Projection weights of one multi-head attention block. Heads own separate
/// `d_model × d_k` query/key and `d_model × d_v` value matrices; the output
/// projection maps the concatenated heads (`h·d_v`) back to `d_model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhaParams {
    pub wq: Vec<ParamId>,
    pub wk: Vec<ParamId>,
    pub wv: Vec<ParamId>,
    pub wo: ParamId,
    /// Per-head query/key/value biases and the output bias, when enabled.
    pub biases: Option<MhaBiases>,
    pub d_k: usize,
    pub d_v: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhaBiases {
    pub bq: Vec<ParamId>,
    pub bk: Vec<ParamId>,
    pub bv: Vec<ParamId>,
    pub bo: ParamId,
}

impl MhaParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        d_model: usize,
        heads: usize,
        d_k: usize,
        d_v: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let mut wq = Vec::with_capacity(heads);
        let mut wk = Vec::with_capacity(heads);
        let mut wv = Vec::with_capacity(heads);
        for i in 0..heads {
            wq.push(params.add_weight(format!("{prefix}.head{i}.w_q"), d_model, d_k, rng));
            wk.push(params.add_weight(format!("{prefix}.head{i}.w_k"), d_model, d_k, rng));
            wv.push(params.add_weight(format!("{prefix}.head{i}.w_v"), d_model, d_v, rng));
        }
        let wo = params.add_weight(format!("{prefix}.w_o"), heads * d_v, d_model, rng);
        let biases = with_bias.then(|| MhaBiases {
            bq: (0..heads).map(|i| params.add_bias(format!("{prefix}.head{i}.b_q"), d_k)).collect(),
            bk: (0..heads).map(|i| params.add_bias(format!("{prefix}.head{i}.b_k"), d_k)).collect(),
            bv: (0..heads).map(|i| params.add_bias(format!("{prefix}.head{i}.b_v"), d_v)).collect(),
            bo: params.add_bias(format!("{prefix}.b_o"), d_model),
        });
        Self {
            wq,
            wk,
            wv,
            wo,
            biases,
            d_k,
            d_v,
        }
    }

    pub fn heads(&self) -> usize {
        self.wq.len()
    }
}

/// Layer-norm gain and shift for one add-and-normalize site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSite {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl NormSite {
    pub fn new(params: &mut ParamSet, prefix: &str, d_model: usize) -> Self {
        Self {
            gamma: params.add_ln_gain(format!("{prefix}.ln_gamma"), d_model),
            beta: params.add_bias(format!("{prefix}.ln_beta"), d_model),
        }
    }
}

/// One dual co-attention layer: the OD→P pass and the P→(REP_1|E_OD) pass,
/// each followed by its own add-and-normalize site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoAttentionLayer {
    pub od_query: MhaParams,
    pub p_query: MhaParams,
    pub od_norm: NormSite,
    pub p_norm: NormSite,
}

impl CoAttentionLayer {
    /// With `shared`, both passes use the same projection weights; the
    /// normalize sites stay separate either way.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        d_model: usize,
        heads: usize,
        d_k: usize,
        d_v: usize,
        shared: bool,
        rng: &mut R,
    ) -> Self {
        let od_query = MhaParams::new(params, &format!("{prefix}.od_query"), d_model, heads, d_k, d_v, false, rng);
        let p_query = if shared {
            od_query.clone()
        } else {
            MhaParams::new(params, &format!("{prefix}.p_query"), d_model, heads, d_k, d_v, false, rng)
        };
        Self {
            od_query,
            p_query,
            od_norm: NormSite::new(params, &format!("{prefix}.od_norm"), d_model),
            p_norm: NormSite::new(params, &format!("{prefix}.p_norm"), d_model),
        }
    }
}

/// `REP_1` (shape of `E_OD`) and `REP_2` (shape of `E_P`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Representations {
    pub rep1: Var,
    pub rep2: Var,
}

/// Multi-head attention of `query_src` rows over the unmasked rows of
/// `kv_src`. Dropout (rate `dropout_p`, training only) is applied to the
/// attention probabilities and to the projected output.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_coattention<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    mha: &MhaParams,
    query_src: Var,
    kv_src: Var,
    kv_mask: &[bool],
    dropout_p: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let l_kv = tape.shape(kv_src)[0];
    if kv_mask.len() != l_kv {
        return Err(TensorError::Shape {
            op: "multi_head_coattention",
            left: tape.shape(kv_src).to_vec(),
            right: vec![kv_mask.len()],
        });
    }
    if !kv_mask.iter().any(|&m| m) {
        return Err(TensorError::EmptyRow {
            op: "multi_head_coattention",
            row: 0,
        });
    }
    if mha.wk.len() != mha.heads() || mha.wv.len() != mha.heads() {
        return Err(TensorError::Parameter {
            op: "multi_head_coattention",
            message: "query, key and value head counts differ".into(),
        });
    }
    let scale = 1.0 / (mha.d_k as f64).sqrt();
    let mut heads = Vec::with_capacity(mha.heads());
    for i in 0..mha.heads() {
        let project = |tape: &mut Tape<'p>, x: Var, w: ParamId, b: Option<ParamId>| -> Result<Var> {
            let w = params.var(tape, w);
            let y = tape.matmul(x, w)?;
            match b {
                Some(b) => {
                    let b = params.var(tape, b);
                    tape.add_row(y, b)
                }
                None => Ok(y),
            }
        };
        let bias = |sel: fn(&MhaBiases) -> &Vec<ParamId>| mha.biases.as_ref().map(|b| sel(b)[i]);
        let q = project(tape, query_src, mha.wq[i], bias(|b| &b.bq))?;
        let k = project(tape, kv_src, mha.wk[i], bias(|b| &b.bk))?;
        let v = project(tape, kv_src, mha.wv[i], bias(|b| &b.bv))?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, scale)?;
        let probs = tape.softmax_rows(scores, Some(kv_mask))?;
        let probs = tape.dropout(probs, dropout_p, ctx.training, &mut ctx.rng)?;
        heads.push(tape.matmul(probs, v)?);
    }
    let concat = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)?
    };
    let wo = params.var(tape, mha.wo);
    let mut out = tape.matmul(concat, wo)?;
    if let Some(b) = &mha.biases {
        let bo = params.var(tape, b.bo);
        out = tape.add_row(out, bo)?;
    }
    tape.dropout(out, dropout_p, ctx.training, &mut ctx.rng)
}

/// `layer_norm(residual + mha)` with the site's gain and shift.
pub fn fuse_add_normalize<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    residual: Var,
    mha: Var,
    site: NormSite,
    eps: f64,
) -> Result<Var> {
    let sum = tape.add(residual, mha)?;
    let gamma = params.var(tape, site.gamma);
    let beta = params.var(tape, site.beta);
    tape.layer_norm(sum, gamma, beta, eps)
}

/// Inputs of one co-attention layer.
#[derive(Debug, Clone, Copy)]
pub struct CoAttentionInput<'m> {
    pub e_p: Var,
    pub e_od: Var,
    pub p_mask: &'m [bool],
    pub od_mask: &'m [bool],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoAttentionSettings {
    pub dropout_p: f64,
    pub ln_eps: f64,
}

fn dual_pass<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    layer: &CoAttentionLayer,
    input: CoAttentionInput<'_>,
    mode: CoAttentionMode,
    settings: CoAttentionSettings,
    ctx: &mut ForwardCtx,
) -> Result<Representations> {
    let mha1 = multi_head_coattention(
        tape,
        params,
        &layer.od_query,
        input.e_od,
        input.e_p,
        input.p_mask,
        settings.dropout_p,
        ctx,
    )?;
    let rep1 = fuse_add_normalize(tape, params, input.e_od, mha1, layer.od_norm, settings.ln_eps)?;
    let kv = match mode {
        CoAttentionMode::Stacked => rep1,
        CoAttentionMode::Parallel => input.e_od,
    };
    let mha2 = multi_head_coattention(
        tape,
        params,
        &layer.p_query,
        input.e_p,
        kv,
        input.od_mask,
        settings.dropout_p,
        ctx,
    )?;
    let rep2 = fuse_add_normalize(tape, params, input.e_p, mha2, layer.p_norm, settings.ln_eps)?;
    Ok(Representations { rep1, rep2 })
}

/// `REP_1` from the OD→P pass; `REP_2` from the passage attending over `REP_1`.
pub fn dual_pass_stacked<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    layer: &CoAttentionLayer,
    input: CoAttentionInput<'_>,
    settings: CoAttentionSettings,
    ctx: &mut ForwardCtx,
) -> Result<Representations> {
    dual_pass(tape, params, layer, input, CoAttentionMode::Stacked, settings, ctx)
}

/// Both passes read the encoder output; `REP_2` never depends on `REP_1`.
pub fn dual_pass_parallel<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    layer: &CoAttentionLayer,
    input: CoAttentionInput<'_>,
    settings: CoAttentionSettings,
    ctx: &mut ForwardCtx,
) -> Result<Representations> {
    dual_pass(tape, params, layer, input, CoAttentionMode::Parallel, settings, ctx)
}

/// Applies `layers` in sequence. Layer `j > 1` takes the previous `REP_2`
/// in the passage role and the previous `REP_1` in the option role.
pub fn stack_k<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParamSet,
    layers: &[CoAttentionLayer],
    input: CoAttentionInput<'_>,
    mode: CoAttentionMode,
    settings: CoAttentionSettings,
    ctx: &mut ForwardCtx,
) -> Result<Representations> {
    if layers.is_empty() {
        return Err(TensorError::Parameter {
            op: "stack_k",
            message: "at least one co-attention layer is required".into(),
        });
    }
    let mut current = input;
    let mut reps = None;
    for layer in layers {
        let r = dual_pass(tape, params, layer, current, mode, settings, ctx)?;
        current = CoAttentionInput {
            e_p: r.rep2,
            e_od: r.rep1,
            ..current
        };
        reps = Some(r);
    }
    Ok(reps.expect("at least one layer ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SETTINGS: CoAttentionSettings = CoAttentionSettings {
        dropout_p: 0.0,
        ln_eps: 1e-5,
    };

    fn eval_ctx() -> ForwardCtx {
        ForwardCtx::eval()
    }

    #[test]
    fn single_key_attention_returns_that_value() {
        let d = 3;
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mha = MhaParams::new(&mut params, "m", d, 1, d, d, false, &mut rng);
        for id in [mha.wq[0], mha.wk[0], mha.wv[0], mha.wo] {
            *params.get_mut(id) = Tensor::identity(d);
        }
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::randn(&[4, d], 1.0, &mut rng));
        let kv_row = vec![0.3, -1.2, 2.5];
        let kv = tape.constant(Tensor::from_rows(std::slice::from_ref(&kv_row)).unwrap());
        let out = multi_head_coattention(&mut tape, &params, &mha, q, kv, &[true], 0.0, &mut eval_ctx()).unwrap();
        for r in 0..4 {
            assert_eq!(&tape.data(out)[r * d..(r + 1) * d], kv_row.as_slice());
        }
    }

    #[test]
    fn zero_output_projection_gives_zero() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mha = MhaParams::new(&mut params, "m", 4, 2, 3, 3, false, &mut rng);
        params.zero(mha.wo);
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::randn(&[3, 4], 1.0, &mut rng));
        let kv = tape.constant(Tensor::randn(&[5, 4], 1.0, &mut rng));
        let out = multi_head_coattention(&mut tape, &params, &mha, q, kv, &[true; 5], 0.0, &mut eval_ctx()).unwrap();
        assert!(tape.data(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fully_masked_kv_is_error() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mha = MhaParams::new(&mut params, "m", 4, 2, 3, 3, false, &mut rng);
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::randn(&[3, 4], 1.0, &mut rng));
        let kv = tape.constant(Tensor::randn(&[2, 4], 1.0, &mut rng));
        let err = multi_head_coattention(&mut tape, &params, &mha, q, kv, &[false, false], 0.0, &mut eval_ctx());
        assert!(matches!(err, Err(TensorError::EmptyRow { .. })));
    }

    #[test]
    fn head_dimension_mismatch_is_shape_error() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mha = MhaParams::new(&mut params, "m", 4, 2, 3, 3, false, &mut rng);
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::randn(&[3, 5], 1.0, &mut rng));
        let kv = tape.constant(Tensor::randn(&[2, 4], 1.0, &mut rng));
        let err = multi_head_coattention(&mut tape, &params, &mha, q, kv, &[true, true], 0.0, &mut eval_ctx());
        assert!(matches!(err, Err(TensorError::Shape { .. })));
    }

    #[test]
    fn fuse_with_zero_branch_is_layer_norm() {
        let mut params = ParamSet::new();
        let site = NormSite::new(&mut params, "s", 4);
        let mut tape = Tape::new();
        let residual = tape.constant(Tensor::from_rows(&[vec![2.0; 4], vec![1.0, 2.0, 3.0, 4.0]]).unwrap());
        let zero = tape.constant(Tensor::zeros(&[2, 4]));
        let out = fuse_add_normalize(&mut tape, &params, residual, zero, site, 1e-5).unwrap();
        let y = tape.value(out);
        assert!(y.row(0).iter().all(|&v| v == 0.0));
        let mean: f64 = y.row(1).iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("stacked".parse::<CoAttentionMode>().unwrap(), CoAttentionMode::Stacked);
        assert_eq!("parallel".parse::<CoAttentionMode>().unwrap(), CoAttentionMode::Parallel);
        assert!("diagonal".parse::<CoAttentionMode>().is_err());
    }

    #[test]
    fn stack_requires_a_layer() {
        let params = ParamSet::new();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 2]));
        let input = CoAttentionInput {
            e_p: x,
            e_od: x,
            p_mask: &[true, true],
            od_mask: &[true, true],
        };
        let err = stack_k(&mut tape, &params, &[], input, CoAttentionMode::Stacked, SETTINGS, &mut eval_ctx());
        assert!(matches!(err, Err(TensorError::Parameter { op: "stack_k", .. })));
    }
}
