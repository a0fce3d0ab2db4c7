//! Central finite-difference checks against tape gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{build_vocab, instance_inputs, synthetic, ModelInput};
use crate::model::{ForwardCtx, ModelConfig, ModelError, WnDuma};
use crate::tensor::{Result, Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Magnitude below which gradients are compared on an absolute scale.
///
/// Central differences at step `1e-5` carry roughly `1e-10` of rounding and
/// truncation noise, so relative error is only meaningful above this floor.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// `(f(x+h) - f(x-h)) / 2h` for the coordinate exposed by `slot`.
///
/// The coordinate is restored bit-exactly afterwards.
pub fn central_difference<T: ?Sized>(
    state: &mut T,
    step: f64,
    slot: impl Fn(&mut T) -> &mut f64,
    eval: impl Fn(&T) -> f64,
) -> f64 {
    let original = *slot(state);
    *slot(state) = original + step;
    let plus = eval(state);
    *slot(state) = original - step;
    let minus = eval(state);
    *slot(state) = original;
    (plus - minus) / (2.0 * step)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn push(&mut self, name: impl Into<String>, index: usize, analytic: f64, numeric: f64) {
        self.entries.push(GradCheckEntry {
            name: name.into(),
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.rel_error < tolerance)
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.entries.extend(other.entries);
    }
}

/// Checks every element of every input of a scalar-valued tape function.
pub fn check_function<F>(inputs: &[Tensor], build: F, step: f64) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut state = inputs.to_vec();
    let mut report = GradCheckReport::default();
    for (t, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(Tensor::into_data)
            .unwrap_or_else(|| vec![0.0; inputs[t].numel()]);
        for (i, a) in analytic.iter().enumerate() {
            let numeric = central_difference(
                &mut state,
                step,
                |s| &mut s[t].data_mut()[i],
                |s| eval(s).expect("perturbed evaluation succeeds"),
            );
            report.push(format!("input{t}"), i, *a, numeric);
        }
    }
    Ok(report)
}

/// Compares the analytic gradient of one instance's loss (eval mode) with
/// central differences on sampled coordinates of every parameter tensor.
///
/// Per tensor, up to `samples_per_tensor` coordinates with a nonzero
/// analytic gradient are drawn, plus one coordinate drawn uniformly.
pub fn check_model(
    model: &WnDuma,
    inputs: &[ModelInput],
    label: usize,
    samples_per_tensor: usize,
    seed: u64,
    step: f64,
) -> std::result::Result<GradCheckReport, ModelError> {
    let analytic = model.instance_loss(inputs, label, &mut ForwardCtx::eval())?.grads;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = model.clone();
    let mut report = GradCheckReport::default();
    for id in model.params.ids() {
        let g = analytic.get(id);
        let mut active: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        active.shuffle(&mut rng);
        active.truncate(samples_per_tensor);
        active.push(rng.random_range(0..g.len()));
        for i in active {
            let numeric = central_difference(
                &mut state,
                step,
                |m| &mut m.params.get_mut(id).data_mut()[i],
                |m| m.loss(inputs, label).expect("perturbed forward succeeds"),
            );
            report.push(model.params.name(id), i, g[i], numeric);
        }
    }
    Ok(report)
}

/// The desk configuration at sequence length 32, as used by the
/// end-to-end gradient check.
pub fn desk_check_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        max_seq_len: 32,
        ..ModelConfig::desk(vocab_size)
    }
}

/// End-to-end check on a freshly initialized desk model and a random
/// synthetic instance per seed.
pub fn desk_suite(seeds: &[u64], samples_per_tensor: usize) -> std::result::Result<Vec<(u64, GradCheckReport)>, ModelError> {
    seeds
        .iter()
        .map(|&seed| {
            let instances = synthetic::random_instances_shaped(1, seed, &synthetic::Shape::compact());
            let vocab = build_vocab(&instances, true, 1)?;
            let inputs = instance_inputs(&instances[0], &vocab, 32, true)?;
            let model = WnDuma::new(desk_check_config(vocab.len()), seed)?;
            let label = instances[0].label.unwrap_or(0);
            Ok((seed, check_model(&model, &inputs, label, samples_per_tensor, seed, DEFAULT_STEP)?))
        })
        .collect()
}
