use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{clip_global_norm, AdamW};
use super::schedule::lr_at;
use super::{Result, TrainConfig, TrainError};
use crate::data::{instance_inputs, DataError, Instance, ModelInput, Vocabulary};
use crate::model::{ForwardCtx, ModelConfig, WnDuma};
use crate::params::{ParamGrads, ParamSet};

/// Instances converted to per-option model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub ids: Vec<String>,
    pub inputs: Vec<Vec<ModelInput>>,
    pub labels: Vec<Option<usize>>,
}

impl EncodedDataset {
    pub fn new(
        instances: &[Instance],
        vocab: &Vocabulary,
        max_seq_len: usize,
        use_definitions: bool,
    ) -> std::result::Result<Self, DataError> {
        let inputs = instances
            .iter()
            .map(|inst| {
                instance_inputs(inst, vocab, max_seq_len, use_definitions)
                    .map_err(|e| DataError::Validation(format!("instance {}: {e}", inst.id)))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            ids: instances.iter().map(|i| i.id.clone()).collect(),
            inputs,
            labels: instances.iter().map(|i| i.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn labels_required(&self, what: &str) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(TrainError::Invalid(format!("{what} set is empty")));
        }
        self.labels
            .iter()
            .zip(&self.ids)
            .map(|(l, id)| l.ok_or_else(|| TrainError::Invalid(format!("{what} instance {id} has no label"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    /// Mean training loss over the steps since the previous evaluation.
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub total_steps: usize,
    pub points: Vec<EvalPoint>,
    pub best_dev_accuracy: f64,
    pub best_step: usize,
    /// Where the best parameters were written, if anywhere.
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    /// Parameters at the evaluation with the best dev accuracy (earliest on ties).
    pub best_params: ParamSet,
}

/// Predicted option per instance, in dataset order.
pub fn predict_all(model: &WnDuma, data: &EncodedDataset) -> Result<Vec<usize>> {
    data.inputs
        .par_iter()
        .map(|inputs| Ok(model.predict(inputs)?))
        .collect()
}

/// Fraction of instances whose argmax logit is the label. Dropout is off.
pub fn evaluate(model: &WnDuma, data: &EncodedDataset) -> Result<f64> {
    let labels = data.labels_required("evaluation")?;
    let predictions = predict_all(model, data)?;
    let correct = predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Trains `model` in place; the final parameters stay in `model`, the best
/// ones are returned alongside the curve.
pub fn train(
    model: &mut WnDuma,
    config: &TrainConfig,
    train_set: &EncodedDataset,
    dev_set: &EncodedDataset,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let labels = train_set.labels_required("training")?;
    dev_set.labels_required("dev")?;
    model.config.dropout_p = config.dropout_p;

    let n = train_set.len();
    let total = config.total_steps(n);
    let mut optimizer = AdamW::from_config(&model.params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut points = Vec::new();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let (mut window_loss, mut window_steps) = (0.0, 0usize);

    for step in 0..total {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = &order[cursor..(cursor + config.batch_size).min(n)];
        cursor += batch.len();
        let jobs: Vec<(usize, u64)> = batch.iter().map(|&i| (i, rng.random())).collect();

        let outputs = jobs
            .par_iter()
            .map(|&(i, dropout_seed)| {
                let mut ctx = ForwardCtx::train(dropout_seed);
                model.instance_loss(&train_set.inputs[i], labels[i], &mut ctx)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;

        let mut grads = ParamGrads::zeros_like(&model.params);
        let mut loss = 0.0;
        for out in &outputs {
            loss += out.loss;
            grads.add_assign(&out.grads);
        }
        let scale = 1.0 / outputs.len() as f64;
        loss *= scale;
        grads.scale(scale);
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { step: step + 1, what: "loss" });
        }
        if !grads.is_finite() {
            return Err(TrainError::NonFinite {
                step: step + 1,
                what: "gradient",
            });
        }
        clip_global_norm(&mut grads, config.grad_clip_norm);
        let lr = lr_at(step, total, config);
        optimizer.step(&mut model.params, &grads, lr)?;
        window_loss += loss;
        window_steps += 1;

        let done = step + 1;
        if done % config.eval_every_steps == 0 || done == total {
            let dev_accuracy = evaluate(model, dev_set)?;
            let train_loss = window_loss / window_steps as f64;
            log::info!("seed {seed} step {done}/{total}: train_loss {train_loss:.4} dev_accuracy {dev_accuracy:.4}");
            points.push(EvalPoint {
                step: done,
                train_loss,
                dev_accuracy,
                lr,
            });
            if best.as_ref().is_none_or(|(acc, _, _)| dev_accuracy > *acc) {
                best = Some((dev_accuracy, done, model.params.clone()));
            }
            window_loss = 0.0;
            window_steps = 0;
        }
    }

    let (best_dev_accuracy, best_step, best_params) = best.expect("the final step always evaluates");
    Ok(TrainOutcome {
        record: RunRecord {
            seed,
            total_steps: total,
            points,
            best_dev_accuracy,
            best_step,
            checkpoint: None,
        },
        best_params,
    })
}

#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub outcomes: Vec<TrainOutcome>,
    pub mean_best_dev_accuracy: f64,
    /// Sample standard deviation (0 for a single seed).
    pub stddev_best_dev_accuracy: f64,
}

impl SeedSummary {
    pub fn records(&self) -> Vec<&RunRecord> {
        self.outcomes.iter().map(|o| &o.record).collect()
    }
}

pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One independent run per seed (model initialization and data order both
/// follow the seed), run concurrently.
pub fn run_seeds(
    model_config: &ModelConfig,
    config: &TrainConfig,
    train_set: &EncodedDataset,
    dev_set: &EncodedDataset,
) -> Result<SeedSummary> {
    config.validate()?;
    let results: Vec<Result<TrainOutcome>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut model = WnDuma::new(model_config.clone(), seed)?;
            train(&mut model, config, train_set, dev_set, seed)
        })
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failure = None;
    for (seed, r) in config.seeds.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) if failure.is_none() => failure = Some((*seed, e)),
            Err(e) => log::error!("seed {seed} also failed: {e}"),
        }
    }
    if let Some((seed, source)) = failure {
        return Err(TrainError::SeedFailed {
            seed,
            partial: outcomes.into_iter().map(|o| o.record).collect(),
            source: Box::new(source),
        });
    }
    let best: Vec<f64> = outcomes.iter().map(|o| o.record.best_dev_accuracy).collect();
    let (mean, stddev) = mean_and_stddev(&best);
    Ok(SeedSummary {
        outcomes,
        mean_best_dev_accuracy: mean,
        stddev_best_dev_accuracy: stddev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stddev_singleton_and_pair() {
        assert_eq!(mean_and_stddev(&[0.4]), (0.4, 0.0));
        let (m, s) = mean_and_stddev(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
