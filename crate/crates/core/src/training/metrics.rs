use std::fmt::Write as _;
use std::path::Path;

use super::{Result, RunRecord, TrainError};

pub const METRICS_HEADER: &str = "step,train_loss,dev_accuracy,lr,seed";

/// Learning-curve CSV. The first line is a `#` comment carrying the
/// effective configuration as compact JSON.
pub fn metrics_csv(effective_config: &serde_json::Value, records: &[&RunRecord]) -> String {
    let mut out = format!("# effective_config: {effective_config}\n{METRICS_HEADER}\n");
    for record in records {
        for p in &record.points {
            writeln!(out, "{},{},{},{},{}", p.step, p.train_loss, p.dev_accuracy, p.lr, record.seed).expect("writing to a String");
        }
    }
    out
}

pub fn write_metrics_csv(path: &Path, effective_config: &serde_json::Value, records: &[&RunRecord]) -> Result<()> {
    std::fs::write(path, metrics_csv(effective_config, records)).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::EvalPoint;

    #[test]
    fn layout() {
        let record = RunRecord {
            seed: 3,
            total_steps: 10,
            points: vec![EvalPoint {
                step: 10,
                train_loss: 0.5,
                dev_accuracy: 0.25,
                lr: 0.0,
            }],
            best_dev_accuracy: 0.25,
            best_step: 10,
            checkpoint: None,
        };
        let csv = metrics_csv(&serde_json::json!({"a": 1}), &[&record]);
        assert_eq!(csv, "# effective_config: {\"a\":1}\nstep,train_loss,dev_accuracy,lr,seed\n10,0.5,0.25,0,3\n");
    }
}
