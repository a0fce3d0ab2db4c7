//! Self-describing JSON checkpoints. Tensors are stored as base64 of their
//! little-endian f64 bytes in row-major order.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Result, RunRecord, TrainError};
use crate::data::Vocabulary;
use crate::model::{ModelConfig, WnDuma};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub effective_config: serde_json::Value,
    pub model_config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub record: Option<RunRecord>,
    pub tensors: Vec<TensorRecord>,
}

pub fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl Checkpoint {
    pub fn new(
        model_config: &ModelConfig,
        params: &ParamSet,
        vocabulary: &Vocabulary,
        effective_config: serde_json::Value,
        record: Option<RunRecord>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            effective_config,
            model_config: model_config.clone(),
            vocabulary: vocabulary.clone(),
            record,
            tensors: params
                .entries()
                .iter()
                .map(|e| TensorRecord {
                    name: e.name.clone(),
                    shape: e.tensor.shape().to_vec(),
                    decay: e.decay,
                    data: encode_f64(e.tensor.data()),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let format = |message: String| TrainError::Format {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(format(format!("unsupported format_version {v} (expected {FORMAT_VERSION})"))),
            None => return Err(format("missing format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| format(e.to_string()))
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        for t in &self.tensors {
            let bad = |message: String| TrainError::Invalid(format!("tensor {}: {message}", t.name));
            let data = decode_f64(&t.data).map_err(bad)?;
            let tensor = Tensor::new(t.shape.clone(), data).map_err(|e| bad(e.to_string()))?;
            params.add(t.name.clone(), tensor, t.decay);
        }
        Ok(params)
    }

    /// Rebuilds the model with the stored parameters.
    pub fn model(&self) -> Result<WnDuma> {
        let mut model = WnDuma::new(self.model_config.clone(), 0)?;
        model.load_params(&self.params()?)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_codec_is_exact() {
        let values = [0.0, -0.0, 1.5, f64::MIN_POSITIVE, 1e300, -3.25e-7];
        let back = decode_f64(&encode_f64(&values)).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(decode_f64("AAAA").is_err());
    }
}
