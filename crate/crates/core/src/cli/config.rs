//! Layered run configuration: defaults, then a TOML file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coattention::CoAttentionMode;
use crate::model::ModelConfig;
use crate::training::TrainConfig;
use crate::wordnet::{DEFAULT_DEFINITION_BUDGET, DEFAULT_MAX_GLOSSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub dir: PathBuf,
    pub train_file: String,
    pub dev_file: String,
    pub test_file: String,
    pub max_seq_len: usize,
    pub min_freq: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            train_file: "train.jsonl".into(),
            dev_file: "dev.jsonl".into(),
            test_file: "test.jsonl".into(),
            max_seq_len: 150,
            min_freq: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordNetSection {
    /// Falls back to the WordNet environment variables when unset.
    pub dir: Option<PathBuf>,
    pub max_glosses: usize,
    /// Token budget of one candidate's definition text.
    pub max_definition_tokens: usize,
    /// Whether definition text is appended to each option.
    pub enabled: bool,
}

impl Default for WordNetSection {
    fn default() -> Self {
        Self {
            dir: None,
            max_glosses: DEFAULT_MAX_GLOSSES,
            max_definition_tokens: DEFAULT_DEFINITION_BUDGET,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads_enc: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub d_q: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub k: usize,
    pub mode: CoAttentionMode,
    pub shared_params: bool,
    pub include_sep: bool,
    pub score_bias: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::desk(4);
        Self {
            d_model: m.d_model,
            n_blocks: m.n_blocks,
            n_heads_enc: m.n_heads_enc,
            d_ff: m.d_ff,
            heads: m.heads,
            d_q: m.d_q,
            d_k: m.d_k,
            d_v: m.d_v,
            k: m.k,
            mode: m.mode,
            shared_params: m.shared_params,
            include_sep: m.include_sep,
            score_bias: m.score_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub metrics_csv: String,
    pub records_file: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            metrics_csv: "metrics.csv".into(),
            records_file: "runs.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub data: DataSection,
    pub wordnet: WordNetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub output: OutputSection,
}

/// Flag values that override the file. `None` leaves the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub wordnet_dir: Option<PathBuf>,
    pub mode: Option<CoAttentionMode>,
    pub no_definitions: bool,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub max_seq_len: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

const SECTIONS: [&str; 5] = ["data", "wordnet", "model", "train", "output"];

fn section<T: DeserializeOwned + Default>(table: &toml::Table, name: &str, problems: &mut Vec<String>) -> T {
    match table.get(name) {
        None => T::default(),
        Some(value) => value.clone().try_into().unwrap_or_else(|e: toml::de::Error| {
            problems.push(format!("[{name}] {}", e.message()));
            T::default()
        }),
    }
}

/// Known keys per section, taken from the serialized defaults.
fn known_keys() -> BTreeMap<String, Vec<String>> {
    let defaults = serde_json::to_value(CliConfig::default()).expect("defaults serialize");
    SECTIONS
        .iter()
        .map(|s| {
            let keys = defaults[s].as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
            (s.to_string(), keys)
        })
        .collect()
}

impl CliConfig {
    /// Parses TOML text, reporting every unknown or mistyped key at once.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(vec![e.to_string().trim().to_string()]))?;
        let known = known_keys();
        let mut problems = Vec::new();
        for (name, value) in &table {
            let Some(keys) = known.get(name) else {
                problems.push(format!("unknown section [{name}]"));
                continue;
            };
            let Some(entries) = value.as_table() else {
                problems.push(format!("[{name}] must be a table"));
                continue;
            };
            for key in entries.keys().filter(|k| !keys.contains(k)) {
                problems.push(format!("unknown key {name}.{key}"));
            }
        }
        if !problems.is_empty() {
            return Err(ConfigError::Invalid(problems));
        }
        let config = Self {
            data: section(&table, "data", &mut problems),
            wordnet: section(&table, "wordnet", &mut problems),
            model: section(&table, "model", &mut problems),
            train: section(&table, "train", &mut problems),
            output: section(&table, "output", &mut problems),
        };
        if !problems.is_empty() {
            return Err(ConfigError::Invalid(problems));
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Invalid(p) => ConfigError::Invalid(p.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.data_dir {
            self.data.dir = d.clone();
        }
        if let Some(d) = &o.wordnet_dir {
            self.wordnet.dir = Some(d.clone());
        }
        if let Some(m) = o.mode {
            self.model.mode = m;
        }
        if o.no_definitions {
            self.wordnet.enabled = false;
        }
        if let Some(s) = &o.seeds {
            self.train.seeds = s.clone();
        }
        if let Some(s) = o.seed {
            self.train.seeds = vec![s];
        }
        if let Some(l) = o.max_seq_len {
            self.data.max_seq_len = l;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            vocab_size,
            max_seq_len: self.data.max_seq_len,
            d_model: m.d_model,
            n_blocks: m.n_blocks,
            n_heads_enc: m.n_heads_enc,
            d_ff: m.d_ff,
            heads: m.heads,
            d_q: m.d_q,
            d_k: m.d_k,
            d_v: m.d_v,
            k: m.k,
            mode: m.mode,
            shared_params: m.shared_params,
            include_sep: m.include_sep,
            score_bias: m.score_bias,
            dropout_p: self.train.dropout_p,
            ln_eps: ModelConfig::desk(vocab_size).ln_eps,
        }
    }

    /// Every semantic problem across all sections.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.model_config(4).problems().into_iter().map(|p| format!("model: {p}")).collect();
        out.extend(self.train.problems().into_iter().map(|p| format!("train: {p}")));
        if self.data.min_freq == 0 {
            out.push("data: min_freq must be at least 1".into());
        }
        if self.wordnet.max_glosses == 0 {
            out.push("wordnet: max_glosses must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn effective(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn data_path(&self, file: &str) -> PathBuf {
        self.data.dir.join(file)
    }
}
