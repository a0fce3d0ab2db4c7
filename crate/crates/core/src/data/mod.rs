//! Dataset loading, tokenization and per-option input assembly.

pub mod input;
pub mod instance;
pub mod stats;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use input::{assemble_input, instance_inputs, ModelInput};
pub use instance::{load_jsonl, substitute_placeholder, Instance, NUM_OPTIONS, PLACEHOLDER};
pub use stats::{dataset_stats, DatasetStats};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocabulary};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: missing key {key:?}")]
    MissingKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("{path}:{line}: {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Validation(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("sequence budget: {0}")]
    Budget(String),
    #[error("malformed input layout: {0}")]
    Layout(String),
}
