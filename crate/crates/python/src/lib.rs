//! Python bindings: `import wnduma`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wnduma_core::classifier::argmax;
use wnduma_core::data::{self, DataError, Instance};
use wnduma_core::gradcheck::desk_suite;
use wnduma_core::training::{self, Checkpoint, EncodedDataset, TrainConfig, TrainError};
use wnduma_core::wordnet::{self, PosTag, WordNetError};
use wnduma_core::{ModelConfig, WnDuma};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn data_err(e: DataError) -> PyErr {
    match e {
        DataError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_error(other),
    }
}

fn train_err(e: TrainError) -> PyErr {
    match e {
        TrainError::Io { .. } => PyIOError::new_err(e.to_string()),
        TrainError::Config(_) | TrainError::Invalid(_) | TrainError::Data(_) => value_error(e),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn wordnet_err(e: WordNetError) -> PyErr {
    match e {
        WordNetError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_error(other),
    }
}

fn parse_pos(pos: &str) -> PyResult<PosTag> {
    PosTag::from_key(pos).ok_or_else(|| value_error(format!("unknown part of speech {pos:?}; use n, v, a or r")))
}

fn to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    data::tokenize(text)
}

#[pyfunction]
fn substitute_placeholder(question: &str, candidate: &str) -> PyResult<String> {
    data::substitute_placeholder(question, candidate).map_err(data_err)
}

/// Instances read from a shared-task JSONL file.
#[pyclass(module = "wnduma", skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    instances: Vec<Instance>,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            instances: data::load_jsonl(&path).map_err(data_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.instances.len()
    }

    fn ids(&self) -> Vec<String> {
        self.instances.iter().map(|i| i.id.clone()).collect()
    }

    fn labels(&self) -> Vec<Option<usize>> {
        self.instances.iter().map(|i| i.label).collect()
    }

    fn record<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let inst = self
            .instances
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("index {index} out of range")))?;
        to_py(py, &inst.to_json())
    }

    fn options(&self, index: usize) -> PyResult<Vec<String>> {
        let inst = self
            .instances
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("index {index} out of range")))?;
        inst.options().map_err(data_err)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let stats = data::dataset_stats(&self.instances).map_err(data_err)?;
        to_py(py, &serde_json::to_value(stats).expect("stats serialize"))
    }

    #[staticmethod]
    #[pyo3(signature = (n, passage_len, seed))]
    fn copy_task(n: usize, passage_len: usize, seed: u64) -> Self {
        Self {
            instances: data::synthetic::copy_task(n, passage_len, seed),
        }
    }
}

#[pyclass(module = "wnduma", skip_from_py_object)]
#[derive(Clone)]
struct Vocabulary {
    inner: data::Vocabulary,
}

#[pymethods]
impl Vocabulary {
    #[staticmethod]
    #[pyo3(signature = (dataset, use_definitions = true, min_freq = 1))]
    fn build(dataset: &Dataset, use_definitions: bool, min_freq: usize) -> PyResult<Self> {
        Ok(Self {
            inner: data::build_vocab(&dataset.instances, use_definitions, min_freq).map_err(data_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn id(&self, token: &str) -> u32 {
        self.inner.id(token)
    }

    fn token(&self, id: u32) -> Option<String> {
        self.inner.token(id).map(String::from)
    }

    fn encode(&self, tokens: Vec<String>) -> Vec<u32> {
        self.inner.encode(&tokens)
    }
}

/// A dataset converted to fixed-length per-option inputs.
#[pyclass(module = "wnduma")]
struct Encoded {
    inner: EncodedDataset,
}

#[pymethods]
impl Encoded {
    #[new]
    #[pyo3(signature = (dataset, vocabulary, max_seq_len = 150, use_definitions = true))]
    fn new(dataset: &Dataset, vocabulary: &Vocabulary, max_seq_len: usize, use_definitions: bool) -> PyResult<Self> {
        Ok(Self {
            inner: EncodedDataset::new(&dataset.instances, &vocabulary.inner, max_seq_len, use_definitions).map_err(data_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(token_ids, token_type_ids, attention_mask)` for each of the five options.
    #[allow(clippy::type_complexity)]
    fn inputs(&self, index: usize) -> PyResult<Vec<(Vec<u32>, Vec<u8>, Vec<bool>)>> {
        let xs = self
            .inner
            .inputs
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("index {index} out of range")))?;
        Ok(xs
            .iter()
            .map(|x| (x.token_ids.clone(), x.token_type_ids.clone(), x.attention_mask.clone()))
            .collect())
    }
}

#[pyclass(module = "wnduma")]
struct WordNet {
    inner: wordnet::WordNet,
}

#[pymethods]
impl WordNet {
    /// Parses the dictionary in `path`, or the one named by `WORDNET_DIR`.
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let root = wordnet::resolve_dir(path.as_deref()).map_err(wordnet_err)?;
        Ok(Self {
            inner: wordnet::WordNet::load(&root).map_err(wordnet_err)?,
        })
    }

    fn glosses(&self, lemma: &str, pos: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.lookup.glosses(lemma, parse_pos(pos)?).to_vec())
    }

    fn morphy(&self, word: &str, pos: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.lookup.morphy(word, parse_pos(pos)?))
    }

    #[pyo3(signature = (candidate, pos, max_glosses = wordnet::DEFAULT_MAX_GLOSSES, budget = wordnet::DEFAULT_DEFINITION_BUDGET))]
    fn definition(&self, candidate: &str, pos: &str, max_glosses: usize, budget: usize) -> PyResult<String> {
        Ok(wordnet::build_definition_text(candidate, parse_pos(pos)?, &self.inner.lookup, max_glosses, budget))
    }

    /// Part-of-speech key (`n`, `v`, `a`, `r`) for `candidate` at token
    /// `position` of the tokenized option.
    fn infer_pos(&self, candidate: &str, option: &str, position: usize) -> String {
        let tokens = data::tokenize(option);
        wordnet::infer_pos(candidate, &tokens, position, &self.inner.lookup).key().to_string()
    }

    #[pyo3(signature = (dataset, max_glosses = wordnet::DEFAULT_MAX_GLOSSES, budget = wordnet::DEFAULT_DEFINITION_BUDGET))]
    fn enrich(&self, dataset: &Dataset, max_glosses: usize, budget: usize) -> Dataset {
        Dataset {
            instances: dataset
                .instances
                .iter()
                .map(|i| wordnet::enrich_instance(i, &self.inner.lookup, max_glosses, budget))
                .collect(),
        }
    }
}

#[pyclass(module = "wnduma")]
struct Model {
    inner: WnDuma,
}

/// `base` with the top-level keys of the JSON object `overrides` replaced.
fn patched<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, overrides: Option<&str>) -> PyResult<T> {
    let Some(text) = overrides else { return Ok(base) };
    let mut value = serde_json::to_value(base).expect("config serializes");
    let serde_json::Value::Object(patch) = serde_json::from_str(text).map_err(value_error)? else {
        return Err(value_error("config must be a JSON object"));
    };
    for (k, v) in patch {
        value[k] = v;
    }
    serde_json::from_value(value).map_err(value_error)
}

#[pymethods]
impl Model {
    /// Desk-configuration model; `config` is a JSON object of overrides.
    #[new]
    #[pyo3(signature = (vocab_size, seed = 1, config = None))]
    fn new(vocab_size: usize, seed: u64, config: Option<&str>) -> PyResult<Self> {
        let cfg = patched(ModelConfig::desk(vocab_size), config)?;
        Ok(Self {
            inner: WnDuma::new(cfg, seed).map_err(value_error)?,
        })
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::to_value(&self.inner.config).expect("config serializes"))
    }

    fn num_parameters(&self) -> usize {
        self.inner.params.numel()
    }

    fn logits(&self, data: &Encoded, index: usize) -> PyResult<Vec<f64>> {
        let xs = data
            .inner
            .inputs
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("index {index} out of range")))?;
        self.inner.logits(xs).map_err(value_error)
    }

    fn predict(&self, data: &Encoded) -> PyResult<Vec<usize>> {
        training::trainer::predict_all(&self.inner, &data.inner).map_err(train_err)
    }

    fn evaluate(&self, data: &Encoded) -> PyResult<f64> {
        training::evaluate(&self.inner, &data.inner).map_err(train_err)
    }

    /// Trains in place and returns the run record. `config` is a JSON
    /// object of overrides on the desk training settings.
    #[pyo3(signature = (train, dev, seed = 1, config = None))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        train: &Encoded,
        dev: &Encoded,
        seed: u64,
        config: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = patched(TrainConfig::desk(), config)?;
        let outcome = training::train(&mut self.inner, &cfg, &train.inner, &dev.inner, seed).map_err(train_err)?;
        to_py(py, &serde_json::to_value(&outcome.record).expect("record serializes"))
    }

    fn save(&self, path: PathBuf, vocabulary: &Vocabulary) -> PyResult<()> {
        Checkpoint::new(&self.inner.config, &self.inner.params, &vocabulary.inner, serde_json::json!({}), None)
            .save(&path)
            .map_err(train_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(Model, Vocabulary)> {
        let ck = Checkpoint::load(&path).map_err(train_err)?;
        let model = ck.model().map_err(train_err)?;
        Ok((Model { inner: model }, Vocabulary { inner: ck.vocabulary }))
    }
}

#[pyfunction]
#[pyo3(signature = (step, total_steps, peak_lr = 1e-3, warmup_fraction = 0.1))]
fn lr_at(step: usize, total_steps: usize, peak_lr: f64, warmup_fraction: f64) -> f64 {
    let cfg = TrainConfig {
        peak_lr,
        warmup_fraction,
        ..TrainConfig::desk()
    };
    training::lr_at(step, total_steps, &cfg)
}

#[pyfunction]
fn majority_vote(predictions: Vec<Vec<usize>>) -> PyResult<Vec<usize>> {
    training::majority_vote(&predictions).map_err(train_err)
}

#[pyfunction(name = "argmax")]
fn py_argmax(logits: Vec<f64>) -> Option<usize> {
    argmax(&logits)
}

/// Largest relative error of the end-to-end gradient check per seed.
#[pyfunction]
#[pyo3(signature = (seeds, samples_per_tensor = 4))]
fn gradcheck(seeds: Vec<u64>, samples_per_tensor: usize) -> PyResult<Vec<(u64, f64)>> {
    let reports = desk_suite(&seeds, samples_per_tensor).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(reports.into_iter().map(|(s, r)| (s, r.max_rel_error())).collect())
}

#[pymodule]
fn wnduma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(substitute_placeholder, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(py_argmax, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Vocabulary>()?;
    m.add_class::<Encoded>()?;
    m.add_class::<WordNet>()?;
    m.add_class::<Model>()?;
    Ok(())
}
