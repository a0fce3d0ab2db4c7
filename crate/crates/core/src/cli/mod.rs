//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::coattention::CoAttentionMode;
use crate::data::instance::CONFIG_RECORD_KEY;
use crate::data::{build_vocab, dataset_stats, load_jsonl, DataError, DatasetStats, Instance};
use crate::gradcheck::{desk_suite, DEFAULT_TOLERANCE};
use crate::model::{ModelError, WnDuma};
use crate::tensor::TensorError;
use crate::training::metrics::write_metrics_csv;
use crate::training::trainer::predict_all;
use crate::training::{evaluate, majority_vote, run_seeds, Checkpoint, EncodedDataset, TrainError};
use crate::wordnet::enrich_instance;
use crate::wordnet::{resolve_dir, WordNet, WordNetError};
use config::{CliConfig, ConfigError, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "wnduma", version, about = "WordNet-enriched dual co-attention reader for multiple-choice cloze questions")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// WordNet dictionary directory (otherwise WORDNET_DIR or WNSEARCHDIR).
    #[arg(long, global = true)]
    pub wordnet_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mode: Option<CoAttentionMode>,
    /// Drop definition text from every option.
    #[arg(long, global = true)]
    pub no_definitions: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    pub max_seq_len: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics per file (defaults to the train/dev/test files).
    Stats {
        files: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Attach WordNet definitions and part-of-speech tags to every candidate.
    Enrich {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train one model per seed; writes checkpoints, curves and run records.
    Train,
    /// Accuracy of a checkpoint on a labeled file (default: the dev file).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predicted option per instance as JSONL.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Majority vote over prediction files.
    Ensemble {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of the full model on the desk configuration.
    Gradcheck {
        /// Coordinates checked per parameter tensor.
        #[arg(long, default_value_t = 4)]
        samples: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    WordNet(#[from] WordNetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

fn model_exit_code(e: &ModelError) -> i32 {
    match e {
        ModelError::Config(_) => EXIT_USAGE,
        ModelError::Data(_) | ModelError::Checkpoint { .. } | ModelError::OptionCount(_) => EXIT_DATA,
        ModelError::Tensor(TensorError::Index { .. }) => EXIT_DATA,
        ModelError::Tensor(_) => EXIT_NUMERICAL,
    }
}

fn train_exit_code(e: &TrainError) -> i32 {
    match e {
        TrainError::Model(m) => model_exit_code(m),
        TrainError::NonFinite { .. } | TrainError::NanGradient { .. } => EXIT_NUMERICAL,
        TrainError::Config(_) => EXIT_USAGE,
        TrainError::Data(_) | TrainError::Invalid(_) | TrainError::Io { .. } | TrainError::Format { .. } => EXIT_DATA,
        TrainError::SeedFailed { source, .. } => train_exit_code(source),
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(ConfigError::Invalid(_)) => EXIT_USAGE,
            CliError::Config(ConfigError::Io { .. }) => EXIT_USAGE,
            CliError::Data(_) | CliError::WordNet(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Train(e) => train_exit_code(e),
            CliError::Model(e) => model_exit_code(e),
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        data_dir: cli.data_dir.clone(),
        wordnet_dir: cli.wordnet_dir.clone(),
        mode: cli.mode,
        no_definitions: cli.no_definitions,
        seed: cli.seed,
        seeds: cli.seeds.clone(),
        max_seq_len: cli.max_seq_len,
        out: cli.out.clone(),
    }
}

/// Effective configuration: defaults, the file if given, then flags.
pub fn resolve_config(cli: &Cli) -> CliResult<CliConfig> {
    let mut config = match &cli.config {
        Some(path) => CliConfig::from_file(path)?,
        None => CliConfig::default(),
    };
    config.apply(&overrides(cli));
    config.validate()?;
    Ok(config)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let config = resolve_config(&cli)?;
    match &cli.command {
        Command::Stats { files, csv } => cmd_stats(&config, files, *csv),
        Command::Enrich { input, output } => cmd_enrich(&config, input, output),
        Command::Train => cmd_train(&config),
        Command::Eval { checkpoint, data } => cmd_eval(&config, checkpoint, data.as_deref()),
        Command::Predict { checkpoint, data, output } => cmd_predict(&config, checkpoint, data.as_deref(), output.as_deref()),
        Command::Ensemble { files, output } => cmd_ensemble(&config, files, output.as_deref()),
        Command::Gradcheck { samples } => cmd_gradcheck(&cli, *samples),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_line(out: &mut impl Write, path: &Path, value: &Value) -> CliResult<()> {
    writeln!(out, "{value}").map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn finish(mut out: BufWriter<File>, path: &Path) -> CliResult<()> {
    out.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header(config: &CliConfig, extra: Value) -> Value {
    let mut record = json!({ CONFIG_RECORD_KEY: config.effective() });
    if let (Value::Object(r), Value::Object(e)) = (&mut record, extra) {
        r.extend(e);
    }
    record
}

pub fn cmd_stats(config: &CliConfig, files: &[PathBuf], csv: bool) -> CliResult<()> {
    let files: Vec<PathBuf> = if files.is_empty() {
        [&config.data.train_file, &config.data.dev_file, &config.data.test_file]
            .iter()
            .map(|f| config.data_path(f))
            .collect()
    } else {
        files.to_vec()
    };
    if csv {
        println!("{}", DatasetStats::CSV_HEADER);
    }
    for path in &files {
        let stats = dataset_stats(&load_jsonl(path)?)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if csv {
            println!("{}", stats.csv_row(&name));
        } else {
            println!("== {} ==\n{stats}\n", path.display());
        }
    }
    Ok(())
}

pub fn cmd_enrich(config: &CliConfig, input: &Path, output: &Path) -> CliResult<()> {
    let instances = load_jsonl(input)?;
    let root = resolve_dir(config.wordnet.dir.as_deref())?;
    let wordnet = WordNet::load(&root)?;
    let mut out = create(output)?;
    write_line(&mut out, output, &header(config, json!({ "wordnet_dir": root })))?;
    let mut with_senses = 0usize;
    for inst in &instances {
        let enriched = enrich_instance(inst, &wordnet.lookup, config.wordnet.max_glosses, config.wordnet.max_definition_tokens);
        with_senses += enriched.definitions.iter().flatten().filter(|d| !d.is_empty()).count();
        write_line(&mut out, output, &enriched.to_json())?;
    }
    finish(out, output)?;
    println!(
        "enriched {} instances ({with_senses} of {} candidates have definitions) -> {}",
        instances.len(),
        instances.len() * crate::data::NUM_OPTIONS,
        output.display()
    );
    Ok(())
}

fn warn_if_unenriched(instances: &[Instance], config: &CliConfig, path: &Path) {
    if config.wordnet.enabled && instances.iter().all(|i| i.definitions.is_none()) {
        log::warn!(
            "{}: no instance carries definitions; run `enrich` first or pass --no-definitions",
            path.display()
        );
    }
}

pub fn cmd_train(config: &CliConfig) -> CliResult<()> {
    let train_path = config.data_path(&config.data.train_file);
    let dev_path = config.data_path(&config.data.dev_file);
    let train_instances = load_jsonl(&train_path)?;
    let dev_instances = load_jsonl(&dev_path)?;
    warn_if_unenriched(&train_instances, config, &train_path);
    let use_defs = config.wordnet.enabled;
    let vocab = build_vocab(&train_instances, use_defs, config.data.min_freq)?;
    let max_len = config.data.max_seq_len;
    let train_set = EncodedDataset::new(&train_instances, &vocab, max_len, use_defs)?;
    let dev_set = EncodedDataset::new(&dev_instances, &vocab, max_len, use_defs)?;
    let model_config = config.model_config(vocab.len());
    let started = Instant::now();
    let summary = run_seeds(&model_config, &config.train, &train_set, &dev_set)?;

    let out_dir = &config.output.dir;
    let effective = config.effective();
    let mut records = Vec::new();
    for outcome in &summary.outcomes {
        let mut record = outcome.record.clone();
        let path = out_dir.join(format!("checkpoint-seed{}.json", record.seed));
        record.checkpoint = Some(path.display().to_string());
        create(&path)?;
        Checkpoint::new(&model_config, &outcome.best_params, &vocab, effective.clone(), Some(record.clone())).save(&path)?;
        records.push(record);
    }
    let metrics_path = out_dir.join(&config.output.metrics_csv);
    write_metrics_csv(&metrics_path, &effective, &records.iter().collect::<Vec<_>>())?;

    let records_path = out_dir.join(&config.output.records_file);
    let mut out = create(&records_path)?;
    write_line(&mut out, &records_path, &header(config, json!({})))?;
    for record in &records {
        write_line(&mut out, &records_path, &serde_json::to_value(record).expect("record serializes"))?;
    }
    let summary_json = json!({
        "summary": {
            "seeds": config.train.seeds,
            "mean_best_dev_accuracy": summary.mean_best_dev_accuracy,
            "stddev_best_dev_accuracy": summary.stddev_best_dev_accuracy,
        }
    });
    write_line(&mut out, &records_path, &summary_json)?;
    finish(out, &records_path)?;

    for r in &records {
        println!("seed {}: best dev accuracy {:.4} at step {}", r.seed, r.best_dev_accuracy, r.best_step);
    }
    println!(
        "mean best dev accuracy {:.4} (stddev {:.4}) over {} seed(s) in {:.1}s",
        summary.mean_best_dev_accuracy,
        summary.stddev_best_dev_accuracy,
        records.len(),
        started.elapsed().as_secs_f64()
    );
    println!("metrics: {}", metrics_path.display());
    Ok(())
}

/// The pipeline settings a checkpoint was trained with.
fn checkpoint_pipeline(checkpoint: &Checkpoint) -> (usize, bool) {
    let use_defs = checkpoint.effective_config["wordnet"]["enabled"].as_bool().unwrap_or(true);
    (checkpoint.model_config.max_seq_len, use_defs)
}

fn load_for_inference(checkpoint_path: &Path, data: &Path) -> CliResult<(WnDuma, EncodedDataset)> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let model = checkpoint.model()?;
    let (max_len, use_defs) = checkpoint_pipeline(&checkpoint);
    let instances = load_jsonl(data)?;
    let dataset = EncodedDataset::new(&instances, &checkpoint.vocabulary, max_len, use_defs)?;
    Ok((model, dataset))
}

pub fn cmd_eval(config: &CliConfig, checkpoint: &Path, data: Option<&Path>) -> CliResult<()> {
    let data = data.map(Path::to_path_buf).unwrap_or_else(|| config.data_path(&config.data.dev_file));
    let (model, dataset) = load_for_inference(checkpoint, &data)?;
    let accuracy = evaluate(&model, &dataset)?;
    println!("accuracy {accuracy} ({} instances, {})", dataset.len(), data.display());
    Ok(())
}

pub fn cmd_predict(config: &CliConfig, checkpoint: &Path, data: Option<&Path>, output: Option<&Path>) -> CliResult<()> {
    let data = data.map(Path::to_path_buf).unwrap_or_else(|| config.data_path(&config.data.test_file));
    let output = output.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.join("predictions.jsonl"));
    let (model, dataset) = load_for_inference(checkpoint, &data)?;
    let predictions = predict_all(&model, &dataset)?;
    let mut out = create(&output)?;
    write_line(&mut out, &output, &header(config, json!({ "checkpoint": checkpoint, "data": data })))?;
    for (id, p) in dataset.ids.iter().zip(&predictions) {
        write_line(&mut out, &output, &json!({ "id": id, "prediction": p }))?;
    }
    finish(out, &output)?;
    println!("wrote {} predictions to {}", predictions.len(), output.display());
    Ok(())
}

/// `(id, prediction)` pairs of a prediction file, header records skipped.
pub fn read_predictions(path: &Path) -> CliResult<Vec<(String, usize)>> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| {
            CliError::Data(DataError::Invalid {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        if value.get(CONFIG_RECORD_KEY).is_some() {
            continue;
        }
        let id = match &value["id"] {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(invalid("missing id".into())),
        };
        let p = value["prediction"].as_u64().ok_or_else(|| invalid("missing prediction".into()))?;
        out.push((id, p as usize));
    }
    Ok(out)
}

pub fn cmd_ensemble(config: &CliConfig, files: &[PathBuf], output: Option<&Path>) -> CliResult<()> {
    let output = output.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.join("ensemble.jsonl"));
    let runs = files.iter().map(|f| read_predictions(f)).collect::<CliResult<Vec<_>>>()?;
    let ids: Vec<&String> = runs[0].iter().map(|(id, _)| id).collect();
    for (f, run) in files.iter().zip(&runs).skip(1) {
        if run.len() != ids.len() || run.iter().zip(&ids).any(|((a, _), b)| a != *b) {
            return Err(CliError::Data(DataError::Validation(format!(
                "{} does not list the same instances in the same order as {}",
                f.display(),
                files[0].display()
            ))));
        }
    }
    let votes: Vec<Vec<usize>> = runs.iter().map(|r| r.iter().map(|(_, p)| *p).collect()).collect();
    let combined = majority_vote(&votes)?;
    let mut out = create(&output)?;
    write_line(&mut out, &output, &header(config, json!({ "inputs": files })))?;
    for (id, p) in ids.iter().zip(&combined) {
        write_line(&mut out, &output, &json!({ "id": id, "prediction": p }))?;
    }
    finish(out, &output)?;
    println!("majority vote of {} model(s) over {} instances -> {}", files.len(), combined.len(), output.display());
    Ok(())
}

pub fn cmd_gradcheck(cli: &Cli, samples: usize) -> CliResult<()> {
    let seeds = match (&cli.seeds, cli.seed) {
        (_, Some(s)) => vec![s],
        (Some(s), None) => s.clone(),
        (None, None) => (1..=5).collect(),
    };
    let started = Instant::now();
    let reports = desk_suite(&seeds, samples)?;
    let mut failed = false;
    for (seed, report) in &reports {
        let worst = report.worst().expect("non-empty report");
        let ok = report.passes(DEFAULT_TOLERANCE);
        failed |= !ok;
        println!(
            "seed {seed}: {} coordinates, max relative error {:.3e} ({}[{}]) {}",
            report.entries.len(),
            report.max_rel_error(),
            worst.name,
            worst.index,
            if ok { "ok" } else { "FAILED" }
        );
    }
    println!("gradient check finished in {:.1}s", started.elapsed().as_secs_f64());
    if failed {
        return Err(CliError::Numerical(format!("relative error at or above {DEFAULT_TOLERANCE}")));
    }
    Ok(())
}
