use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wnduma_core::data::synthetic::copy_task;
use wnduma_core::data::Instance;

const BIN: &str = env!("CARGO_BIN_EXE_wnduma");

const CONFIG: &str = "\
[data]
max_seq_len = 24

[model]
d_model = 16
n_blocks = 1
n_heads_enc = 2
d_ff = 32
heads = 2
d_q = 8
d_k = 8
d_v = 8

[train]
max_steps = 8
batch_size = 4
eval_every_steps = 4
peak_lr = 0.003
";

fn fixture_wordnet() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wordnet")
}

fn wnduma(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("WORDNET_DIR")
        .env_remove("WNSEARCHDIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_jsonl(path: &Path, instances: &[Instance]) {
    let text: String = instances.iter().map(|i| format!("{}\n", i.to_json())).collect();
    std::fs::write(path, text).unwrap();
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    write_jsonl(&dir.path().join("data/train.jsonl"), &copy_task(16, 8, 1));
    write_jsonl(&dir.path().join("data/dev.jsonl"), &copy_task(8, 8, 2));
    let mut test = copy_task(8, 8, 3);
    test.iter_mut().for_each(|i| i.label = None);
    write_jsonl(&dir.path().join("data/test.jsonl"), &test);
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn stats_on_one_line_file() {
    let dir = workspace();
    write_jsonl(&dir.path().join("one.jsonl"), &copy_task(1, 5, 9));
    let o = wnduma(dir.path(), &["stats", "--csv", "one.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    assert!(row.starts_with("one,1,"), "{out}");
}

#[test]
fn exit_codes() {
    let dir = workspace();
    assert_eq!(wnduma(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(wnduma(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(wnduma(dir.path(), &["--mode", "sideways", "train"]).status.code(), Some(1));
    let o = wnduma(dir.path(), &["stats", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.jsonl"));
    let o = wnduma(dir.path(), &["enrich", "data/dev.jsonl", "-o", "x.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "no WordNet directory: {}", stderr(&o));
}

#[test]
fn config_errors_listed_together() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.toml"), "[model]\nd_modle = 3\n[train]\nbatchsize = 2\n[extras]\n").unwrap();
    let o = wnduma(dir.path(), &["--config", "bad.toml", "train"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for needle in ["model.d_modle", "train.batchsize", "[extras]"] {
        assert!(err.contains(needle), "{needle} missing from: {err}");
    }
    std::fs::write(dir.path().join("sem.toml"), "[model]\nd_q = 3\n[train]\nwarmup_fraction = 1.5\n").unwrap();
    let o = wnduma(dir.path(), &["--config", "sem.toml", "train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("d_q") && stderr(&o).contains("warmup_fraction"), "{}", stderr(&o));
}

#[test]
fn enrich_is_deterministic() {
    let dir = workspace();
    let inst = Instance {
        id: "b".into(),
        passage: "Money was kept at the bank near the river.".into(),
        question: "She went to the @placeholder .".into(),
        candidates: ["bank", "mice", "run", "zorvex", "happy"].map(String::from).to_vec(),
        label: Some(0),
        definitions: None,
        pos: None,
    };
    write_jsonl(&dir.path().join("raw.jsonl"), &[inst]);
    let wn = fixture_wordnet();
    let mut outputs = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let o = wnduma(dir.path(), &["--wordnet-dir", wn.to_str().unwrap(), "enrich", "raw.jsonl", "-o", name]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let record: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert!(record["definitions"][0].as_str().unwrap().starts_with("sloping land"));
    assert!(!record["definitions"][1].as_str().unwrap().is_empty(), "mice resolves through the exception list");
    assert_eq!(record["definitions"][3], "");
}

#[test]
fn train_eval_predict_ensemble() {
    let dir = workspace();
    let d = dir.path();
    let o = wnduma(d, &["--config", "run.toml", "--no-definitions", "--seeds", "1,2", "--out", "runs", "train"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(d.join("runs/metrics.csv")).unwrap();
    assert!(metrics.starts_with("# effective_config: {"));
    assert_eq!(metrics.lines().count(), 2 + 2 * 2);
    let records = std::fs::read_to_string(d.join("runs/runs.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = records.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["effective_config"]["wordnet"]["enabled"], false);
    assert!(lines[3]["summary"]["mean_best_dev_accuracy"].is_number());

    let best = lines[1]["best_dev_accuracy"].as_f64().unwrap();
    let o = wnduma(d, &["eval", "--checkpoint", "runs/checkpoint-seed1.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with(&format!("accuracy {best} ")), "{} vs {best}", stdout(&o));

    for seed in ["1", "2"] {
        let o = wnduma(
            d,
            &["predict", "--checkpoint", &format!("runs/checkpoint-seed{seed}.json"), "-o", &format!("p{seed}.jsonl")],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = wnduma(d, &["ensemble", "p1.jsonl", "-o", "solo.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = |f: &str| -> Vec<String> {
        std::fs::read_to_string(d.join(f)).unwrap().lines().skip(1).map(String::from).collect()
    };
    assert_eq!(body("solo.jsonl"), body("p1.jsonl"));
    assert_eq!(body("p1.jsonl").len(), 8);

    let o = wnduma(d, &["ensemble", "p1.jsonl", "p2.jsonl", "p1.jsonl", "-o", "vote.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(body("vote.jsonl"), body("p1.jsonl"));

    let short: Vec<String> = body("p2.jsonl").into_iter().skip(1).collect();
    std::fs::write(d.join("short.jsonl"), short.join("\n")).unwrap();
    let o = wnduma(d, &["ensemble", "p1.jsonl", "short.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_single_seed() {
    let dir = workspace();
    let o = wnduma(dir.path(), &["--seed", "2", "gradcheck", "--samples", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("seed 2:") && stdout(&o).contains(" ok"), "{}", stdout(&o));
}
