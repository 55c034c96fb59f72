use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use mag::graph::molecule::{molecule, Bond};
use mag::graph::{load_graph_file, save_graph_file};
use serde_json::{json, Map};

const TINY: &str = r#"
[paths]
data_dir = "data"
run_dir = "run"
[dataset]
count = 5
[tokenizer]
codebook_size = 32
[tokenizer.encoder]
mpnn_layers = 2
hidden_dim = 8
latent_dim = 4
[tokenizer.decoder]
gcn_layers = 2
hidden_dim = 8
edge_mlp_hidden = [8]
[tokenizer_training]
epochs = 4
reseed_dead_codes = false
[tokenizer_training.optimizer]
lr = 0.001
weight_decay = 0.0
[transformer]
blocks = 1
hidden = 16
heads = 2
level_embedding_dim = 16
vocab = 32
[transformer_training]
epochs = 2
[transformer_training.optimizer]
lr = 0.001
"#;

fn mag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mag"))
        .args(args)
        .current_dir(dir)
        .env_remove("MAG_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = mag(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn with_epochs(tokenizer: usize, transformer: usize) -> String {
    TINY.replacen("epochs = 4", &format!("epochs = {tokenizer}"), 1)
        .replacen("epochs = 2", &format!("epochs = {transformer}"), 1)
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Log rows without the wall-clock column.
fn log_values(p: impl AsRef<Path>) -> Vec<String> {
    read(p)
        .lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn community_dataset_file() {
    let dir = workspace("");
    ok(dir.path(), &["dataset", "community-small", "--seed", "1", "--out", "a.jsonl"]);
    ok(dir.path(), &["dataset", "community-small", "--seed", "1", "--out", "b.jsonl"]);
    let a = read(dir.path().join("a.jsonl"));
    assert_eq!(a.lines().count(), 100);
    assert_eq!(a, read(dir.path().join("b.jsonl")));
    let graphs = load_graph_file(dir.path().join("a.jsonl")).unwrap();
    assert!(graphs.iter().all(|(g, _)| (12..=20).contains(&g.n())));
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = workspace("");
    let o = Command::new(env!("CARGO_BIN_EXE_mag"))
        .args(["dataset", "community-small"])
        .current_dir(dir.path())
        .env("MAG_DATA_DIR", "elsewhere")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("elsewhere/train.jsonl").exists());
}

#[test]
fn exit_codes() {
    let dir = workspace("bogus = 1\n");
    assert_eq!(mag(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(mag(dir.path(), &["bench", "--max-n", "x"]).status.code(), Some(1));
    assert_eq!(mag(dir.path(), &["--config", "run.toml", "bench"]).status.code(), Some(2));
    assert_eq!(mag(dir.path(), &["train", "transformer"]).status.code(), Some(2));
    assert_eq!(mag(dir.path(), &["generate", "--count", "1"]).status.code(), Some(2));
    assert_eq!(mag(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn tokenizer_smoke_run_loss_falls() {
    let dir = workspace(&with_epochs(50, 1));
    ok(dir.path(), &["--config", "run.toml", "dataset", "community-small"]);
    ok(dir.path(), &["--config", "run.toml", "train", "tokenizer"]);
    let losses: Vec<f64> = read(dir.path().join("run/tokenizer_log.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 50);
    let smoothed: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for w in smoothed.windows(2) {
        assert!(w[1] <= w[0], "{smoothed:?}");
    }
}

#[test]
fn training_is_deterministic_and_resumable() {
    let full = workspace(TINY);
    ok(full.path(), &["--config", "run.toml", "dataset", "community-small"]);
    ok(full.path(), &["--config", "run.toml", "train", "tokenizer"]);
    ok(full.path(), &["--config", "run.toml", "train", "transformer"]);

    let again = workspace(TINY);
    ok(again.path(), &["--config", "run.toml", "dataset", "community-small"]);
    ok(again.path(), &["--config", "run.toml", "train", "tokenizer"]);
    assert_eq!(
        log_values(full.path().join("run/tokenizer_log.csv")),
        log_values(again.path().join("run/tokenizer_log.csv"))
    );

    let split = workspace(&with_epochs(2, 1));
    ok(split.path(), &["--config", "run.toml", "dataset", "community-small"]);
    ok(split.path(), &["--config", "run.toml", "train", "tokenizer"]);
    std::fs::write(split.path().join("run.toml"), TINY).unwrap();
    ok(split.path(), &["--config", "run.toml", "train", "tokenizer", "--resume"]);
    ok(split.path(), &["--config", "run.toml", "train", "transformer"]);
    std::fs::write(split.path().join("run.toml"), with_epochs(4, 1)).unwrap();
    ok(split.path(), &["--config", "run.toml", "train", "transformer"]);
    std::fs::write(split.path().join("run.toml"), TINY).unwrap();
    ok(split.path(), &["--config", "run.toml", "train", "transformer", "--resume"]);

    for stage in ["tokenizer", "transformer"] {
        let log = format!("run/{stage}_log.csv");
        assert_eq!(log_values(full.path().join(&log)), log_values(split.path().join(&log)), "{stage}");
        let ck = format!("run/{stage}.ckpt");
        assert_eq!(read(full.path().join(&ck)), read(split.path().join(&ck)), "{stage}");
    }
    let ck = mag::numerics::Checkpoint::<f64>::load(split.path().join("run/tokenizer.ckpt")).unwrap();
    assert_eq!(ck.meta("epoch").unwrap(), "4");
    // 4 training graphs in one batch per epoch
    assert_eq!(ck.meta("optimizer_step").unwrap(), "4");
}

fn trained(config: &str) -> tempfile::TempDir {
    let dir = workspace(config);
    ok(dir.path(), &["--config", "run.toml", "dataset", "community-small"]);
    ok(dir.path(), &["--config", "run.toml", "train", "tokenizer"]);
    ok(dir.path(), &["--config", "run.toml", "train", "transformer"]);
    dir
}

fn meta_without_time(line: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
    let t = v["meta"].as_object_mut().unwrap().remove("wall_seconds").unwrap();
    assert!(t.as_f64().unwrap() > 0.0);
    v
}

#[test]
fn generation_count_and_determinism() {
    let dir = trained(TINY);
    let args = |out: &'static str| ["--config", "run.toml", "--seed", "3", "generate", "--count", "50", "--out", out];
    ok(dir.path(), &args("a.jsonl"));
    ok(dir.path(), &args("b.jsonl"));
    let (a, b) = (read(dir.path().join("a.jsonl")), read(dir.path().join("b.jsonl")));
    assert_eq!(a.lines().count(), 51);
    let (ma, mb) = (meta_without_time(a.lines().next().unwrap()), meta_without_time(b.lines().next().unwrap()));
    assert_eq!(ma, mb);
    assert_eq!(ma["meta"]["seed"], json!(3));
    assert_eq!(ma["meta"]["top_k"], json!(50));
    assert!(a.lines().skip(1).eq(b.lines().skip(1)));
    let graphs = load_graph_file(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(graphs.len(), 50);
}

#[test]
fn generation_time_matches_stopwatch() {
    let heavy = TINY
        .replace("blocks = 1", "blocks = 4")
        .replace("hidden = 16\nheads", "hidden = 128\nheads")
        .replace("level_embedding_dim = 16", "level_embedding_dim = 128");
    let dir = trained(&heavy.replacen("epochs = 4", "epochs = 1", 1));
    let start = Instant::now();
    ok(dir.path(), &["--config", "run.toml", "generate", "--count", "200", "--out", "g.jsonl"]);
    let measured = start.elapsed().as_secs_f64();
    let text = read(dir.path().join("g.jsonl"));
    let meta: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let reported = meta["meta"]["wall_seconds"].as_f64().unwrap();
    assert!(measured > 0.2, "generation too quick to time: {measured}");
    assert!((reported - measured).abs() <= 0.05 * measured, "{reported} vs {measured}");
}

fn report(out: &Output) -> Vec<(String, String)> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

#[test]
fn evaluate_identical_sets() {
    let dir = workspace("");
    ok(dir.path(), &["dataset", "community-small", "--out", "x.jsonl"]);
    let out = ok(dir.path(), &["evaluate", "x.jsonl", "x.jsonl", "--stats-csv", "stats.csv"]);
    let r = report(&out);
    for key in ["degree_mmd", "clustering_mmd", "orbit_mmd"] {
        let v: f64 = r.iter().find(|(k, _)| k == key).unwrap().1.parse().unwrap();
        assert_eq!(v, 0.0, "{key}");
    }
    assert!(!r.iter().any(|(k, _)| k == "validity"));
    assert_eq!(read(dir.path().join("stats.csv")).lines().count(), 201);
}

fn molecule_file(path: PathBuf) {
    let mut meta = Map::new();
    meta.insert("kind".into(), json!("molecule"));
    let graphs = vec![
        (molecule(&["C", "O"], &[(0, 1, Bond::Double)]).unwrap(), 0),
        (molecule(&["C", "C", "N"], &[(0, 1, Bond::Single), (1, 2, Bond::Triple)]).unwrap(), 0),
    ];
    save_graph_file(path, Some(&meta), &graphs).unwrap();
}

#[test]
fn evaluate_molecules_adds_chemistry_keys() {
    let dir = workspace("");
    molecule_file(dir.path().join("m.jsonl"));
    let out = ok(dir.path(), &["evaluate", "m.jsonl", "m.jsonl"]);
    let r = report(&out);
    let get = |key: &str| r.iter().find(|(k, _)| k == key).unwrap().1.clone();
    assert_eq!(get("validity"), "100");
    assert_eq!(get("uniqueness"), "100");
    assert_eq!(get("novelty"), "0");
    ok(dir.path(), &["dataset", "community-small", "--out", "x.jsonl"]);
    assert_eq!(mag(dir.path(), &["evaluate", "m.jsonl", "x.jsonl"]).status.code(), Some(2));
}

#[test]
fn bench_csv_matches_closed_form() {
    let dir = workspace("");
    ok(dir.path(), &["bench", "--max-n", "256", "--out", "bench.csv"]);
    let text = read(dir.path().join("bench.csv"));
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<u128> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let n = f[0];
        assert_eq!(f[2], n * (n + 1) * (2 * n + 1) / 6);
        rows += 1;
    }
    assert_eq!(rows, 256);
}
