use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use masked_shapelets::dataset::{load_dataset, save_dataset};
use masked_shapelets::model::{load_model, save_model, Params};
use masked_shapelets::trainer::init_model;
use masked_shapelets::{Activation, Instance, ShapeletModel, TimeSeriesDataset};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mshapelets"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn mini(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Small synthetic split: 3 channels of length 40, patterns of length 8.
fn small_synth(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let train = dir.join(format!("train-{seed}.jsonl"));
    let test = dir.join(format!("test-{seed}.jsonl"));
    let seed = seed.to_string();
    let out = run(&[
        "synth", "--out-train", p(&train), "--out-test", p(&test), "--seed", &seed,
        "--train-size", "12", "--test-size", "6", "--channels", "3", "--length", "40",
        "--pattern-length", "8",
    ]);
    assert!(out.status.success(), "{out:?}");
    (train, test)
}

#[test]
fn synth_flag_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "synth", "--out-train", p(&dir.path().join("a")), "--out-test", p(&dir.path().join("b")),
        "--train-size", "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
}

#[test]
fn synth_is_reproducible_and_writes_manifest() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (ta, sa) = small_synth(a.path(), 7);
    let (tb, sb) = small_synth(b.path(), 7);
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());
    assert_eq!(fs::read(&sa).unwrap(), fs::read(&sb).unwrap());

    let ds = load_dataset(&ta).unwrap();
    assert_eq!((ds.len(), ds.num_channels(), ds.min_length()), (12, 3, 40));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("train-7.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["config"]["num_channels"], 3);

    let (other, _) = small_synth(b.path(), 8);
    assert_ne!(fs::read(&ta).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn zero_iterations_returns_the_initialization() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_synth(dir.path(), 1);
    let model = dir.path().join("m.json");
    let log = dir.path().join("log.csv");
    let out = run(&[
        "train", "--data", p(&train), "--out-model", p(&model), "--log", p(&log), "-K", "3", "--lmin", "4",
        "--lmax", "6", "--iters", "0", "--seed", "5",
    ]);
    assert!(out.status.success(), "{out:?}");
    let trained = load_model(&model).unwrap();
    let cfg = trained.training.clone().expect("config recorded");
    let fresh = init_model(&cfg, &load_dataset(&train).unwrap()).unwrap();
    assert_eq!(trained.params, fresh.params);
    assert_eq!(fs::read_to_string(&log).unwrap(), "iter,objective,train_error,seconds\n");
}

#[test]
fn train_writes_log_snapshots_and_unmasked_flag() {
    let dir = TempDir::new().unwrap();
    let (train, test) = small_synth(dir.path(), 2);
    let model = dir.path().join("m.json");
    let log = dir.path().join("log.csv");
    let snaps = dir.path().join("snaps.csv");
    let out = run(&[
        "train", "--data", p(&train), "--out-model", p(&model), "--log", p(&log), "-K", "3", "--lmin", "4",
        "--lmax", "6", "--iters", "4", "--mask-snapshots", "2", "--snapshot-out", p(&snaps), "--no-masks",
    ]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).starts_with("train_error="));

    let m = load_model(&model).unwrap();
    assert!(m.masks_frozen);
    assert!(m.activated_masks().iter().flatten().all(|&w| w == 1.0));

    let rows: Vec<String> = fs::read_to_string(&log).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("1,"));

    let snap = fs::read_to_string(&snaps).unwrap();
    let lines: Vec<&str> = snap.lines().collect();
    assert_eq!(lines[0], "iter,shapelet,ch1,ch2,ch3");
    // iterations 0, 2 and 4, three shapelets each
    assert_eq!(lines.len(), 1 + 3 * 3);

    let eval = run(&["eval", "--model", p(&model), "--data", p(&test)]);
    assert!(eval.status.success());
    assert!(stdout(&eval).starts_with("error_rate="));
}

#[test]
fn perfect_model_reports_zero_error() {
    let dir = TempDir::new().unwrap();
    let instances = vec![
        Instance::new("hi", 0, vec![vec![0.0, 5.0, 5.0, 0.0]]).unwrap(),
        Instance::new("lo", 1, vec![vec![0.0, 0.0, 0.0, 0.0]]).unwrap(),
    ];
    let ds = TimeSeriesDataset::from_parts(instances, vec!["high".into(), "low".into()]).unwrap();
    // distance to [5, 5] is 0 for "hi" and 25 for "lo"
    let model = ShapeletModel {
        params: Params {
            shapelets: vec![vec![vec![5.0, 5.0]]],
            masks: vec![vec![1.0]],
            weights: vec![vec![-1.0, 1.0]],
            bias: vec![10.0, -10.0],
        },
        activation: Activation::Relu,
        masks_frozen: false,
        class_labels: ds.class_labels().to_vec(),
        training: None,
    };
    let data = dir.path().join("d.jsonl");
    let path = dir.path().join("m.json");
    let report = dir.path().join("r.json");
    save_dataset(&ds, &data).unwrap();
    save_model(&model, &path).unwrap();
    let out = run(&["eval", "--model", p(&path), "--data", p(&data), "--report", p(&report)]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "error_rate=0.000");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["error_rate"], 0.0);
    assert_eq!(r["method"], "masked");
}

#[test]
fn nn_dtw_eval_prints_finite_error() {
    let dir = TempDir::new().unwrap();
    let (train, test) = small_synth(dir.path(), 3);
    let out = run(&["eval", "--nn-dtw", "--train-data", p(&train), "--data", p(&test)]);
    assert!(out.status.success(), "{out:?}");
    let rate: f64 = stdout(&out).trim().strip_prefix("error_rate=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));

    assert_eq!(run(&["eval", "--nn-dtw", "--data", p(&test)]).status.code(), Some(2));
}

#[test]
fn missing_or_malformed_inputs_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = run(&["eval", "--nn-dtw", "--train-data", p(&missing), "--data", p(&missing)]);
    assert_eq!(out.status.code(), Some(3));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let out = run(&["masks", "--model", p(&bad)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn divergent_training_exits_4() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_synth(dir.path(), 4);
    let out = run(&[
        "train", "--data", p(&train), "--out-model", p(&dir.path().join("m.json")), "--log",
        p(&dir.path().join("l.csv")), "-K", "2", "--lmin", "4", "--lmax", "4", "--iters", "3", "--eta", "1e200",
    ]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}

#[test]
fn gradcheck_exit_codes_and_determinism() {
    let a = run(&["gradcheck", "--trials", "20", "--seed", "3"]);
    assert!(a.status.success(), "{a:?}");
    assert!(stdout(&a).starts_with("max_relative_error="));
    let b = run(&["gradcheck", "--trials", "20", "--seed", "3", "--sequential"]);
    assert_eq!(stdout(&a), stdout(&b));

    let strict = run(&["gradcheck", "--trials", "3", "--tolerance", "0"]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(stdout(&strict).contains("FAIL trial"));
}

#[test]
fn gridsearch_and_mask_export() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("grid.csv");
    let out = run(&[
        "gridsearch", "--data", p(&mini("mini_train.jsonl")), "--out", p(&csv), "--folds", "2", "--k-grid",
        "2,3", "--lambda-grid", "0.01,0.1", "--lmin", "5", "--lmax", "8", "--iters", "3",
    ]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).starts_with("best K="));
    let grid = fs::read_to_string(&csv).unwrap();
    assert_eq!(grid.lines().next(), Some("K,lambda,fold,val_error"));
    assert_eq!(grid.lines().count(), 1 + 2 * 2 * 2 + 4);

    let model = dir.path().join("m.json");
    let trained = run(&[
        "train", "--data", p(&mini("mini_train.jsonl")), "--out-model", p(&model), "--log",
        p(&dir.path().join("l.csv")), "-K", "2", "--lmin", "5", "--lmax", "8", "--iters", "2",
    ]);
    assert!(trained.status.success());
    let printed = run(&["masks", "--model", p(&model)]);
    let exported = dir.path().join("masks.csv");
    assert!(run(&["masks", "--model", p(&model), "--out", p(&exported)]).status.success());
    assert_eq!(stdout(&printed), fs::read_to_string(&exported).unwrap());
    assert_eq!(stdout(&printed).lines().count(), 2);
    assert!(stdout(&printed).lines().all(|l| l.split(',').count() == 3));
}
