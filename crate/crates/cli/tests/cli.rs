use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rfd_core::metric::SavedModel;
use tempfile::TempDir;

fn rfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfd")).args(args).env_remove("RFD_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rfd(args);
    assert!(out.status.success(), "rfd {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    rfd(args).status.code().unwrap()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/uci").join(name).to_string_lossy().into_owned()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn without_timing(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with("# seconds:")).collect::<Vec<_>>().join("\n")
}

fn config_of(csv: impl AsRef<Path>) -> serde_json::Value {
    let text = fs::read_to_string(csv).unwrap();
    let line = text.lines().find_map(|l| l.strip_prefix("# config: ")).expect("config line");
    serde_json::from_str(line).unwrap()
}

fn swissroll(dir: &TempDir, n: &str) -> String {
    let path = p(dir, "roll.csv");
    ok(&["gen-swissroll", "--n", n, "--seed", "3", "--out", &path]);
    path
}

#[test]
fn gen_swissroll_defaults() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (p(&dir, "a.csv"), p(&dir, "b.csv"));
    ok(&["gen-swissroll", "--out", &a]);
    ok(&["gen-swissroll", "--out", &b]);
    let text = fs::read_to_string(&a).unwrap();
    let other = fs::read_to_string(&b).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    // the config comment names the output path, the data must match exactly
    assert_eq!(rows, other.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>());
    assert_eq!(rows[0], "x,y,z,class");
    assert_eq!(rows.len(), 901);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 4));
    assert_eq!(config_of(&a)["command"], "gen-swissroll");
}

#[test]
fn noiseless_swissroll_lies_on_the_manifold() {
    let dir = TempDir::new().unwrap();
    let path = p(&dir, "roll.csv");
    ok(&["gen-swissroll", "--noise", "0", "--seed", "9", "--out", &path]);
    let text = fs::read_to_string(&path).unwrap();
    for row in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let v: Vec<f64> = row.split(',').take(3).map(|s| s.parse().unwrap()).collect();
        let t = v[0].hypot(v[2]);
        assert!((1.5 * std::f64::consts::PI - 1e-9..=4.5 * std::f64::consts::PI + 1e-9).contains(&t));
        assert!((v[0] - t * t.cos()).abs() <= 1e-9 * t, "{row}");
        assert!((v[2] - t * t.sin()).abs() <= 1e-9 * t, "{row}");
        assert!((0.0..=21.0).contains(&v[1]));
    }
}

#[test]
fn train_then_dist_round_trip() {
    let dir = TempDir::new().unwrap();
    let model = p(&dir, "iris.rfd");
    let iris = data("iris.csv");
    ok(&["train", "--data", &iris, "--model", &model, "--trees", "50"]);
    let out = ok(&["dist", "--model", &model, "--data", &iris, "--i", "0", "--j", "120"]);
    let d: f64 = out.trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&d));
    assert_eq!(out.trim().split('.').nth(1).unwrap().len(), 6);
    let back = ok(&["dist", "--model", &model, "--data", &iris, "--i", "120", "--j", "0"]);
    assert_eq!(out, back);

    let saved = SavedModel::load(&model).unwrap();
    let config: serde_json::Value = serde_json::from_str(&saved.metadata).unwrap();
    assert_eq!(config["command"], "train");
    assert_eq!(config["resolved"]["forest"]["trees"], 50);
    assert!(dir.path().join("iris.log.json").exists());
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let iris = data("iris.csv");
    let (a, b) = (p(&dir, "m.rfd"), p(&dir, "sub/../m2.rfd"));
    fs::create_dir(dir.path().join("sub")).unwrap();
    ok(&["train", "--data", &iris, "--model", &a, "--trees", "30", "--seed", "5", "--normalize", "on"]);
    fs::rename(&a, p(&dir, "first.rfd")).unwrap();
    ok(&["train", "--data", &iris, "--model", &a, "--trees", "30", "--seed", "5", "--normalize", "on"]);
    assert_eq!(fs::read(p(&dir, "first.rfd")).unwrap(), fs::read(&a).unwrap());
    ok(&["train", "--data", &iris, "--model", &b, "--trees", "30", "--seed", "6", "--normalize", "on"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let iris = data("iris.csv");
    let model = p(&dir, "m.rfd");
    assert_eq!(code(&["train", "--data", &iris, "--model", &model, "--trees", "0"]), 2);
    assert_eq!(code(&["train", "--data", &iris, "--model", &model, "--pos-frac", "1.5"]), 2);
    assert_eq!(code(&["train", "--data", &iris, "--model", &model, "--pos-frac", "0.1", "--neg-per-class", "4"]), 2);
    assert_eq!(code(&["train", "--data", &iris, "--model", &model, "--position", "maybe"]), 2);
    assert_eq!(code(&["bench-knn", "--data", &iris, "--methods", "cosine"]), 2);
    assert_eq!(code(&["bench-knn", "--data", &iris, "--methods", "euclidean", "--k-max", "51"]), 2);
    assert_eq!(code(&["bench-knn", "--data", &iris, "--methods", "euclidean", "--folds", "1"]), 2);
    assert_eq!(code(&["--threads", "0", "gen-swissroll", "--out", &p(&dir, "r.csv")]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let missing = p(&dir, "missing.csv");
    assert_eq!(code(&["train", "--data", &missing, "--model", &p(&dir, "m.rfd")]), 1);
    let junk = p(&dir, "junk.rfd");
    fs::write(&junk, b"not a model").unwrap();
    assert_eq!(code(&["dist", "--model", &junk, "--a", "1", "--b", "2"]), 1);
}

#[test]
fn euclidean_model_distances() {
    let dir = TempDir::new().unwrap();
    let model = p(&dir, "e.rfd");
    ok(&["train", "--data", &data("iris.csv"), "--model", &model, "--method", "euclidean"]);
    assert_eq!(ok(&["dist", "--model", &model, "--a", "1,2,3,4", "--b", "1,2,3,4"]).trim(), "0.000000");
    assert_eq!(ok(&["dist", "--model", &model, "--a", "0,0,0,0", "--b", "3,4,0,0"]).trim(), "5.000000");
    let ab = ok(&["dist", "--model", &model, "--a", "0.1,-2,3,4", "--b", "7,1,1,1"]);
    let ba = ok(&["dist", "--model", &model, "--a", "7,1,1,1", "--b", "0.1,-2,3,4"]);
    assert_eq!(ab, ba);
    assert_eq!(code(&["dist", "--model", &model, "--a", "1,2,3", "--b", "1,2,3"]), 2);
    assert_eq!(code(&["dist", "--model", &model, "--a", "1,x,3,4", "--b", "1,2,3,4"]), 2);
}

/// A model file holding one stump over 2-D points with position features:
/// feature 0 (|a0 - b0|) <= 5 votes 0, otherwise 1.
fn stump_model(path: &str) {
    let mut buf = Vec::new();
    buf.extend_from_slice(b"RFDM");
    buf.extend_from_slice(&1u16.to_le_bytes());
    buf.push(0);
    buf.extend_from_slice(&2u32.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.push(0);
    buf.push(1);
    buf.extend_from_slice(b"RFDF");
    buf.extend_from_slice(&1u16.to_le_bytes());
    for v in [4u32, 1, u32::MAX, 1, 2] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(1);
    buf.extend_from_slice(&0u64.to_le_bytes());
    buf.extend_from_slice(&3u32.to_le_bytes());
    buf.push(1);
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&5.0f64.to_bits().to_le_bytes());
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&2u32.to_le_bytes());
    buf.extend_from_slice(&[0, 0, 0, 1]);
    fs::write(path, buf).unwrap();
}

#[test]
fn stump_fixture_distance() {
    let dir = TempDir::new().unwrap();
    let model = p(&dir, "stump.rfd");
    stump_model(&model);
    assert_eq!(ok(&["dist", "--model", &model, "--a", "0,1", "--b", "7,1"]).trim(), "1.000000");
    assert_eq!(ok(&["dist", "--model", &model, "--a", "-3,1", "--b", "1,1"]).trim(), "0.000000");
}

#[test]
fn bench_knn_reports_each_method() {
    let dir = TempDir::new().unwrap();
    let roll = swissroll(&dir, "150");
    let out = p(&dir, "out");
    let args = [
        "bench-knn", "--data", &roll, "--methods", "euclidean,rfd+p", "--trees", "15", "--pos-per-class", "60",
        "--neg-per-class", "60", "--folds", "3", "--k-step", "10", "--out", &out, "--seed", "4",
    ];
    let stdout = ok(&args);
    let summary = Path::new(&out).join("knn.summary.csv");
    let text = fs::read_to_string(&summary).unwrap();
    for method in ["euclidean", "rfd+p"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("knn-sweep,roll,{method},"))), "{method} block");
        assert!(stdout.contains(method));
    }
    let config = config_of(&summary);
    assert_eq!(config["command"], "bench-knn");
    assert_eq!(config["resolved"]["k_grid"], serde_json::json!([10, 20, 30, 40, 50]));

    let first = (without_timing(Path::new(&out).join("knn.csv")), without_timing(&summary));
    ok(&args);
    assert_eq!(first, (without_timing(Path::new(&out).join("knn.csv")), without_timing(&summary)));
}

#[test]
fn default_k_grid_reaches_smallest_class() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "out");
    ok(&["bench-knn", "--data", &data("diabetes.csv"), "--methods", "euclidean", "--out", &out]);
    let config = config_of(Path::new(&out).join("knn.csv"));
    let grid: Vec<u64> = config["resolved"]["k_grid"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let mut want: Vec<u64> = (1..=53).map(|i| 5 * i).collect();
    want.push(268);
    assert_eq!(grid, want);
}

#[test]
fn forest_sweep_rows() {
    let dir = TempDir::new().unwrap();
    let roll = swissroll(&dir, "90");
    let out = p(&dir, "out");
    let stdout = ok(&[
        "forest-sweep", "--data", &roll, "--tree-counts", "2,5,10", "--runs", "1", "--folds", "3", "--pos-per-class",
        "30", "--neg-per-class", "30", "--k-max", "10", "--out", &out,
    ]);
    for method in ["rfd+p", "rfd-p"] {
        assert_eq!(stdout.lines().filter(|l| l.starts_with(&format!("{method},"))).count(), 3, "{stdout}");
    }
    assert!(Path::new(&out).join("forest_sweep.summary.csv").exists());
    assert_eq!(code(&["forest-sweep", "--data", &roll, "--methods", "euclidean", "--out", &out]), 2);
}

#[test]
fn fixed_k_and_retrieval_run() {
    let dir = TempDir::new().unwrap();
    let roll = swissroll(&dir, "180");
    let out = p(&dir, "out");
    let stdout = ok(&["bench-fixed-k", "--data", &roll, "--trees", "10", "--runs", "2", "--out", &out]);
    assert!(stdout.lines().any(|l| l.starts_with("rfd+p,11,")), "{stdout}");
    let stdout = ok(&[
        "bench-retrieval", "--data", &roll, "--trees", "10", "--runs", "1", "--pos-per-class", "40",
        "--neg-per-class", "40", "--out", &out,
    ]);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("euclidean,")).count(), 3, "{stdout}");
    let config = config_of(Path::new(&out).join("retrieval.csv"));
    assert_eq!(config["resolved"]["top_k"], 20);
    assert_eq!(code(&["bench-retrieval", "--data", &roll, "--methods", "euclidean", "--top-k", "60", "--out", &out]), 2);
}

#[test]
fn thread_option_keeps_results() {
    let dir = TempDir::new().unwrap();
    let iris = data("iris.csv");
    let (a, b) = (p(&dir, "a.rfd"), p(&dir, "b.rfd"));
    ok(&["--threads", "1", "train", "--data", &iris, "--model", &a, "--trees", "20"]);
    let out = Command::new(env!("CARGO_BIN_EXE_rfd"))
        .args(["train", "--data", &iris, "--model", &b, "--trees", "20"])
        .env("RFD_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let (ma, mb) = (SavedModel::load(&a).unwrap(), SavedModel::load(&b).unwrap());
    assert_eq!(ma.model, mb.model);
}
