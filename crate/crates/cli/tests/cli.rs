use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn linksynth(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linksynth"))
        .current_dir(dir)
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = linksynth(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

/// Small dataset, predictor and generator shared by the command tests.
fn pipeline(dir: &Path, tag: &str) {
    let data = format!("{tag}/train.csv");
    let pred = format!("{tag}/predictor.json");
    let gen = format!("{tag}/generator.json");
    ok(dir, &["gen-data", "--n", "400", "--steps", "90", "--out", &data, "--seed", "3"]);
    ok(dir, &["train-predictor", "--data", &data, "--out", &pred, "--steps", "300", "--seed", "3"]);
    ok(dir, &[
        "train-cgan", "--data", &data, "--predictor", &pred, "--out", &gen, "--steps", "120",
        "--snapshot-every", "40", "--log", &format!("{tag}/history.csv"), "--seed", "3",
    ]);
    ok(dir, &["synthesize", "--model", &gen, "--dmax", "1.0", "--eta", "0.2", "--n", "25", "--out", &format!("{tag}/samples.csv"), "--seed", "3"]);
    ok(dir, &["nsga2", "--predictor", &pred, "--dmax", "1.0", "--eta", "0.2", "--pop", "12", "--gens", "5", "--out", &format!("{tag}/pareto.csv"), "--seed", "3"]);
    ok(dir, &["evaluate", "--model", &gen, "--data", &data, "--n", "200", "--report", &format!("{tag}/report.json"), "--seed", "3"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&linksynth(d, &["--help"])), 0);
    assert_eq!(code(&linksynth(d, &["--version"])), 0);
    assert_eq!(code(&linksynth(d, &[])), 1);
    assert_eq!(code(&linksynth(d, &["gen-data", "--bogus"])), 1);
    assert_eq!(code(&linksynth(d, &["gen-data", "--n", "many"])), 1);
    assert_eq!(code(&linksynth(d, &["train-predictor"])), 1);
    assert_eq!(code(&linksynth(d, &["synthesize", "--model", "g.json", "--dmax", "-1", "--eta", "1"])), 1);
    assert_eq!(code(&linksynth(d, &["repro", "--scale", "huge"])), 1);
    assert_eq!(code(&linksynth(d, &["train-predictor", "--data", "missing.csv"])), 2);
    fs::write(d.join("bad.json"), "[1, 2]").unwrap();
    assert_eq!(code(&linksynth(d, &["--config", "bad.json", "gen-data"])), 1);
    assert_eq!(code(&linksynth(d, &["--config", "absent.json", "gen-data"])), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{ "seed": 5, "gen-data": { "n": 30, "steps": 90, "out": "cfg.csv" } }"#).unwrap();
    ok(d, &["--config", "cfg.json", "gen-data"]);
    assert_eq!(rows(&d.join("cfg.csv")), 30);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("cfg.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["n_steps"], 90);

    ok(d, &["--config", "cfg.json", "gen-data", "--n", "20", "--seed", "6"]);
    assert_eq!(rows(&d.join("cfg.csv")), 20);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("cfg.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 6);

    fs::write(d.join("typo.json"), r#"{ "gen-data": { "n": "thirty" } }"#).unwrap();
    assert_eq!(code(&linksynth(d, &["--config", "typo.json", "gen-data"])), 1);
}

#[test]
fn commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, "a");
    let a = d.join("a");
    let samples = fs::read_to_string(a.join("samples.csv")).unwrap();
    assert!(samples.starts_with("l2,l3,l4,ee_x,ee_y,d_t,eta_t,d_r,eta_r\n"));
    assert_eq!(rows(&a.join("samples.csv")), 25);
    assert_eq!(rows(&a.join("pareto.csv")), 12);
    assert_eq!(rows(&a.join("history.csv")), 120);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "multi");
    assert_eq!(report["metrics"]["n_total"], 200);
    let gen: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("generator.json")).unwrap()).unwrap();
    assert_eq!((gen["training_metadata"]["selected_step"].as_u64().unwrap() + 1) % 40, 0);

    ok(d, &["evaluate", "--model", "a/generator.json", "--mode", "single", "--dmax", "1.0", "--eta", "0.2", "--n", "30", "--report", "a/single.json", "--samples", "a/single.csv"]);
    assert_eq!(rows(&a.join("single.csv")), 30);
    assert_eq!(code(&linksynth(d, &["evaluate", "--model", "a/generator.json", "--mode", "both"])), 1);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, "a");
    pipeline(d, "b");
    for name in [
        "train.csv", "train.meta.json", "predictor.json", "generator.json", "history.csv",
        "samples.csv", "pareto.csv", "report.json",
    ] {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap(), "{name} differs");
    }
}
