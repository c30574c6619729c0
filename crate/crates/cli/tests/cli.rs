//! End-to-end runs of the binary: flag parsing, exit codes, artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topodecode"))
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn run_err(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_config() -> serde_json::Value {
    serde_json::json!({
        "family": "surface_rotated",
        "d": 3,
        "noise": "bit_flip",
        "p_train": 0.1,
        "p_eval": [0.1],
        "scheme": "uniform",
        "model": "mlp",
        "arch": { "hidden": 32 },
        "dataset_size": 1000,
        "epochs": 1,
        "batch_size": 100,
        "data_seed": 1,
        "train_seed": 2,
        "eval_seed": 3,
        "trials": 1000,
        "baselines": ["md"]
    })
}

#[test]
fn code_info_reports_parameters() {
    let v = run_ok(&["code-info", "--family", "surface_rotated", "--d", "3"]);
    assert_eq!(v["n"], 9);
    assert_eq!(v["k"], 1);
    assert_eq!(v["checks"], 8);
    assert_eq!(v["x_checks"], 4);
    assert_eq!(v["logical_weights"], serde_json::json!([3, 3]));
}

#[test]
fn analyze_scheme_reports_metrics() {
    let v = run_ok(&[
        "analyze-scheme",
        "--family",
        "surface_rotated",
        "--d",
        "3",
        "--scheme",
        "short",
    ]);
    assert_eq!(v["rows"], 3);
    let sens = v["sensitivity"].as_f64().unwrap();
    let bd = v["boundary_distance"].as_f64().unwrap();
    let norm = v["normalized_sensitivity"].as_f64().unwrap();
    assert!(sens >= 1.0);
    assert!(bd > 0.0);
    assert!((norm - sens / bd).abs() < 1e-12);
    assert!(v["scheme_id"].as_str().unwrap().len() >= 16);
}

#[test]
fn bad_flags_exit_two() {
    let out = run_err(&["code-info", "--family", "surface_rotated", "--d", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_err(&["code-info", "--family", "triangle", "--d", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_err(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_writes_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("train.qds");
    let v = run_ok(&[
        "gen-data",
        "--family",
        "surface_rotated",
        "--d",
        "3",
        "--scheme",
        "uniform",
        "--noise",
        "bit_flip",
        "--p",
        "0.1",
        "--count",
        "500",
        "--seed",
        "7",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(v["samples"], 500);
    assert_eq!(v["syndrome_bits"], 8);
    assert!(out_path.exists());
}

#[test]
fn train_then_eval_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small_config());
    let train_dir = dir.path().join("train_out");
    let v = run_ok(&["train", "--config", &config, "--out", train_dir.to_str().unwrap()]);
    assert_eq!(v["loss_trace"].as_array().unwrap().len(), 1);
    assert!(train_dir.join("model.qnn").exists());
    assert!(train_dir.join("dataset.qds").exists());

    let eval_dir = dir.path().join("eval_out");
    let v = run_ok(&["eval", "--config", &config, "--out", eval_dir.to_str().unwrap()]);
    assert_eq!(v["rows"], 2);
    let csv = std::fs::read_to_string(eval_dir.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("config_hash,family,d,scheme,decoder,"));
    assert!(lines[1].contains(",mlp,"));
    assert!(lines[2].contains(",md,"));
}

#[test]
fn baseline_eval_overrides_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small_config());
    let out_dir = dir.path().join("mwpm_out");
    let v = run_ok(&[
        "baseline-eval",
        "--config",
        &config,
        "--decoder",
        "mwpm",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(v["rows"], 1);
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.contains(",mwpm,"));
    assert!(!csv.contains(",mlp,"));
    assert!(!out_dir.join("model.qnn").exists());
}

#[test]
fn oracle_eval_brackets_the_exact_rate() {
    let v = run_ok(&[
        "oracle-eval",
        "--family",
        "surface_rotated",
        "--d",
        "3",
        "--scheme",
        "uniform",
        "--noise",
        "bit_flip",
        "--p",
        "0.1",
        "--trials",
        "20000",
        "--seed",
        "11",
    ]);
    let exact = v["exact_optimal_rate"].as_f64().unwrap();
    assert!(v["ci_low"].as_f64().unwrap() <= exact);
    assert!(exact <= v["ci_high"].as_f64().unwrap());
}

#[test]
fn oracle_eval_rejects_codes_past_the_exact_bound() {
    let out = run_err(&[
        "oracle-eval",
        "--family",
        "surface_rotated",
        "--d",
        "5",
        "--scheme",
        "short",
        "--noise",
        "bit_flip",
        "--p",
        "0.05",
        "--trials",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("exact enumeration"), "stderr: {stderr}");
}

#[test]
fn sweep_stacks_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["model"] = "none".into();
    cfg["trials"] = 500.into();
    let config = write_config(dir.path(), cfg);
    let out_dir = dir.path().join("sweep_out");
    let v = run_ok(&[
        "sweep",
        "--config",
        &config,
        "--sizes",
        "100,200",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(v["rows"], 2);
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["p_train"] = 1.5.into();
    let config = write_config(dir.path(), cfg);
    let out = run_err(&["eval", "--config", &config, "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run_err(&["eval", "--config", "/no/such/file.json", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_is_honored() {
    let out = bin()
        .env("TOPODECODE_THREADS", "1")
        .args(["code-info", "--family", "color_666", "--d", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .env("TOPODECODE_THREADS", "zero")
        .args(["code-info", "--family", "color_666", "--d", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_eval_rejects_nonsense_probability() {
    let out = run_err(&[
        "oracle-eval",
        "--family",
        "surface_rotated",
        "--d",
        "3",
        "--scheme",
        "short",
        "--noise",
        "bit_flip",
        "--p",
        "1.2",
        "--trials",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
