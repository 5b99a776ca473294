use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn hod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hod(args);
    assert!(
        out.status.success(),
        "hod {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(format!("{}.manifest.json", path.display())).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Simulated corpus, gradient dataset and a small trained TDNN.
fn pipeline(dir: &TempDir) -> (PathBuf, PathBuf, PathBuf) {
    let csv = p(dir, "corpus.csv");
    let data = p(dir, "grad.hodw");
    let model = p(dir, "tdnn.hodm");
    ok(&[
        "simulate",
        "--preset",
        "corpus",
        "--duration",
        "40",
        "--seed",
        "3",
        "--out",
        s(&csv),
    ]);
    ok(&[
        "preprocess",
        "--input",
        s(&csv),
        "--out",
        s(&data),
        "--mode",
        "gradient",
        "--threshold",
        "0.06",
        "--balance",
    ]);
    ok(&[
        "train",
        "--data",
        s(&data),
        "--model",
        "tdnn",
        "--size",
        "5",
        "--epochs",
        "2",
        "--out",
        s(&model),
    ]);
    (csv, data, model)
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(hod(&[]).status.code(), Some(2));
    assert_eq!(hod(&["train", "--model", "cnn"]).status.code(), Some(2));
    assert_eq!(hod(&["simulate", "--preset", "two-finger"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = p(&dir, "nope.csv");
    let out = hod(&["preprocess", "--input", s(&missing), "--out", s(&p(&dir, "x.hodw"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!p(&dir, "x.hodw").exists());

    let garbage = p(&dir, "garbage.hodm");
    std::fs::write(&garbage, b"HODMxxxx").unwrap();
    let out = hod(&["detect", "--model", s(&garbage), "--input", "-"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let dir = TempDir::new().unwrap();
    let csv = p(&dir, "ten.csv");
    ok(&["simulate", "--preset", "ten-touch", "--seed", "9", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("index,time_s,capacitance,label"));
    assert_eq!(text.lines().count(), 20_001);
    let m = manifest(&csv);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["outputs"]["samples"], 20_000);
    assert_eq!(m["outputs"]["truth_intervals"].as_array().unwrap().len(), 10);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);

    // Same seed, same bytes.
    let again = p(&dir, "again.csv");
    ok(&["simulate", "--preset", "ten-touch", "--seed", "9", "--out", s(&again)]);
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn scenario_file_round_trips_through_simulate() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "s.scenario");
    std::fs::write(
        &cfg,
        "total_duration=3\nevent kind=two-finger position=3 side=front start=1.0 duration=1.0\n\
         event kind=one-hand position=12 side=front start=2.2 duration=0.5 hover=true\n",
    )
    .unwrap();
    let csv = p(&dir, "s.csv");
    let out = hod(&["simulate", "--scenario", s(&cfg), "--out", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(&csv)["outputs"]["samples"], 1500);
}

#[test]
fn train_evaluate_detect_pipeline() {
    let dir = TempDir::new().unwrap();
    let (csv, data, model) = pipeline(&dir);

    let dm = manifest(&data);
    assert_eq!(dm["outputs"]["normalization"]["mode"], "gradient");
    let windows = dm["outputs"]["windows"].as_u64().unwrap();
    assert_eq!(dm["outputs"]["positives"].as_u64().unwrap() * 2, windows);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{}.report.json", model.display())).unwrap()).unwrap();
    assert_eq!(report["model"], "tdnn");
    assert_eq!(report["parameter_count"], 511);
    assert_eq!(report["serialized_bytes"], std::fs::metadata(&model).unwrap().len());

    let eval_json = p(&dir, "eval.json");
    let out = ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&eval_json),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("TDNN 5 (gradient)"));
    let e: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&eval_json).unwrap()).unwrap();
    let acc = e["metrics"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let events = p(&dir, "events.csv");
    let summary = p(&dir, "summary.json");
    let out = ok(&[
        "detect",
        "--model",
        s(&model),
        "--input",
        s(&csv),
        "--out",
        s(&events),
        "--summary",
        s(&summary),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, std::fs::read_to_string(&events).unwrap());
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("index,time_s,event,latency_ms"));
    let mut last = None;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 4);
        assert!(f[2] == "on" || f[2] == "off");
        assert_ne!(last, Some(f[2].to_string()), "events must alternate");
        last = Some(f[2].to_string());
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("hands-on:") && stderr.contains("hands-off:"));
    let sm: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(sm["contact_threshold"].as_f64().unwrap() > 50.0);
}

#[test]
fn detect_reads_standard_input_and_refuses_mode_mismatch() {
    let dir = TempDir::new().unwrap();
    let (csv, _, model) = pipeline(&dir);
    let text = std::fs::read_to_string(&csv).unwrap();
    let values: String = text
        .lines()
        .skip(1)
        .map(|l| format!("{}\n", l.split(',').nth(2).unwrap()))
        .collect();

    let from_file = ok(&[
        "detect",
        "--model",
        s(&model),
        "--input",
        s(&csv),
        "--threshold",
        "50.6",
    ]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_hod"))
        .args(["detect", "--model", s(&model), "--input", "-", "--threshold", "50.6"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(values.as_bytes()).unwrap();
    let from_stdin = child.wait_with_output().unwrap();
    assert!(from_stdin.status.success());
    assert_eq!(from_file.stdout, from_stdin.stdout);

    let out = hod(&["detect", "--model", s(&model), "--input", s(&csv), "--mode", "absolute"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mode absolute"));

    let mut child = Command::new(env!("CARGO_BIN_EXE_hod"))
        .args(["detect", "--model", s(&model), "--input", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"50.0\nfifty\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn bench_writes_grid_csv_and_table() {
    let dir = TempDir::new().unwrap();
    let out_csv = p(&dir, "grid.csv");
    ok(&[
        "bench",
        "--duration",
        "30",
        "--only",
        "tdnn",
        "--only",
        "rf",
        "--sizes",
        "1,5",
        "--mode",
        "gradient",
        "--epochs",
        "1",
        "--out",
        s(&out_csv),
    ]);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("model,size,mode,accuracy,precision,recall,f05,memory_bytes,exec_time_us,features")
    );
    // Two TDNN sizes plus the five forest configurations.
    assert_eq!(lines.count(), 7);
    assert!(std::fs::read_to_string(format!("{}.txt", out_csv.display()))
        .unwrap()
        .contains("RF"));
    assert_eq!(manifest(&out_csv)["outputs"]["failed_cells"], 0);
}
