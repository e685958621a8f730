//! End-to-end runs through the real `tapsb` binary.

use std::path::{Path, PathBuf};
use std::process::Command;
use tapsb::record::{dag_signature, load_records};

fn tapsb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tapsb"))
}

fn newest_run_dir(parent: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(parent)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.pop().expect("at least one run directory")
}

#[test]
fn run_synthetic_bag_produces_complete_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let status = tapsb()
        .args([
            "run",
            "--app",
            "synthetic",
            "--structure",
            "bag",
            "--task-count",
            "10",
            "--executor",
            "serial",
            "--run-dir",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let run_dir = newest_run_dir(dir.path());
    for artifact in ["config.json", "tasks.jsonl", "summary.json", "app.log"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }
    assert_eq!(load_records(run_dir.join("tasks.jsonl")).unwrap().len(), 10);
}

#[test]
fn run_unknown_app_is_usage_error() {
    let output = tapsb().args(["run", "--app", "nope"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown app"), "{stderr}");
}

#[test]
fn run_invalid_flag_value_is_usage_error() {
    let output = tapsb()
        .args([
            "run",
            "--app",
            "synthetic",
            "--structure",
            "bag",
            "--task-count",
            "lots",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn saved_config_reproduces_the_task_dag() {
    let dir = tempfile::tempdir().unwrap();
    // Worker pool through the real binary: current_exe resolution.
    let status = tapsb()
        .args([
            "run",
            "--app",
            "cholesky",
            "--n",
            "24",
            "--block",
            "8",
            "--executor",
            "worker-pool",
            "--workers",
            "2",
            "--seed",
            "7",
            "--run-dir",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let first_run = newest_run_dir(dir.path());
    let first_records = load_records(first_run.join("tasks.jsonl")).unwrap();

    let status = tapsb()
        .args(["run", "--config"])
        .arg(first_run.join("config.json"))
        .status()
        .unwrap();
    assert!(status.success());
    let second_run = newest_run_dir(dir.path());
    assert_ne!(first_run, second_run, "reruns get fresh directories");
    let second_records = load_records(second_run.join("tasks.jsonl")).unwrap();

    assert_eq!(first_records.len(), second_records.len());
    assert_eq!(
        dag_signature(&first_records).unwrap(),
        dag_signature(&second_records).unwrap()
    );
}

#[test]
fn failed_app_run_exits_nonzero_but_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let output = tapsb()
        .args([
            "run",
            "--app",
            "synthetic",
            "--structure",
            "sequential",
            "--task-count",
            "3",
            "--failure-type",
            "exception",
            "--failure-rate",
            "1.0",
            "--run-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let run_dir = newest_run_dir(dir.path());
    let records = load_records(run_dir.join("tasks.jsonl")).unwrap();
    assert_eq!(records.len(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("summary.json")).unwrap())
            .unwrap();
    assert!(summary.get("error").is_some());
}

#[test]
fn bench_scaling_writes_csv_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_base = dir.path().join("scaling");
    let status = tapsb()
        .args([
            "bench-scaling",
            "--executors",
            "serial,thread-pool",
            "--workers",
            "1,2",
            "--task-count",
            "20",
            "--sleep",
            "0.001",
            "--repeat",
            "2",
            "--out",
        ])
        .arg(&out_base)
        .arg("--run-dir")
        .arg(dir.path().join("runs"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert!(csv.starts_with("label,metric,unit,rep,value\n"));
    // serial once + thread-pool at two worker counts, two reps, two metrics.
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 2 * 2, "{csv}");
    let summary = std::fs::read_to_string(dir.path().join("scaling_summary.csv")).unwrap();
    assert!(
        summary
            .lines()
            .any(|l| l.starts_with("thread-pool-w2,throughput")),
        "{summary}"
    );
}

#[test]
fn bench_makespan_runs_saved_configs() {
    let dir = tempfile::tempdir().unwrap();
    let status = tapsb()
        .args([
            "run",
            "--app",
            "synthetic",
            "--structure",
            "bag",
            "--task-count",
            "5",
            "--executor",
            "serial",
            "--run-dir",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let config_path = newest_run_dir(dir.path()).join("config.json");

    let out_base = dir.path().join("makespan");
    let status = tapsb()
        .args(["bench-makespan", "--repeat", "2", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_base)
        .arg("--run-dir")
        .arg(dir.path().join("bench-runs"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("makespan.csv")).unwrap();
    let makespan_rows = csv.lines().filter(|l| l.contains(",makespan,")).count();
    assert_eq!(makespan_rows, 2, "{csv}");
}

#[test]
fn bench_transfer_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_base = dir.path().join("transfer");
    let status = tapsb()
        .args([
            "bench-transfer",
            "--executor",
            "thread-pool",
            "--workers",
            "2",
            "--sizes",
            "1000,100000",
            "--transformers",
            "none,store",
            "--runs",
            "1",
            "--out",
        ])
        .arg(&out_base)
        .arg("--run-dir")
        .arg(dir.path().join("runs"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("transfer.csv")).unwrap();
    let rows = csv.lines().skip(1).count();
    assert_eq!(rows, 2 * 2, "{csv}");
    assert!(csv.contains("store-100000"));
}

#[test]
fn run_dir_env_variable_is_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let status = tapsb()
        .env("TAPSB_RUN_DIR", dir.path())
        .args([
            "run",
            "--app",
            "synthetic",
            "--structure",
            "bag",
            "--task-count",
            "2",
            "--executor",
            "serial",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
}
