use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn arma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "seed = 5\n[workload]\nclients = 2\ntxs_per_client = 30\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_artifacts_and_verify_accepts_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = arma(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS agreement"));
    for f in [
        "report.json",
        "series.csv",
        "keys.json",
        "config.toml",
        "ledger-p0.bin",
        "ledger-p3.bin",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.starts_with("time_ms,committed_txs,mean_latency_ms,p95_latency_ms,pending_bas\n"));

    let ledger = out.join("ledger-p1.bin");
    let keys = out.join("keys.json");
    let v = arma(&[
        "verify",
        "--ledger",
        ledger.to_str().unwrap(),
        "--keys",
        keys.to_str().unwrap(),
    ]);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));

    let mut bytes = fs::read(&ledger).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    let tampered = dir.path().join("tampered.bin");
    fs::write(&tampered, bytes).unwrap();
    let v = arma(&[
        "verify",
        "--ledger",
        tampered.to_str().unwrap(),
        "--keys",
        keys.to_str().unwrap(),
    ]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stdout(&v).starts_with("invalid"));

    let s = arma(&[
        "stats",
        "--report",
        out.join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(s.status.code(), Some(0));
    assert!(stdout(&s).contains("committed      60"));

    let rerun = dir.path().join("rerun");
    arma(&["run", "--config", &cfg, "--out", rerun.to_str().unwrap()]);
    assert_eq!(
        fs::read(out.join("report.json")).unwrap(),
        fs::read(rerun.join("report.json")).unwrap()
    );
}

#[test]
fn sample_size_prints_k() {
    let o = arma(&["sample-size", "--alpha", "0.75"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("K = 73"));
    let bad = arma(&["sample-size", "--alpha", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(arma(&[]).status.code(), Some(2));
    assert_eq!(arma(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(arma(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[system]\nparties = 3\nfaults = 1\n").unwrap();
    let o = arma(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("N >= 3F+1"));
    let missing = arma(&["stats", "--report", "/nonexistent/report.json"]);
    assert_eq!(missing.status.code(), Some(2));
}
