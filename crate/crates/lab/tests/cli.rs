//! End-to-end runs of the `guidelab` binary.

mod common;

use std::process::Command;

fn guidelab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_guidelab"))
}

#[test]
fn schedule_dump_prints_csv() {
    let out = guidelab().args(["schedule", "dump", "--n-steps", "10"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,alpha_bar,beta,t");
    assert_eq!(lines.len(), 11);
    assert!(lines[10].starts_with("10,0.1,"));
}

#[test]
fn model_probe_prints_grid() {
    let cfg = common::config_path("gmm-cfg.toml");
    let out = guidelab()
        .args(["model", "probe"])
        .arg(&cfg)
        .args(["--quantity", "classifier-prob", "--t", "1", "--points", "5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    std::fs::write(&cfg_path, common::tiny("gmm-reward.toml", dir.path()).to_toml().unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let status = guidelab()
        .arg("run")
        .arg(&cfg_path)
        .args(["--seed", "5", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let snap = std::fs::read_to_string(out_dir.join("config.snapshot")).unwrap();
    assert!(snap.contains("master_seed = 5"));
    assert!(out_dir.join("plots/reward_mean.svg").is_file());
}

#[test]
fn verify_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = guidelab()
        .args(["verify", "scorematch", "cfg_drift", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS scorematch") && stdout.contains("PASS cfg_drift"));
    let report = std::fs::read_to_string(dir.path().join("verify_report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "name,lhs,rhs,stderr,z,passed");

    let bad = guidelab().args(["verify", "lemma9"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let missing = guidelab().args(["run", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
