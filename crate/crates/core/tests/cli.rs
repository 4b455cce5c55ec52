//! CLI integration: exit codes and output files.
//!
//! Exit code contract: 0 success, 1 validation failure, 2 verification
//! failure.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_witnessnet"))
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("witnessnet-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn validate_ok_exits_zero() {
    let out = bin()
        .args(["validate", &scenario("testnet.scenario")])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 participants"));
}

#[test]
fn validate_broken_scenario_exits_one_listing_errors() {
    let dir = temp_dir("validate");
    std::fs::create_dir_all(dir.join("traces")).unwrap();
    std::fs::copy(
        scenario("traces/testnet.csv"),
        dir.join("traces/testnet.csv"),
    )
    .unwrap();
    let text = std::fs::read_to_string(scenario("testnet.scenario")).unwrap();
    // Rename one participant so the trace file references an unknown key.
    let broken = text.replace("\"g1u1\"", "\"ghost\"");
    let path = dir.join("broken.scenario");
    std::fs::write(&path, broken).unwrap();
    let out = bin()
        .args(["validate", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("g1u1"),
        "errors name the offending key: {stderr}"
    );
}

#[test]
fn run_verify_and_report_roundtrip() {
    let dir = temp_dir("run");
    let out = bin()
        .args([
            "run",
            &scenario("cycling.scenario"),
            "--out",
            dir.to_str().unwrap(),
            "--format",
            "text",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pearson(mean, baseline): 0.94"));

    for file in [
        "report.json",
        "ledger.log",
        "report.txt",
        "estimates.csv",
        "report.jsonl",
    ] {
        assert!(dir.join(file).exists(), "missing {file}");
    }

    let verify = bin()
        .args(["verify", dir.join("ledger.log").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        verify.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&verify.stderr)
    );

    // report re-renders byte-identically from the stored report.json.
    let rerender = bin()
        .args(["report", dir.to_str().unwrap(), "--format", "text"])
        .output()
        .unwrap();
    assert_eq!(rerender.status.code(), Some(0));
    assert_eq!(
        rerender.stdout,
        std::fs::read(dir.join("report.txt")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let base = bin()
        .args(["run", &scenario("cycling.scenario"), "--format", "text"])
        .output()
        .unwrap();
    let overridden = bin()
        .args(["run", &scenario("cycling.scenario"), "--seed", "99", "--format", "text"])
        .output()
        .unwrap();
    let again = bin()
        .args(["run", &scenario("cycling.scenario"), "--seed", "99", "--format", "text"])
        .output()
        .unwrap();
    assert_eq!(base.status.code(), Some(0));
    assert_eq!(overridden.status.code(), Some(0));
    assert_ne!(base.stdout, overridden.stdout, "seed override must change the run");
    assert_eq!(overridden.stdout, again.stdout, "same seed, same bytes");
    // The statistics do not depend on the seed.
    let text = String::from_utf8_lossy(&overridden.stdout);
    assert!(text.contains("pearson(mean, baseline): 0.94"));
}

#[test]
fn log_verbosity_never_changes_report_bytes() {
    let dir_quiet = temp_dir("quiet");
    let dir_loud = temp_dir("loud");
    let quiet = bin()
        .args([
            "run",
            &scenario("testnet.scenario"),
            "--out",
            dir_quiet.to_str().unwrap(),
        ])
        .env_remove("WITNESSNET_LOG")
        .output()
        .unwrap();
    let loud = bin()
        .args([
            "run",
            &scenario("testnet.scenario"),
            "--out",
            dir_loud.to_str().unwrap(),
        ])
        .env("WITNESSNET_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(quiet.status.code(), Some(0));
    assert_eq!(loud.status.code(), Some(0));
    assert!(!loud.stderr.is_empty(), "debug logging writes to stderr");
    assert_eq!(quiet.stdout, loud.stdout);
    for file in ["report.json", "ledger.log", "report.txt", "estimates.csv"] {
        assert_eq!(
            std::fs::read(dir_quiet.join(file)).unwrap(),
            std::fs::read(dir_loud.join(file)).unwrap(),
            "{file} differs under logging"
        );
    }
}

#[test]
fn verify_tampered_ledger_exits_two() {
    let dir = temp_dir("verify");
    let out = bin()
        .args([
            "run",
            &scenario("cycling.scenario"),
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let path = dir.join("ledger.log");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    let verify = bin()
        .args(["verify", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&verify.stderr).contains("height"));
}
