//! End-to-end checks of the command-line interface: exit codes, error
//! reporting, file outputs, and value identity across a save/load hop.

use std::path::Path;
use std::process::{Command, Output};

use failforge::analysis::FailureProfile;
use failforge::oracle::{AgreementReport, OracleRates};

fn failforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_failforge"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Fast planted-run arguments shared by the pipeline tests.
const QUICK_TRAIN: &[&str] = &[
    "train",
    "--profile",
    "vision_brittle",
    "--camouflage-mult",
    "20",
    "--distractor-lock",
    "0.08",
    "--n-steps",
    "64",
    "--total-steps",
    "256",
    "--seed",
    "7",
    "--out",
    "snap.json",
];

#[test]
fn usage_error_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(&["no-such-command"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));

    let out = failforge(&["train"], dir.path()); // --out is required
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn runtime_error_exits_with_1_and_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(
        &["oracle", "--profile", "clumsy", "--trials", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = stderr_of(&out);
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    assert!(stderr.contains("clumsy"), "{stderr}");
}

#[test]
fn missing_snapshot_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(&["analyze", "--snapshot", "absent.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("absent.json"), "{}", stderr_of(&out));
}

#[test]
fn unknown_config_key_suggests_a_fix() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[train]\ngama = 0.9\n").unwrap();
    let out = failforge(
        &["oracle", "--config", "bad.toml", "--trials", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = stderr_of(&out);
    assert!(stderr.contains("gama"), "{stderr}");
    assert!(stderr.contains("gamma"), "{stderr}");
}

#[test]
fn train_writes_snapshot_log_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(QUICK_TRAIN, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for name in ["snap.json", "log.csv", "log.json", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert!(csv.starts_with("iteration,"), "{csv}");
    assert_eq!(csv.lines().count(), 1 + 256 / 64);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["error"], serde_json::Value::Null);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn analyze_prints_the_same_profile_it_saves() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(QUICK_TRAIN, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let printed = failforge(
        &["analyze", "--snapshot", "snap.json", "--seed", "7"],
        dir.path(),
    );
    assert_eq!(printed.status.code(), Some(0), "{}", stderr_of(&printed));
    let from_stdout: FailureProfile =
        serde_json::from_slice(&printed.stdout).expect("stdout is a profile");

    let saved = failforge(
        &[
            "analyze",
            "--snapshot",
            "snap.json",
            "--seed",
            "7",
            "--out",
            "profile.json",
        ],
        dir.path(),
    );
    assert_eq!(saved.status.code(), Some(0), "{}", stderr_of(&saved));
    let from_file = FailureProfile::load(&dir.path().join("profile.json")).unwrap();
    assert_eq!(from_stdout, from_file);
    from_file.validate().unwrap();
}

#[test]
fn oracle_and_compare_produce_agreement_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(QUICK_TRAIN, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let out = failforge(
        &[
            "analyze",
            "--snapshot",
            "snap.json",
            "--seed",
            "7",
            "--out",
            "profile.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let out = failforge(
        &[
            "oracle",
            "--profile",
            "vision_brittle",
            "--camouflage-mult",
            "20",
            "--distractor-lock",
            "0.08",
            "--trials",
            "50",
            "--seed",
            "7",
            "--out",
            "oracle.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let rates = OracleRates::load(&dir.path().join("oracle.json")).unwrap();
    assert_eq!(rates.trials_per_action, 50);

    let out = failforge(
        &[
            "compare",
            "--profile",
            "profile.json",
            "--oracle",
            "oracle.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report: AgreementReport =
        serde_json::from_slice(&out.stdout).expect("stdout is an agreement report");
    assert_eq!(report.oracle_argmax, 1);
    assert!((-1.0..=1.0).contains(&report.spearman_rho));
}

#[test]
fn report_writes_svg_and_csv_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(QUICK_TRAIN, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let out = failforge(
        &[
            "analyze",
            "--snapshot",
            "snap.json",
            "--out",
            "profile.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let out = failforge(
        &[
            "report",
            "--kind",
            "radar",
            "--profile",
            "profile.json",
            "--out",
            "radar.svg",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let svg = std::fs::read_to_string(dir.path().join("radar.svg")).unwrap();
    assert!(svg.trim_start().starts_with("<svg"), "{svg}");
    assert!(dir.path().join("radar.csv").exists());
}

#[test]
fn failed_runs_still_write_a_manifest_with_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = failforge(
        &["analyze", "--snapshot", "absent.json", "--out", "p.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["error"]
        .as_str()
        .unwrap()
        .contains("absent.json"));
}
