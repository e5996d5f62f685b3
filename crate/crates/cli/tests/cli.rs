//! End-to-end checks of the `nsp` binary: seeded determinism of the metric
//! files, flag-over-config precedence, exit codes, and plot purity.

use std::path::Path;
use std::process::Command;

fn nsp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsp"))
}

fn write_smoke_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("smoke.toml");
    std::fs::write(&path, "[sim]\nphase_size = 20\nphases = 2\nseed = 5\n").unwrap();
    path
}

#[test]
fn heu_run_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(tmp.path());
    let csv = |sub: &str| tmp.path().join(sub).join("heu-rho0.5-seed5-phases.csv");
    for sub in ["a", "b"] {
        let st = nsp()
            .args(["baseline-heu", "--config"])
            .arg(&cfg)
            .args(["--agent", "heu", "--out-dir"])
            .arg(tmp.path().join(sub))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read(csv("a")).unwrap();
    let b = std::fs::read(csv("b")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same seed must produce identical CSV bytes");
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(tmp.path());
    // The file says seed 5; the flag wins, which shows in the file name
    // and in the manifest's seed list.
    let st = nsp()
        .args(["baseline-heu", "--config"])
        .arg(&cfg)
        .args(["--seed", "9", "--phases", "1", "--out-dir"])
        .arg(tmp.path().join("o"))
        .status()
        .unwrap();
    assert!(st.success());
    assert!(tmp.path().join("o/heu-rho0.5-seed9-phases.csv").is_file());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("o/manifest-baseline-heu.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seeds"][0], 9);
    assert_eq!(manifest["config"]["file"]["sim"]["phases"], 1);
    assert!(manifest["error"].is_null());
}

#[test]
fn train_writes_phase_rows_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(tmp.path());
    let st = nsp()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--agent", "hadrl", "--beta", "2", "--out-dir"])
        .arg(tmp.path().join("o"))
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(tmp.path().join("o/hadrl-b2-seed5-phases.csv")).unwrap();
    // Header plus one row per phase.
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("phase,acceptance_ratio"));
    assert!(tmp.path().join("o/hadrl-b2-seed5.ckpt").is_file());
}

#[test]
fn config_errors_exit_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let st = nsp()
        .args(["train", "--agent", "nope", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = nsp()
        .args(["train", "--topology", "/definitely/missing.json", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(!out.exists(), "failed config must not leave artifacts");
}

#[test]
fn plot_is_pure_and_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("phases.csv");
    std::fs::write(&csv, "phase,acceptance_ratio\n1,0.5\n2,0.75\n").unwrap();
    for sub in ["a", "b"] {
        let st = nsp()
            .arg("plot")
            .arg(&csv)
            .arg("--out-dir")
            .arg(tmp.path().join(sub))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read(tmp.path().join("a/acceptance.svg")).unwrap();
    let b = std::fs::read(tmp.path().join("b/acceptance.svg")).unwrap();
    assert_eq!(a, b, "identical inputs must render identical charts");

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "phase,acceptance_ratio\n1,x\n").unwrap();
    let st = nsp()
        .arg("plot")
        .arg(&bad)
        .arg("--out-dir")
        .arg(tmp.path().join("c"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "phase,acceptance_ratio\n").unwrap();
    let st = nsp()
        .arg("plot")
        .arg(&empty)
        .arg("--out-dir")
        .arg(tmp.path().join("d"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
    assert!(!tmp.path().join("d/acceptance.svg").exists());
}

#[test]
fn failed_run_still_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    // A checkpoint that exists but is not a checkpoint: config resolves,
    // the run fails, and the manifest records the error.
    let fake = tmp.path().join("fake.ckpt");
    std::fs::write(&fake, b"not a checkpoint").unwrap();
    let st = nsp()
        .args(["validate", "--checkpoint"])
        .arg(&fake)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("manifest-validate.json")).unwrap(),
    )
    .unwrap();
    assert!(manifest["error"].as_str().unwrap().contains(".ckpt"));
}
