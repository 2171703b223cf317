use std::path::Path;
use std::process::{Command, Output};

use diii_cli::presets::PRESETS;
use diii_cli::{run_in_memory, ExperimentConfig, OUT_DIR_ENV};

fn diii(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_diii"));
    cmd.args(args).env_remove(OUT_DIR_ENV);
    if let Some(p) = env_out {
        cmd.env(OUT_DIR_ENV, p);
    }
    cmd.output().expect("binary runs")
}

fn reason(out: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().expect("one reason line");
    serde_json::from_str(line).expect("machine-parsable reason")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn list_names_every_preset_once() {
    let out = diii(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    let expected = [
        "spectrum-equivalence",
        "basis-transform",
        "ideal-point",
        "phase-scan",
        "ddm-commutator",
        "dispersive-dynamics",
        "stark-shift",
        "single-qubit-gates",
        "two-qubit-gate",
        "calibration",
        "numerical-hygiene",
    ];
    assert_eq!(names, expected);
    let two = text.lines().find(|l| l.starts_with("two-qubit-gate")).unwrap();
    assert_eq!(two.split_whitespace().nth(1), Some("minutes"));
    assert_eq!(PRESETS.len(), expected.len());
}

#[test]
fn manifest_references_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("calib");
    let out = diii(&["preset", "calibration", "--out", dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let mut listed: Vec<String> =
        manifest["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap().to_string()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut on_disk: Vec<String> =
        std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    assert_eq!(manifest["config"]["experiment"], "calibration");
    assert!(manifest["versions"]["diii-core"].is_string());
    assert!(manifest["timings_s"]["total"].is_number());
}

#[test]
fn environment_overrides_config_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_dir = tmp.path().join("from-config");
    let env_dir = tmp.path().join("from-env");
    let body = format!(
        r#"{{"experiment": "calibration", "units": {{"energy": "ghz", "time": "inverse_energy"}}, "output_dir": {:?}}}"#,
        cfg_dir.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = diii(&["run", cfg.to_str().unwrap()], Some(&env_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("calibration.json").exists());
    assert!(!cfg_dir.exists());
}

#[test]
fn missing_eta_is_a_config_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let body = format!(
        r#"{{"experiment": "stark-shift", "units": {{"energy": "dimensionless", "time": "inverse_energy"}},
            "hardware": {{"omega": 66.0, "omega_bar": 61.0}}, "output_dir": {:?}}}"#,
        dir.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = diii(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let r = reason(&out);
    assert_eq!(r["error"], "config");
    assert!(r["message"].as_str().unwrap().contains("eta"), "{r}");
    assert!(!dir.exists());
}

#[test]
fn unknown_fields_and_missing_units_are_rejected() {
    let with_extra = r#"{"experiment": "calibration", "units": {"energy": "ghz", "time": "inverse_energy"}, "colour": 1}"#;
    assert!(ExperimentConfig::from_json(with_extra).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "calibration"}"#).is_err());
    let wrong_unit = r#"{"experiment": "calibration", "units": {"energy": "dimensionless", "time": "inverse_energy"}}"#;
    assert!(ExperimentConfig::from_json(wrong_unit).is_err());
    let out = diii(&["preset", "no-such-preset"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oversized_chain_is_a_physics_guard_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let body = format!(
        r#"{{"experiment": "spectrum-equivalence", "units": {{"energy": "dimensionless", "time": "inverse_energy"}},
            "chain": {{"n_fermion_sites": 9, "w": 1.0, "delta_pair": 1.0, "mu": 0.0}}, "output_dir": {:?}}}"#,
        dir.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = diii(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(reason(&out)["error"], "physics_guard");
    assert!(!dir.exists());
}

#[test]
fn integrator_breakdown_is_a_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let body = format!(
        r#"{{"experiment": "stark-shift", "units": {{"energy": "dimensionless", "time": "inverse_energy"}},
            "dynamics": {{"tolerance": 1e-300}}, "output_dir": {:?}}}"#,
        dir.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = diii(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(reason(&out)["error"], "numeric");
    assert!(!dir.exists());
}

#[test]
fn reruns_are_bit_identical() {
    for name in ["spectrum-equivalence", "phase-scan", "stark-shift"] {
        let cfg = ExperimentConfig::preset(name, 7);
        let (a, _) = run_in_memory(&cfg).unwrap();
        let (b, _) = run_in_memory(&cfg).unwrap();
        assert_eq!(a.names(), b.names());
        for n in a.names() {
            assert_eq!(a.get(n), b.get(n), "{name}/{n}");
        }
    }
}

#[test]
fn seed_changes_random_samples() {
    let (a, _) = run_in_memory(&ExperimentConfig::preset("spectrum-equivalence", 1)).unwrap();
    let (b, _) = run_in_memory(&ExperimentConfig::preset("spectrum-equivalence", 2)).unwrap();
    assert_ne!(a.get("spectra.csv"), b.get("spectra.csv"));
}

#[test]
fn phase_scan_table_matches_library() {
    let (art, _) = run_in_memory(&ExperimentConfig::preset("phase-scan", 0)).unwrap();
    let grid: Vec<(f64, f64, f64)> = (0..=40).map(|k| (1.0, 1.0, 0.1 * k as f64)).collect();
    let mut expected = Vec::new();
    diii_core::free_fermion::write_phase_csv(&diii_core::free_fermion::phase_scan(&grid, 20).unwrap(), &mut expected).unwrap();
    assert_eq!(art.get("phase_scan.csv").unwrap(), expected.as_slice());
    let text = String::from_utf8(expected).unwrap();
    assert_eq!(text.lines().next(), Some("w,delta,mu,N,n_zero,splitting,gap"));
}

#[test]
fn spectrum_preset_reports_small_deviation() {
    let (art, pass) = run_in_memory(&ExperimentConfig::preset("spectrum-equivalence", 0)).unwrap();
    assert!(pass);
    let s: serde_json::Value = serde_json::from_slice(art.get("summary.json").unwrap()).unwrap();
    assert!(s["max_deviation"].as_f64().unwrap() <= 1e-9);
}
