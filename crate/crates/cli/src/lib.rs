//! Experiment runner behind the `diii` binary.
//!
//! A run computes every artifact in memory first and only then writes the
//! output directory, so a failed run leaves nothing behind.

pub mod config;
pub mod presets;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use diii_core::ErrorClass;

pub use config::ExperimentConfig;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "DIII_OUT_DIR";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(diii_core::Error),
    Io(String),
}

impl From<diii_core::Error> for CliError {
    fn from(e: diii_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Io(_) => "config",
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => "config",
                ErrorClass::PhysicsGuard => "physics_guard",
                ErrorClass::Numeric => "numeric",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "physics_guard" => 2,
            "numeric" => 3,
            _ => 1,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    /// One-line JSON record for the error stream.
    pub fn reason_line(&self) -> String {
        serde_json::json!({"error": self.class(), "code": self.exit_code(), "message": self.message()}).to_string()
    }
}

/// Output files held in memory until the run succeeds.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    timings: Vec<(String, f64)>,
}

impl Artifacts {
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    /// Runs `f` and records its wall time under `label`.
    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push((label.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub pass: bool,
}

/// Output directory: explicit flag, then the environment, then the config, then `diii-out/<experiment>`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("diii-out").join(&cfg.experiment))
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("writing {name}: {e}"));
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, dir.join(name)).map_err(io)
}

/// Runs the configured preset and writes its artifacts plus a manifest.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let preset = presets::find(&cfg.experiment).expect("validated experiment name");
    log::info!("running {} (seed {})", preset.name, cfg.seed);
    let start = Instant::now();
    let mut art = Artifacts::default();
    let pass = (preset.run)(cfg, &mut art)?;
    let total = start.elapsed().as_secs_f64();

    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
    for (name, bytes) in &art.files {
        write_atomic(out_dir, name, bytes)?;
    }
    let files: Vec<serde_json::Value> = art
        .files
        .iter()
        .map(|(n, b)| serde_json::json!({"name": n, "bytes": b.len()}))
        .collect();
    let timings: serde_json::Map<String, serde_json::Value> =
        art.timings.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
    let manifest = serde_json::json!({
        "experiment": preset.name,
        "pass": pass,
        "config": cfg,
        "versions": {
            "diii-cli": env!("CARGO_PKG_VERSION"),
            "diii-core": diii_core::VERSION,
        },
        "timings_s": {"total": total, "steps": timings},
        "files": files,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(out_dir, MANIFEST, &bytes)?;
    Ok(RunSummary { out_dir: out_dir.to_path_buf(), files: art.files.into_iter().map(|(n, _)| n).collect(), pass })
}

/// Runs a preset without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<(Artifacts, bool), CliError> {
    cfg.validate()?;
    let preset = presets::find(&cfg.experiment).expect("validated experiment name");
    let mut art = Artifacts::default();
    let pass = (preset.run)(cfg, &mut art)?;
    Ok((art, pass))
}
