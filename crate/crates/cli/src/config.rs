//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use diii_core::chain_model::ChainSpec;
use diii_core::circuit_calibration::CalibrationInput;
use diii_core::ddm_engine::HardwareSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyUnit {
    /// Every energy in units of a reference scale (`δ = 1` for hardware presets).
    Dimensionless,
    /// `E/2π` in GHz.
    Ghz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    InverseEnergy,
}

/// Unit annotation required in every config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub energy: EnergyUnit,
    pub time: TimeUnit,
}

impl Default for Units {
    fn default() -> Self {
        Self { energy: EnergyUnit::Dimensionless, time: TimeUnit::InverseEnergy }
    }
}

/// Optional overrides of the drive parameters a preset uses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOverrides {
    /// Link amplitude `t` of the synthesized tones.
    pub amplitude: Option<f64>,
    /// Amplitude-to-`η` ratios swept by the dispersive preset.
    pub scalings: Option<Vec<f64>>,
    /// Peak of the gate tone.
    pub peak: Option<f64>,
    /// Ramp duration of the gate envelopes.
    pub ramp: Option<f64>,
    /// Rotation angle of single-qubit gates, radians.
    pub theta: Option<f64>,
    /// `d/η` of the Stark drive.
    pub stark_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSettings {
    /// Integrator error per unit evolution time.
    pub tolerance: Option<f64>,
    /// Sampling interval of emitted trajectories.
    pub sample_stride: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of a preset from `diii list`.
    pub experiment: String,
    pub units: Units,
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    #[serde(default)]
    pub hardware: Option<HardwareSpec>,
    #[serde(default)]
    pub synthesis: SynthesisOverrides,
    #[serde(default)]
    pub dynamics: DynamicsSettings,
    #[serde(default)]
    pub calibration: Option<CalibrationInput>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn preset(name: &str, seed: u64) -> Self {
        let energy = if name == "calibration" { EnergyUnit::Ghz } else { EnergyUnit::Dimensionless };
        Self {
            experiment: name.to_string(),
            units: Units { energy, ..Units::default() },
            chain: None,
            hardware: None,
            synthesis: SynthesisOverrides::default(),
            dynamics: DynamicsSettings::default(),
            calibration: None,
            output_dir: None,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that do not need any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        if crate::presets::find(&self.experiment).is_none() {
            return Err(CliError::Config(format!("unknown experiment '{}'", self.experiment)));
        }
        if self.experiment == "calibration" && self.units.energy != EnergyUnit::Ghz {
            return Err(CliError::Config("calibration energies must be declared in ghz".into()));
        }
        if let Some(c) = &self.chain {
            c.validate().map_err(CliError::Core)?;
        }
        if let Some(h) = &self.hardware {
            h.validate().map_err(CliError::Core)?;
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::Config(format!("{name} must be positive"))),
            _ => Ok(()),
        };
        positive("synthesis.amplitude", self.synthesis.amplitude)?;
        positive("synthesis.peak", self.synthesis.peak)?;
        positive("synthesis.ramp", self.synthesis.ramp)?;
        positive("synthesis.stark_ratio", self.synthesis.stark_ratio)?;
        positive("dynamics.tolerance", self.dynamics.tolerance)?;
        positive("dynamics.sample_stride", self.dynamics.sample_stride)?;
        if let Some(t) = self.synthesis.theta {
            if !t.is_finite() {
                return Err(CliError::Config("synthesis.theta must be finite".into()));
            }
        }
        if let Some(s) = &self.synthesis.scalings {
            if s.is_empty() || s.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(CliError::Config("synthesis.scalings must be a non-empty list of positive values".into()));
            }
        }
        Ok(())
    }

    pub fn tolerance(&self, default: f64) -> f64 {
        self.dynamics.tolerance.unwrap_or(default)
    }
}
