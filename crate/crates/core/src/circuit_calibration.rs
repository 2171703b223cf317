//! Transmon and coupler formulas used as a parameter calculator.
//!
//! Energies are frequencies `E/2π` in GHz; inductances are in units of the
//! Josephson inductance `L_J` of the first transmon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensionless normalization of the coupler formula.
pub const DEFAULT_KAPPA: f64 = 0.01;
/// `E_J/E_C` below which the transmon regime is questionable.
pub const TRANSMON_RATIO: f64 = 20.0;

/// `Ω = √(8 E_C E_J)`.
pub fn transmon_frequency(e_c: f64, e_j: f64) -> f64 {
    (8.0 * e_c * e_j).sqrt()
}

/// `E_J = Ω² / (8 E_C)`.
pub fn required_josephson_energy(omega: f64, e_c: f64) -> f64 {
    omega * omega / (8.0 * e_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonParams {
    pub e_c: f64,
    pub e_j: f64,
    pub l_j: f64,
    pub l_d: f64,
    pub l_i: f64,
}

impl TransmonParams {
    /// Standard ratios `L_D = L_J/2`, `L_I = L_J/4`.
    pub fn with_standard_ratios(e_c: f64, e_j: f64) -> Self {
        Self { e_c, e_j, l_j: 1.0, l_d: 0.5, l_i: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.e_c, self.e_j, self.l_j, self.l_d, self.l_i];
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidArgument("transmon energies and inductances must be positive".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        transmon_frequency(self.e_c, self.e_j)
    }

    pub fn regime_warning(&self) -> Option<String> {
        let r = self.e_j / self.e_c;
        (r < TRANSMON_RATIO).then(|| format!("E_J/E_C = {r:.2} below {TRANSMON_RATIO}: outside the transmon regime"))
    }
}

/// `V = -κ √(Ω Ω̄ / (L_J L̄_J)) · L̄_D L_D / L_I`.
pub fn coupling_formula(a: &TransmonParams, b: &TransmonParams, kappa: f64) -> f64 {
    -kappa * (a.omega() * b.omega() / (a.l_j * b.l_j)).sqrt() * b.l_d * a.l_d / a.l_i
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyThresholds {
    pub max_v_over_delta: f64,
    pub max_eta_over_delta: f64,
    pub max_nnn_ratio: f64,
}

impl Default for HierarchyThresholds {
    fn default() -> Self {
        Self { max_v_over_delta: 0.1, max_eta_over_delta: 0.1, max_nnn_ratio: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInput {
    pub first: TransmonParams,
    pub second: TransmonParams,
    /// Modulation frequency `η/2π`.
    pub eta: f64,
    /// Zig-zag frequencies of the chain for the next-nearest-neighbour check.
    pub frequencies: Vec<f64>,
    /// Next-nearest-neighbour coupling magnitude.
    pub nnn_coupling: f64,
    pub kappa: f64,
    pub thresholds: HierarchyThresholds,
}

impl CalibrationInput {
    /// `E_C = 0.5 GHz`, `Ω = 20, 15 GHz`, `η = 0.3 GHz`, sublattice pattern
    /// `(15, 20, 14, 21)` GHz, NNN coupling 35 MHz.
    pub fn reference_defaults() -> Self {
        let e_c = 0.5;
        Self {
            first: TransmonParams::with_standard_ratios(e_c, required_josephson_energy(20.0, e_c)),
            second: TransmonParams::with_standard_ratios(e_c, required_josephson_energy(15.0, e_c)),
            eta: 0.3,
            frequencies: vec![15.0, 20.0, 14.0, 21.0],
            nnn_coupling: 0.035,
            kappa: DEFAULT_KAPPA,
            thresholds: HierarchyThresholds::default(),
        }
    }

    /// Every energy multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        let scale = |p: &TransmonParams| TransmonParams { e_c: p.e_c * s, e_j: p.e_j * s, ..*p };
        Self {
            first: scale(&self.first),
            second: scale(&self.second),
            eta: self.eta * s,
            frequencies: self.frequencies.iter().map(|f| f * s).collect(),
            nnn_coupling: self.nnn_coupling * s,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratios {
    pub v_over_delta: f64,
    pub eta_over_delta: f64,
    pub v_over_eta: f64,
    pub nnn_detuning: f64,
    pub nnn_suppression: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub omega: f64,
    pub omega_bar: f64,
    pub delta: f64,
    pub v_static: f64,
    pub ratios: Ratios,
    pub flags: Vec<String>,
    pub pass: bool,
    pub kappa: f64,
}

/// Smallest detuning between positions two apart.
pub fn nnn_detuning(frequencies: &[f64]) -> Option<f64> {
    frequencies.windows(3).map(|w| (w[0] - w[2]).abs()).min_by(f64::total_cmp)
}

pub fn coupling_estimate(input: &CalibrationInput) -> Result<CalibrationReport> {
    input.first.validate()?;
    input.second.validate()?;
    if !(input.eta > 0.0 && input.kappa > 0.0 && input.nnn_coupling >= 0.0) {
        return Err(Error::InvalidArgument("eta, kappa must be positive and the NNN coupling non-negative".into()));
    }
    let (omega, omega_bar) = (input.first.omega(), input.second.omega());
    let delta = (omega - omega_bar).abs();
    if delta == 0.0 {
        return Err(Error::InvalidArgument("degenerate transmon pair".into()));
    }
    let v = coupling_formula(&input.first, &input.second, input.kappa);
    let detuning = nnn_detuning(&input.frequencies).unwrap_or(f64::INFINITY);
    let ratios = Ratios {
        v_over_delta: v.abs() / delta,
        eta_over_delta: input.eta / delta,
        v_over_eta: v.abs() / input.eta,
        nnn_detuning: detuning,
        nnn_suppression: if detuning > 0.0 { input.nnn_coupling / detuning } else { f64::INFINITY },
    };
    let th = &input.thresholds;
    let mut flags: Vec<String> = [input.first.regime_warning(), input.second.regime_warning()].into_iter().flatten().collect();
    let mut pass = true;
    for (ok, msg) in [
        (ratios.v_over_delta <= th.max_v_over_delta, format!("V/δ = {:.3} above {}", ratios.v_over_delta, th.max_v_over_delta)),
        (ratios.eta_over_delta <= th.max_eta_over_delta, format!("η/δ = {:.3} above {}", ratios.eta_over_delta, th.max_eta_over_delta)),
        (ratios.nnn_suppression <= th.max_nnn_ratio, format!("NNN ratio {:.3} above {}", ratios.nnn_suppression, th.max_nnn_ratio)),
    ] {
        if !ok {
            pass = false;
            flags.push(msg);
        }
    }
    Ok(CalibrationReport { omega, omega_bar, delta, v_static: v, ratios, flags, pass, kappa: input.kappa })
}

impl CalibrationReport {
    /// `{omega_hz, v_static_hz, ratios, flags, …}` with GHz converted to Hz.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "omega_hz": self.omega * 1e9,
            "omega_bar_hz": self.omega_bar * 1e9,
            "delta_hz": self.delta * 1e9,
            "v_static_hz": self.v_static * 1e9,
            "ratios": self.ratios,
            "flags": self.flags,
            "pass": self.pass,
            "normalization": {"kappa": self.kappa, "inductance_unit": "L_J", "energy_unit": "E/2pi in GHz"},
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn josephson_energy_for_twenty_gigahertz() {
        let e_j = required_josephson_energy(20.0, 0.5);
        assert!((e_j - 100.0).abs() < 1e-12);
        assert!((transmon_frequency(0.5, e_j) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn quadrupled_josephson_energy_doubles_frequency() {
        assert!((transmon_frequency(0.3, 40.0) - 2.0 * transmon_frequency(0.3, 10.0)).abs() < 1e-12);
    }

    #[test]
    fn regime_warning_threshold() {
        assert!(TransmonParams::with_standard_ratios(1.0, 10.0).regime_warning().is_some());
        assert!(TransmonParams::with_standard_ratios(1.0, 200.0).regime_warning().is_none());
    }

    #[test]
    fn reference_defaults_land_in_range_and_pass() {
        let r = coupling_estimate(&CalibrationInput::reference_defaults()).unwrap();
        assert!(r.v_static < 0.0);
        assert!((0.150..=0.200).contains(&r.v_static.abs()), "{}", r.v_static);
        assert!((0.03..=0.04).contains(&r.ratios.v_over_delta));
        assert!((r.ratios.nnn_detuning - 1.0).abs() < 1e-12);
        assert!(r.ratios.nnn_suppression < 0.04);
        assert!(r.pass, "{:?}", r.flags);
        let j = r.to_json();
        assert!(j["omega_hz"].as_f64().unwrap() > 1.99e10);
    }

    #[test]
    fn open_coupler_gives_no_coupling() {
        let mut input = CalibrationInput::reference_defaults();
        input.first.l_i = 1e300;
        assert!(coupling_estimate(&input).unwrap().v_static.abs() < 1e-290);
    }

    proptest! {
        #[test]
        fn frequency_is_monotone(ec in 0.01f64..5.0, ej in 0.1f64..500.0, k in 1.001f64..3.0) {
            prop_assert!(transmon_frequency(ec * k, ej) > transmon_frequency(ec, ej));
            prop_assert!(transmon_frequency(ec, ej * k) > transmon_frequency(ec, ej));
        }

        #[test]
        fn coupling_is_negative(ld in 0.01f64..2.0, li in 0.01f64..2.0, lj in 0.1f64..3.0) {
            let mut input = CalibrationInput::reference_defaults();
            input.first.l_d = ld;
            input.first.l_i = li;
            input.second.l_j = lj;
            prop_assert!(coupling_estimate(&input).unwrap().v_static < 0.0);
        }

        #[test]
        fn pass_fail_is_unit_invariant(s in 0.01f64..100.0, eta in 0.05f64..2.0) {
            let mut input = CalibrationInput::reference_defaults();
            input.eta = eta;
            let a = coupling_estimate(&input).unwrap();
            let b = coupling_estimate(&input.rescaled(s)).unwrap();
            prop_assert_eq!(a.pass, b.pass);
            prop_assert_eq!(a.flags.len(), b.flags.len());
        }
    }
}
