//! Dispersive dynamic modulation: tones, activation bookkeeping, the
//! leading-commutator effective Hamiltonian and amplitude synthesis.
//!
//! Everything is expressed in the rotating frame of `Σ Ω n_j + Ω̄ n̄_j`,
//! where a link coupling `V(t)(b† + b)(b̄† + b̄)` splits into four terms with
//! frequencies `±δ`, `±ε`. A tone `2A cos(νt + φ)` multiplying a term at
//! frequency `f` contributes components at `f ± ν`. Grouping components by
//! frequency `ω`, the effective Hamiltonian is `Σ_{ω>0} [A_ω, A_ω†]/ω` plus
//! the static (`ω = 0`) part.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain_model::{ChainSpec, SiteIndex};
use crate::dynamics::{DriveTerm, TimeDependentHamiltonian};
use crate::error::{Error, Result};
use crate::many_body::{hcb_operator, BosonTerm, HcbOp, ParityString, SparseOperator};
use crate::{c64, C64};

/// Leg splittings and the dispersive threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub omega: f64,
    pub omega_bar: f64,
    pub eta: f64,
}

impl HardwareSpec {
    pub fn new(omega: f64, omega_bar: f64, eta: f64) -> Result<Self> {
        let hw = Self { omega, omega_bar, eta };
        hw.validate()?;
        Ok(hw)
    }

    /// Dimensionless hierarchy with `δ = 1`, `Ω = δ/0.3`.
    pub fn compressed(eta: f64) -> Self {
        let omega = 1.0 / 0.3;
        Self { omega, omega_bar: omega - 1.0, eta }
    }

    pub fn delta(&self) -> f64 {
        self.omega - self.omega_bar
    }

    pub fn epsilon(&self) -> f64 {
        self.omega + self.omega_bar
    }

    pub fn eta_over_delta(&self) -> f64 {
        self.eta / self.delta()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > self.omega_bar && self.omega_bar > 0.0 && self.eta > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "hardware needs Ω > Ω̄ > 0 and η > 0 (got {}, {}, {})",
                self.omega, self.omega_bar, self.eta
            )));
        }
        Ok(())
    }

    /// Splitting of the hard-core boson at a linear position.
    pub fn splitting(&self, p: usize) -> f64 {
        if p % 2 == 1 {
            self.omega
        } else {
            self.omega_bar
        }
    }
}

/// Ratio limits: warning above the limit, error above twice the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyLimits {
    pub amp_over_eta: f64,
    pub eta_over_delta: f64,
}

impl Default for HierarchyLimits {
    fn default() -> Self {
        Self { amp_over_eta: 0.2, eta_over_delta: 0.2 }
    }
}

/// Unit-peak envelope shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Envelope {
    Constant { duration: f64 },
    Sin2RampHoldRamp { ramp: f64, hold: f64 },
}

impl Envelope {
    pub fn duration(&self) -> f64 {
        match *self {
            Envelope::Constant { duration } => duration,
            Envelope::Sin2RampHoldRamp { ramp, hold } => 2.0 * ramp + hold,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant { duration } => {
                if (0.0..=duration).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::Sin2RampHoldRamp { ramp, hold } => {
                let total = 2.0 * ramp + hold;
                if !(0.0..=total).contains(&t) {
                    0.0
                } else if t < ramp {
                    (0.5 * PI * t / ramp).sin().powi(2)
                } else if t > ramp + hold {
                    (0.5 * PI * (total - t) / ramp).sin().powi(2)
                } else {
                    1.0
                }
            }
        }
    }

    pub fn validate(&self, adiabatic: bool) -> Result<()> {
        match *self {
            Envelope::Constant { duration } => {
                if !(duration >= 0.0) {
                    return Err(Error::InvalidEnvelope("negative duration".into()));
                }
                if adiabatic && duration > 0.0 {
                    return Err(Error::InvalidEnvelope("adiabatic tones must vanish at both endpoints".into()));
                }
            }
            Envelope::Sin2RampHoldRamp { ramp, hold } => {
                if !(ramp > 0.0 && hold >= 0.0 && ramp.is_finite() && hold.is_finite()) {
                    return Err(Error::InvalidEnvelope(format!("ramp {ramp} / hold {hold} invalid")));
                }
            }
        }
        Ok(())
    }

    /// Closed-form `∫ s(t)^power dt` for `power ∈ {1, 2}`.
    pub fn area(&self, power: u32) -> f64 {
        match *self {
            Envelope::Constant { duration } => duration,
            Envelope::Sin2RampHoldRamp { ramp, hold } => {
                let c = match power {
                    1 => 0.5,
                    2 => 0.375,
                    _ => panic!("closed-form area only for powers 1 and 2"),
                };
                hold + 2.0 * c * ramp
            }
        }
    }

    /// Adaptive-Simpson `∫ s(t)^power dt` to relative tolerance `tol`.
    pub fn integrate(&self, power: u32, tol: f64) -> f64 {
        let f = |t: f64| self.value(t).powi(power as i32);
        let pieces: Vec<(f64, f64)> = match *self {
            Envelope::Constant { duration } => vec![(0.0, duration)],
            Envelope::Sin2RampHoldRamp { ramp, hold } => {
                vec![(0.0, ramp), (ramp, ramp + hold), (ramp + hold, 2.0 * ramp + hold)]
            }
        };
        let total_scale = self.duration().max(f64::MIN_POSITIVE);
        pieces.iter().map(|&(a, b)| adaptive_simpson(&f, a, b, tol * total_scale, 50)).sum()
    }

    /// Sin² ramp-hold-ramp whose `∫ s^power` equals `area`.
    pub fn calibrated(ramp: f64, area: f64, power: u32) -> Result<Envelope> {
        let c = if power == 1 { 0.5 } else { 0.375 };
        let hold = area - 2.0 * c * ramp;
        if hold < 0.0 {
            return Err(Error::InvalidEnvelope(format!("ramp {ramp} too long for area {area}")));
        }
        let env = Envelope::Sin2RampHoldRamp { ramp, hold };
        let num = env.integrate(power, 1e-12);
        if ((num - area) / area).abs() > 1e-10 {
            return Err(Error::InvalidEnvelope(format!("quadrature area {num} differs from {area}")));
        }
        Ok(env)
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(f, a, m), simpson(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            l + r + (l + r - whole) / 15.0
        } else {
            rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    rec(f, a, b, simpson(f, a, b), tol, depth)
}

/// What a tone modulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToneTarget {
    /// `(j,+) ↔ (j,-)`
    Intra { site: usize },
    /// `(j,-) ↔ (j+1,+)`
    Inter { site: usize },
    /// On-site drive of one hard-core boson.
    Site { position: usize },
}

impl ToneTarget {
    fn max_position(&self) -> usize {
        match *self {
            ToneTarget::Intra { site } => 2 * site,
            ToneTarget::Inter { site } => 2 * site + 1,
            ToneTarget::Site { position } => position,
        }
    }

    fn is_link(&self) -> bool {
        !matches!(self, ToneTarget::Site { .. })
    }
}

/// `2 · amplitude · s(t) · cos(carrier·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub target: ToneTarget,
    pub amplitude: f64,
    pub carrier: f64,
    pub phase: f64,
    pub envelope: Envelope,
}

impl Tone {
    pub fn value(&self, t: f64) -> f64 {
        2.0 * self.amplitude * self.envelope.value(t) * (self.carrier * t + self.phase).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToneSchedule {
    pub tones: Vec<Tone>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToneRecord {
    target: ToneTarget,
    carrier_hz: f64,
    phase_rad: f64,
    envelope: EnvelopeRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeRecord {
    family: String,
    params: HashMap<String, f64>,
}

impl ToneSchedule {
    pub fn duration(&self) -> f64 {
        self.tones.iter().map(|t| t.envelope.duration()).fold(0.0, f64::max)
    }

    /// JSON array of `{target, carrier_hz, phase_rad, envelope: {family, params}}`.
    /// Carriers are angular frequencies internally and divided by `2π` here.
    pub fn to_json(&self) -> serde_json::Value {
        let recs: Vec<ToneRecord> = self
            .tones
            .iter()
            .map(|t| {
                let (family, mut params) = match t.envelope {
                    Envelope::Constant { duration } => ("constant", HashMap::from([("duration".to_string(), duration)])),
                    Envelope::Sin2RampHoldRamp { ramp, hold } => (
                        "sin2_ramp_hold_ramp",
                        HashMap::from([("ramp".to_string(), ramp), ("hold".to_string(), hold)]),
                    ),
                };
                params.insert("peak".into(), t.amplitude);
                ToneRecord {
                    target: t.target,
                    carrier_hz: t.carrier / (2.0 * PI),
                    phase_rad: t.phase,
                    envelope: EnvelopeRecord { family: family.into(), params },
                }
            })
            .collect();
        serde_json::to_value(recs).expect("tone records serialize")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let recs: Vec<ToneRecord> =
            serde_json::from_value(v.clone()).map_err(|e| Error::InvalidSpec(format!("tone schedule: {e}")))?;
        let mut tones = Vec::new();
        for r in recs {
            let p = |k: &str| {
                r.envelope.params.get(k).copied().ok_or_else(|| Error::InvalidSpec(format!("envelope param {k} missing")))
            };
            let envelope = match r.envelope.family.as_str() {
                "constant" => Envelope::Constant { duration: p("duration")? },
                "sin2_ramp_hold_ramp" => Envelope::Sin2RampHoldRamp { ramp: p("ramp")?, hold: p("hold")? },
                f => return Err(Error::InvalidSpec(format!("unknown envelope family {f}"))),
            };
            tones.push(Tone {
                target: r.target,
                amplitude: p("peak")?,
                carrier: 2.0 * PI * r.carrier_hz,
                phase: r.phase_rad,
                envelope,
            });
        }
        Ok(Self { tones })
    }
}

/// On-site drive `2d cos((Ω_p + sign·3η) t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkDrive {
    pub d: f64,
    pub sign: i8,
}

/// Tone amplitudes for every link and site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSynthesis {
    /// `t_j`, `q_j` on `(j,+) ↔ (j,-)`, length `N`.
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    /// `t̄_j`, `q̄_j` on `(j,-) ↔ (j+1,+)`, length `N - 1`.
    pub t_bar: Vec<f64>,
    pub q_bar: Vec<f64>,
    /// One entry per linear position.
    pub stark: Vec<StarkDrive>,
    pub warnings: Vec<String>,
}

impl PulseSynthesis {
    pub fn zeros(n: usize) -> Self {
        Self {
            t: vec![0.0; n],
            q: vec![0.0; n],
            t_bar: vec![0.0; n.saturating_sub(1)],
            q_bar: vec![0.0; n.saturating_sub(1)],
            stark: vec![StarkDrive { d: 0.0, sign: 1 }; 2 * n],
            warnings: Vec::new(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.t.len()
    }

    /// Alternating pattern `x_j = (-1)^{j-1} x` on all four families.
    pub fn staggered(n: usize, t: f64, q: f64, t_bar: f64, q_bar: f64) -> Self {
        let sg = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut s = Self::zeros(n);
        for j in 0..n {
            s.t[j] = sg(j) * t;
            s.q[j] = sg(j) * q;
        }
        for j in 0..n.saturating_sub(1) {
            s.t_bar[j] = sg(j) * t_bar;
            s.q_bar[j] = sg(j) * q_bar;
        }
        s
    }

    pub fn max_link_amplitude(&self) -> f64 {
        self.t.iter().chain(&self.q).chain(&self.t_bar).chain(&self.q_bar).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Link and Stark tones sharing one envelope.
    pub fn to_schedule(&self, hw: &HardwareSpec, envelope: Envelope) -> ToneSchedule {
        let (eta, delta, eps) = (hw.eta, hw.delta(), hw.epsilon());
        let mut tones = Vec::new();
        let mut push = |target, amplitude: f64, carrier| {
            if amplitude != 0.0 {
                tones.push(Tone { target, amplitude, carrier, phase: 0.0, envelope });
            }
        };
        for j in 1..=self.n_sites() {
            push(ToneTarget::Intra { site: j }, self.t[j - 1], eta - delta);
            push(ToneTarget::Intra { site: j }, self.q[j - 1], eta - eps);
        }
        for j in 1..self.n_sites() {
            push(ToneTarget::Inter { site: j }, self.t_bar[j - 1], eta - delta);
            push(ToneTarget::Inter { site: j }, self.q_bar[j - 1], eta + eps);
        }
        for (k, s) in self.stark.iter().enumerate() {
            let p = k + 1;
            push(ToneTarget::Site { position: p }, s.d, hw.splitting(p) + f64::from(s.sign) * 3.0 * eta);
        }
        ToneSchedule { tones }
    }

    /// Diagonal of the self-energy part: `(n_p coefficients, constant)`.
    pub fn self_energy_coefficients(&self, eta: f64) -> (Vec<f64>, f64) {
        let n = self.n_sites();
        let mut c = vec![0.0; 2 * n];
        let mut k = 0.0;
        for j in 0..n {
            let (t2, q2) = (self.t[j].powi(2), self.q[j].powi(2));
            c[2 * j] += (t2 + q2) / eta;
            c[2 * j + 1] += (q2 - t2) / eta;
            k -= q2 / eta;
        }
        for j in 0..n.saturating_sub(1) {
            let (t2, q2) = (self.t_bar[j].powi(2), self.q_bar[j].powi(2));
            c[2 * j + 2] += (t2 - q2) / eta;
            c[2 * j + 1] -= (t2 + q2) / eta;
            k += q2 / eta;
        }
        (c, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOptions {
    #[serde(default)]
    pub limits: HierarchyLimits,
    /// Fold the self-energy diagonal into the Stark chemical potentials.
    #[serde(default)]
    pub compensate_self_energy: bool,
    /// Optional `t̄` consistency check against the derived value.
    #[serde(default)]
    pub t_bar: Option<f64>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { limits: HierarchyLimits::default(), compensate_self_energy: false, t_bar: None }
    }
}

fn check_ratio(name: &str, ratio: f64, limit: f64, warnings: &mut Vec<String>) -> Result<()> {
    if ratio > 2.0 * limit {
        Err(Error::Hierarchy(format!("{name} = {ratio:.4} exceeds twice the limit {limit}")))
    } else {
        if ratio > limit {
            warnings.push(format!("{name} = {ratio:.4} above limit {limit}"));
        }
        Ok(())
    }
}

/// Stark amplitude realizing chemical potential `mu` (`μ = 2 s d²/3η`).
pub fn stark_for_mu(mu: f64, eta: f64) -> StarkDrive {
    StarkDrive { d: (1.5 * eta * mu.abs()).sqrt(), sign: if mu < 0.0 { -1 } else { 1 } }
}

/// Amplitudes whose effective model is `target`:
/// `t̄ = -wη/t`, `q̄ = Δη/t`, `q = -t q̄/t̄`, staggered by site parity.
pub fn synthesize(target: &ChainSpec, hw: &HardwareSpec, t: f64, opts: &SynthesisOptions) -> Result<PulseSynthesis> {
    target.validate()?;
    hw.validate()?;
    if t == 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument("base amplitude t must be nonzero".into()));
    }
    let eta = hw.eta;
    let t_bar = -target.w * eta / t;
    if let Some(tb) = opts.t_bar {
        if (tb - t_bar).abs() > 1e-12 * tb.abs().max(t_bar.abs()).max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!("t̄ = {tb} inconsistent with w: expected {t_bar}")));
        }
    }
    let q_bar = target.delta_pair * eta / t;
    let q = if t_bar != 0.0 {
        -t * q_bar / t_bar
    } else if q_bar == 0.0 {
        0.0
    } else {
        return Err(Error::InvalidArgument("q̄/t̄ constraint unsatisfiable: t̄ = 0 but Δ ≠ 0".into()));
    };
    let n = target.n_fermion_sites;
    let mut s = PulseSynthesis::staggered(n, t, q, t_bar, q_bar);
    let mut warnings = Vec::new();
    check_ratio("eta/delta", hw.eta_over_delta(), opts.limits.eta_over_delta, &mut warnings)?;
    let (self_c, _) = s.self_energy_coefficients(eta);
    for p in 0..2 * n {
        let mu_s = if opts.compensate_self_energy { target.mu + self_c[p] } else { target.mu };
        s.stark[p] = stark_for_mu(mu_s, eta);
    }
    let amp = s.max_link_amplitude().max(s.stark.iter().fold(0.0, |m, d| m.max(d.d)));
    check_ratio("amplitude/eta", amp / eta, opts.limits.amp_over_eta, &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    s.warnings = warnings;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Positive,
    Negative,
    /// Net frequency zero: a static first-order term (resonant gate tones).
    Resonant,
    Deactivated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationEntry {
    pub tone: usize,
    pub term: String,
    pub term_frequency: f64,
    pub nets: [f64; 2],
    pub activation: Activation,
    /// `min |net| - η` for deactivated entries, zero otherwise.
    pub detuning: f64,
}

/// A rotating-frame term `O e^{i f t}` of a tone target.
struct FrameTerm {
    label: String,
    frequency: f64,
    ops: Vec<(usize, HcbOp)>,
}

fn frame_terms(target: ToneTarget, hw: &HardwareSpec) -> Vec<FrameTerm> {
    use HcbOp::{Annihilate as A, Create as C};
    let (d, e) = (hw.delta(), hw.epsilon());
    let ft = |label: String, frequency, ops| FrameTerm { label, frequency, ops };
    match target {
        ToneTarget::Intra { site: j } => {
            let (p, q) = (SiteIndex::plus(j).position(), SiteIndex::minus(j).position());
            vec![
                ft(format!("b†_{j} b̄†_{j}"), e, vec![(p, C), (q, C)]),
                ft(format!("b†_{j} b̄_{j}"), d, vec![(p, C), (q, A)]),
                ft(format!("b_{j} b̄†_{j}"), -d, vec![(p, A), (q, C)]),
                ft(format!("b_{j} b̄_{j}"), -e, vec![(p, A), (q, A)]),
            ]
        }
        ToneTarget::Inter { site: j } => {
            let (p, q) = (SiteIndex::minus(j).position(), SiteIndex::plus(j + 1).position());
            let k = j + 1;
            vec![
                ft(format!("b̄†_{j} b†_{k}"), e, vec![(p, C), (q, C)]),
                ft(format!("b̄_{j} b†_{k}"), d, vec![(p, A), (q, C)]),
                ft(format!("b̄†_{j} b_{k}"), -d, vec![(p, C), (q, A)]),
                ft(format!("b̄_{j} b_{k}"), -e, vec![(p, A), (q, A)]),
            ]
        }
        ToneTarget::Site { position } => {
            let w = hw.splitting(position);
            vec![
                ft(format!("b†@{position}"), w, vec![(position, C)]),
                ft(format!("b@{position}"), -w, vec![(position, A)]),
            ]
        }
    }
}

const ACT_TOL: f64 = 1e-9;

fn classify_one(nets: [f64; 2], eta: f64, tol: f64) -> std::result::Result<(Activation, f64), String> {
    let at_edge: Vec<f64> = nets.iter().copied().filter(|n| (n.abs() - eta).abs() <= tol * eta).collect();
    let at_zero = nets.iter().any(|n| n.abs() <= tol * eta);
    let inside: Vec<f64> = nets
        .iter()
        .copied()
        .filter(|n| n.abs() < eta * (1.0 - tol) && n.abs() > tol * eta)
        .collect();
    if !inside.is_empty() {
        return Err(format!("net frequency {:.6e} inside the active window", inside[0]));
    }
    match (at_edge.len(), at_zero) {
        (0, false) => {
            let det = nets.iter().map(|n| n.abs() - eta).fold(f64::INFINITY, f64::min);
            Ok((Activation::Deactivated, det))
        }
        (1, false) => Ok((if at_edge[0] > 0.0 { Activation::Positive } else { Activation::Negative }, 0.0)),
        (0, true) => Ok((Activation::Resonant, 0.0)),
        _ => Err(format!("two sidebands {:?} both inside the active window", nets)),
    }
}

/// Classifies every (tone, rotating-frame term) product. Link tones yield
/// four entries, site tones two.
pub fn classify_activation(schedule: &ToneSchedule, hw: &HardwareSpec) -> Result<Vec<ActivationEntry>> {
    let mut out = Vec::new();
    for (i, tone) in schedule.tones.iter().enumerate() {
        for term in frame_terms(tone.target, hw) {
            let nets = [term.frequency + tone.carrier, term.frequency - tone.carrier];
            let (activation, detuning) = classify_one(nets, hw.eta, ACT_TOL)
                .map_err(|m| Error::FrequencyCollision(format!("tone {i} on {}: {m}", term.label)))?;
            out.push(ActivationEntry { tone: i, term: term.label, term_frequency: term.frequency, nets, activation, detuning });
        }
    }
    Ok(out)
}

/// One `k · O e^{i f t}` component of the rotating-frame Hamiltonian.
#[derive(Clone)]
pub struct FrameComponent {
    pub tone: usize,
    pub target: ToneTarget,
    pub frequency: f64,
    pub coeff: C64,
    pub op: Arc<SparseOperator>,
}

/// Decomposes a schedule into frequency components (envelopes excluded).
pub fn frame_components(schedule: &ToneSchedule, hw: &HardwareSpec, n_positions: usize) -> Result<Vec<FrameComponent>> {
    let mut cache: HashMap<(ToneTarget, usize), Arc<SparseOperator>> = HashMap::new();
    let mut out = Vec::new();
    for (i, tone) in schedule.tones.iter().enumerate() {
        if tone.target.max_position() > n_positions {
            return Err(Error::InvalidArgument(format!("tone {i} targets a position beyond {n_positions}")));
        }
        for (k, term) in frame_terms(tone.target, hw).into_iter().enumerate() {
            let op = cache
                .entry((tone.target, k))
                .or_insert_with(|| {
                    Arc::new(hcb_operator(n_positions, &[BosonTerm::new(c64(1.0, 0.0), term.ops.clone(), ParityString::default())], 0.0))
                })
                .clone();
            for sg in [1.0, -1.0] {
                out.push(FrameComponent {
                    tone: i,
                    target: tone.target,
                    frequency: term.frequency + sg * tone.carrier,
                    coeff: C64::from_polar(tone.amplitude, sg * tone.phase),
                    op: op.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Leading-commutator effective Hamiltonian, split by origin.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub n_positions: usize,
    /// Activated cross-link commutators (hopping/pairing with strings).
    pub mutual: SparseOperator,
    /// Activated same-link commutators (diagonal corrections).
    pub self_energy: SparseOperator,
    /// Site-drive commutators at `3η`.
    pub stark: SparseOperator,
    /// All other second-order (deactivated) contributions.
    pub background: SparseOperator,
    /// First-order static part from resonant components.
    pub resonant: SparseOperator,
    /// Closed-form mutual/self/Stark terms and their constant.
    pub symbolic: Vec<BosonTerm>,
    pub symbolic_constant: f64,
}

impl EffectiveModel {
    /// Mutual + self + Stark: the activated second-order Hamiltonian.
    pub fn activated(&self) -> SparseOperator {
        self.mutual.add(&self.self_energy).add(&self.stark)
    }

    /// Every second-order contribution.
    pub fn second_order(&self) -> SparseOperator {
        self.activated().add(&self.background)
    }

    pub fn symbolic_operator(&self) -> SparseOperator {
        hcb_operator(self.n_positions, &self.symbolic, self.symbolic_constant)
    }
}

/// Sums components by (tolerantly equal) frequency.
fn group_by_frequency(comps: &[FrameComponent], scale: f64) -> Vec<(f64, Vec<&FrameComponent>)> {
    let mut sorted: Vec<&FrameComponent> = comps.iter().collect();
    sorted.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let mut groups: Vec<(f64, Vec<&FrameComponent>)> = Vec::new();
    for c in sorted {
        match groups.last_mut() {
            Some((f, g)) if (c.frequency - *f).abs() <= ACT_TOL * scale => g.push(c),
            _ => groups.push((c.frequency, vec![c])),
        }
    }
    groups
}

fn sum_components<'a>(dim: usize, comps: impl Iterator<Item = &'a &'a FrameComponent>) -> SparseOperator {
    let mut t = Vec::new();
    for c in comps {
        t.extend(c.op.triplets().into_iter().map(|(r, k, v)| (r, k, v * c.coeff)));
    }
    SparseOperator::from_triplets(dim, t)
}

fn commutator_term(a: &SparseOperator, omega: f64) -> SparseOperator {
    a.commutator(&a.adjoint()).scale(c64(1.0 / omega, 0.0))
}

/// Effective Hamiltonian of an arbitrary schedule (envelopes at unit value).
pub fn effective_from_schedule(schedule: &ToneSchedule, hw: &HardwareSpec, n_positions: usize) -> Result<EffectiveModel> {
    classify_activation(schedule, hw)?;
    let dim = 1usize << n_positions;
    let comps = frame_components(schedule, hw, n_positions)?;
    let scale = hw.eta.max(hw.epsilon());
    let eta = hw.eta;
    let zero = SparseOperator::zeros(dim);
    let (mut mutual, mut self_e, mut stark, mut background, mut resonant) =
        (zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero.clone());
    for (f, group) in group_by_frequency(&comps, scale) {
        if f.abs() <= ACT_TOL * eta {
            resonant = resonant.add(&sum_components(dim, group.iter()));
            continue;
        }
        if f < 0.0 {
            continue;
        }
        let a = sum_components(dim, group.iter());
        let full = commutator_term(&a, f);
        if (f - eta).abs() <= ACT_TOL * eta {
            let mut links: Vec<ToneTarget> = group.iter().map(|c| c.target).filter(|t| t.is_link()).collect();
            links.sort_by_key(|t| format!("{t:?}"));
            links.dedup();
            let mut own = zero.clone();
            for l in links {
                let al = sum_components(dim, group.iter().filter(|c| c.target == l));
                own = own.add(&commutator_term(&al, f));
            }
            self_e = self_e.add(&own);
            mutual = mutual.add(&full.sub(&own));
        } else if (f - 3.0 * eta).abs() <= ACT_TOL * eta {
            let a_site = sum_components(dim, group.iter().filter(|c| !c.target.is_link()));
            let s = commutator_term(&a_site, f);
            background = background.add(&full.sub(&s));
            stark = stark.add(&s);
        } else {
            background = background.add(&full);
        }
    }
    let fix = |op: SparseOperator| SparseOperator::from_triplets(dim, op.triplets());
    Ok(EffectiveModel {
        n_positions,
        mutual: fix(mutual),
        self_energy: fix(self_e),
        stark: fix(stark),
        background: fix(background),
        resonant: fix(resonant),
        symbolic: Vec::new(),
        symbolic_constant: 0.0,
    })
}

/// Closed-form activated terms of a synthesis (mutual, self and Stark).
pub fn symbolic_terms(s: &PulseSynthesis, eta: f64) -> (Vec<BosonTerm>, f64) {
    use HcbOp::{Annihilate as A, Create as C, Number as Nn};
    let n = s.n_sites();
    let mut terms = Vec::new();
    let mut hc = |k: f64, ops: Vec<(usize, HcbOp)>, string: ParityString| {
        if k != 0.0 {
            let t = BosonTerm::new(c64(k, 0.0), ops, string);
            terms.push(t.adjoint());
            terms.push(t);
        }
    };
    let pp = |j: usize| SiteIndex::plus(j).position();
    let pm = |j: usize| SiteIndex::minus(j).position();
    for j in 1..n {
        let sbar = ParityString::single(pm(j));
        hc(s.t[j - 1] * s.t_bar[j - 1] / eta, vec![(pp(j), C), (pp(j + 1), A)], sbar.clone());
        hc(s.t[j - 1] * s.q_bar[j - 1] / eta, vec![(pp(j), C), (pp(j + 1), C)], sbar);
        let sp = ParityString::single(pp(j + 1));
        hc(-s.t_bar[j - 1] * s.t[j] / eta, vec![(pm(j), C), (pm(j + 1), A)], sp.clone());
        hc(-s.t_bar[j - 1] * s.q[j] / eta, vec![(pm(j), C), (pm(j + 1), C)], sp);
    }
    let (c, mut constant) = s.self_energy_coefficients(eta);
    for (k, sd) in s.stark.iter().enumerate() {
        let shift = f64::from(sd.sign) * sd.d * sd.d / (3.0 * eta);
        let coeff = c[k] - 2.0 * shift;
        constant += shift;
        if coeff != 0.0 {
            terms.push(BosonTerm::new(c64(coeff, 0.0), vec![(k + 1, Nn)], ParityString::default()));
        }
    }
    (terms, constant)
}

/// Effective model of a synthesis, with both the matrix-commutator route and
/// the closed-form term list.
pub fn effective_hamiltonian(synthesis: &PulseSynthesis, hw: &HardwareSpec, spec: &ChainSpec) -> Result<EffectiveModel> {
    spec.validate()?;
    if synthesis.n_sites() != spec.n_fermion_sites {
        return Err(Error::InvalidArgument("synthesis and chain sizes differ".into()));
    }
    let sched = synthesis.to_schedule(hw, Envelope::Constant { duration: 1.0 });
    let mut model = effective_from_schedule(&sched, hw, spec.n_positions())?;
    let (terms, constant) = symbolic_terms(synthesis, hw.eta);
    model.symbolic = terms;
    model.symbolic_constant = constant;
    Ok(model)
}

/// Effective `(w, Δ)` implied by the bond-1 amplitudes.
pub fn effective_couplings(s: &PulseSynthesis, eta: f64) -> Option<(f64, f64)> {
    if s.n_sites() < 2 {
        return None;
    }
    Some((-s.t[0] * s.t_bar[0] / eta, s.t[0] * s.q_bar[0] / eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Rx,
    Ry,
    TwoQubit,
}

/// Gate-tone request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateToneRequest {
    pub kind: GateKind,
    /// Subchain sites (RX/RY) or the cut link `c` (two-qubit) as `(c, c)`.
    pub sites: (usize, usize),
    pub peak: f64,
    pub envelope: Envelope,
    /// Bulk pairing scale the peak is compared against.
    pub delta_eff: f64,
    /// Base `t` of the cut links (two-qubit only): peak `t_M = t·peak/η`.
    pub base_t: f64,
    /// Allowed `peak/Δ_eff` (default 0.1).
    pub max_ratio: f64,
}

pub fn gate_tones(req: &GateToneRequest, hw: &HardwareSpec) -> Result<ToneSchedule> {
    hw.validate()?;
    req.envelope.validate(true)?;
    if req.envelope.value(0.0) != 0.0 || req.envelope.value(req.envelope.duration()) > 1e-15 {
        return Err(Error::InvalidEnvelope("gate envelope must vanish at both endpoints".into()));
    }
    let effective_peak = match req.kind {
        GateKind::TwoQubit => (req.base_t * req.peak / hw.eta).abs(),
        _ => req.peak.abs(),
    };
    if effective_peak > req.max_ratio * req.delta_eff.abs() {
        return Err(Error::InvalidEnvelope(format!(
            "gate peak {effective_peak:.3e} exceeds {} × Δ_eff = {:.3e}",
            req.max_ratio,
            req.max_ratio * req.delta_eff.abs()
        )));
    }
    let (first, last) = req.sites;
    let tones = match req.kind {
        GateKind::Rx | GateKind::Ry => {
            let phase = if req.kind == GateKind::Rx { 0.0 } else { 0.5 * PI };
            (first..=last)
                .map(|j| Tone { target: ToneTarget::Intra { site: j }, amplitude: req.peak, carrier: hw.delta(), phase, envelope: req.envelope })
                .collect()
        }
        GateKind::TwoQubit => vec![Tone {
            target: ToneTarget::Inter { site: first },
            amplitude: req.peak,
            carrier: hw.eta - hw.delta(),
            phase: 0.0,
            envelope: req.envelope,
        }],
    };
    Ok(ToneSchedule { tones })
}

/// Full rotating-frame drive `Σ_c k_c s(t) e^{i f_c t} O_c` of a schedule.
pub fn rotating_frame_hamiltonian(schedule: &ToneSchedule, hw: &HardwareSpec, n_positions: usize) -> Result<TimeDependentHamiltonian> {
    let mut terms: Vec<DriveTerm> = Vec::new();
    let mut cache: HashMap<(ToneTarget, usize), Arc<SparseOperator>> = HashMap::new();
    for tone in &schedule.tones {
        if tone.target.max_position() > n_positions {
            return Err(Error::InvalidArgument("tone beyond chain".into()));
        }
        for (k, term) in frame_terms(tone.target, hw).into_iter().enumerate() {
            let op = cache
                .entry((tone.target, k))
                .or_insert_with(|| {
                    Arc::new(hcb_operator(n_positions, &[BosonTerm::new(c64(1.0, 0.0), term.ops.clone(), ParityString::default())], 0.0))
                })
                .clone();
            let tone = *tone;
            let f = term.frequency;
            terms.push(DriveTerm::new(op, move |t| C64::from_polar(tone.value(t), f * t)));
        }
    }
    Ok(TimeDependentHamiltonian { dim: 1 << n_positions, static_part: None, drives: terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::many_body::assemble_bosonized;

    fn gigahertz_hw() -> HardwareSpec {
        let g = 2.0 * PI;
        HardwareSpec::new(g * 20.0, g * 15.0, g * 0.3).unwrap()
    }

    #[test]
    fn reference_amplitudes_give_ten_megahertz() {
        let hw = gigahertz_hw();
        let t = 2.0 * PI * 0.055;
        let w = t * t / hw.eta;
        assert!((w / (2.0 * PI) * 1e3 - 10.083).abs() < 1e-2);
        assert!((10.0..=20.0).contains(&(w / (2.0 * PI) * 1e3)));
    }

    #[test]
    fn ideal_target_gives_the_sign_pattern() {
        let hw = HardwareSpec::compressed(0.1);
        let s = synthesize(&ChainSpec::ideal(3, 1e-4), &hw, 0.01, &SynthesisOptions::default()).unwrap();
        assert!((s.t_bar[0] + 0.001).abs() < 1e-15);
        // w = Δ: q̄ = -t̄ and q = t
        assert!((s.q_bar[0] + s.t_bar[0]).abs() < 1e-15);
        assert!((s.q[0] - s.t[0]).abs() < 1e-15);
        assert_eq!(s.t[1], -s.t[0]);
        assert_eq!(s.q_bar[1], -s.q_bar[0]);
    }

    #[test]
    fn stark_amplitude_for_one_megahertz() {
        let eta = 2.0 * PI * 0.3;
        let sd = stark_for_mu(2.0 * PI * 0.001, eta);
        assert!((sd.d / (2.0 * PI) * 1e3 - 21.213).abs() < 1e-3);
        assert_eq!(stark_for_mu(-1.0, eta).sign, -1);
    }

    #[test]
    fn hierarchy_guard() {
        let hw = HardwareSpec::compressed(0.1);
        let spec = ChainSpec::ideal(2, 1e-4);
        let ok = synthesize(&spec, &hw, 0.025, &SynthesisOptions::default()).unwrap();
        assert_eq!(ok.warnings.len(), 1);
        assert!(matches!(synthesize(&spec, &hw, 0.05, &SynthesisOptions::default()), Err(Error::Hierarchy(_))));
        let slow = HardwareSpec::compressed(0.5);
        assert!(matches!(synthesize(&spec, &slow, 0.01, &SynthesisOptions::default()), Err(Error::Hierarchy(_))));
        let zero_w = ChainSpec::new(2, 0.0, 1e-4, 0.0);
        assert!(matches!(synthesize(&zero_w, &hw, 0.01, &SynthesisOptions::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn link_tone_activation_examples() {
        let hw = HardwareSpec::compressed(0.1);
        let s = PulseSynthesis::staggered(2, 0.01, 0.01, 0.01, -0.01);
        let sched = s.to_schedule(&hw, Envelope::Constant { duration: 1.0 });
        let e = classify_activation(&sched, &hw).unwrap();
        let hop = e.iter().find(|x| x.tone == 0 && x.term == "b†_1 b̄_1").unwrap();
        assert_eq!(hop.activation, Activation::Positive);
        assert!((hop.nets[0] - hw.eta).abs() < 1e-12);
        let far = e.iter().find(|x| x.tone == 0 && x.term == "b†_1 b̄†_1").unwrap();
        assert_eq!(far.activation, Activation::Deactivated);
        assert!(far.detuning > 10.0 * hw.eta);
    }

    #[test]
    fn stark_tone_is_outside_the_window() {
        let hw = HardwareSpec::compressed(0.1);
        let sched = ToneSchedule {
            tones: vec![Tone {
                target: ToneTarget::Site { position: 1 },
                amplitude: 0.01,
                carrier: hw.omega + 3.0 * hw.eta,
                phase: 0.0,
                envelope: Envelope::Constant { duration: 1.0 },
            }],
        };
        let e = classify_activation(&sched, &hw).unwrap();
        assert_eq!(e.len(), 2);
        assert!(e.iter().all(|x| x.activation == Activation::Deactivated));
        assert!(e.iter().any(|x| (x.detuning - 2.0 * hw.eta).abs() < 1e-12));
    }

    #[test]
    fn near_miss_is_a_collision() {
        let hw = HardwareSpec::compressed(0.1);
        let sched = ToneSchedule {
            tones: vec![Tone {
                target: ToneTarget::Intra { site: 1 },
                amplitude: 0.01,
                carrier: hw.eta - hw.delta() - 0.05,
                phase: 0.0,
                envelope: Envelope::Constant { duration: 1.0 },
            }],
        };
        assert!(matches!(classify_activation(&sched, &hw), Err(Error::FrequencyCollision(_))));
    }

    #[test]
    fn matrix_and_closed_form_routes_agree() {
        let hw = HardwareSpec::compressed(0.1);
        for n in [2usize, 3] {
            let spec = ChainSpec::new(n, 1e-3, 7e-4, 2e-4);
            let opts = SynthesisOptions { compensate_self_energy: true, ..Default::default() };
            let s = synthesize(&spec, &hw, 0.012, &opts).unwrap();
            let m = effective_hamiltonian(&s, &hw, &spec).unwrap();
            let diff = m.activated().sub(&m.symbolic_operator()).max_abs();
            assert!(diff < 1e-15, "N={n}: {diff}");
            // with compensation the activated model is the target chain
            let target = assemble_bosonized(&spec).unwrap();
            let resid = m.activated().sub(&target);
            let tr: C64 = (0..resid.dim()).map(|i| resid.get(i, i)).sum::<C64>() / resid.dim() as f64;
            let shifted = resid.sub(&SparseOperator::identity(resid.dim()).scale(tr));
            assert!(shifted.max_abs() < 1e-15, "N={n}: {}", shifted.max_abs());
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_model() {
        let hw = HardwareSpec::compressed(0.1);
        let spec = ChainSpec::new(2, 0.0, 0.0, 0.0);
        let m = effective_hamiltonian(&PulseSynthesis::zeros(2), &hw, &spec).unwrap();
        assert_eq!(m.second_order().nnz(), 0);
        assert_eq!(m.resonant.nnz(), 0);
    }

    #[test]
    fn uniform_signs_break_the_match() {
        let hw = HardwareSpec::compressed(0.1);
        let (t, tb) = (0.01, 0.01);
        let mut s = PulseSynthesis::staggered(3, t, t, tb, -tb);
        for v in s.t.iter_mut().chain(s.q.iter_mut()) {
            *v = v.abs();
        }
        let spec = ChainSpec::ideal(3, t * tb / hw.eta);
        let m = effective_hamiltonian(&s, &hw, &spec).unwrap();
        let w = -t * tb / hw.eta;
        let target = assemble_bosonized(&ChainSpec::new(3, w, t * -tb / hw.eta, 0.0)).unwrap();
        assert!(m.mutual.sub(&target).max_abs() > 1e-6);
    }

    #[test]
    fn envelope_areas() {
        let env = Envelope::Sin2RampHoldRamp { ramp: 3.0, hold: 5.0 };
        for p in [1, 2] {
            let a = env.area(p);
            assert!(((env.integrate(p, 1e-12) - a) / a).abs() < 1e-10);
        }
        assert_eq!(env.value(0.0), 0.0);
        assert!(env.value(11.0).abs() < 1e-30);
        let c = Envelope::calibrated(2.0, PI, 1).unwrap();
        assert!((c.area(1) - PI).abs() < 1e-14);
        assert!(Envelope::calibrated(10.0, 1.0, 1).is_err());
    }

    #[test]
    fn schedule_json_round_trip() {
        let hw = HardwareSpec::compressed(0.1);
        let s = PulseSynthesis::staggered(2, 0.01, 0.01, 0.01, -0.01);
        let sched = s.to_schedule(&hw, Envelope::Sin2RampHoldRamp { ramp: 10.0, hold: 20.0 });
        let js = sched.to_json();
        let first = &js.as_array().unwrap()[0];
        for k in ["target", "carrier_hz", "phase_rad", "envelope"] {
            assert!(first.get(k).is_some());
        }
        let back = ToneSchedule::from_json(&js).unwrap();
        for (a, b) in back.tones.iter().zip(&sched.tones) {
            assert_eq!(a.target, b.target);
            assert!((a.carrier - b.carrier).abs() < 1e-14);
            assert_eq!(a.envelope, b.envelope);
        }
    }

    #[test]
    fn gate_tone_shapes() {
        let hw = HardwareSpec::compressed(0.1);
        let env = Envelope::Sin2RampHoldRamp { ramp: 5.0, hold: 5.0 };
        let req = GateToneRequest { kind: GateKind::Rx, sites: (1, 3), peak: 0.05, envelope: env, delta_eff: 1.0, base_t: 0.0, max_ratio: 0.1 };
        let rx = gate_tones(&req, &hw).unwrap();
        let ry = gate_tones(&GateToneRequest { kind: GateKind::Ry, ..req }, &hw).unwrap();
        assert_eq!(rx.tones.len(), 3);
        for (a, b) in rx.tones.iter().zip(&ry.tones) {
            assert_eq!(a.carrier, hw.delta());
            assert_eq!(a.phase, 0.0);
            assert_eq!(b.phase, 0.5 * PI);
        }
        assert!(gate_tones(&GateToneRequest { peak: 0.5, ..req }, &hw).is_err());
        let flat = GateToneRequest { envelope: Envelope::Constant { duration: 3.0 }, ..req };
        assert!(gate_tones(&flat, &hw).is_err());
        let two = GateToneRequest { kind: GateKind::TwoQubit, sites: (3, 3), peak: 0.01, base_t: 0.01, ..req };
        let s = gate_tones(&two, &hw).unwrap();
        assert_eq!(s.tones.len(), 1);
        assert!((s.tones[0].carrier - (hw.eta - hw.delta())).abs() < 1e-15);
    }
}
