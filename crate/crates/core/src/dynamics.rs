//! Time-dependent Schrödinger evolution and fidelity metrics.
//!
//! The integrator is an adaptive Dormand–Prince 5(4) pair with
//! error-per-unit-step control, so the accumulated error over the whole
//! interval stays near the requested tolerance.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::ChainSpec;
use crate::ddm_engine::{
    effective_from_schedule, rotating_frame_hamiltonian, Envelope, HardwareSpec, PulseSynthesis, Tone, ToneSchedule,
    ToneTarget,
};
use crate::error::{Error, Result};
use crate::many_body::{SparseOperator, StateVector};
use crate::C64;

type Coefficient = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// `coeff(t) · op`.
#[derive(Clone)]
pub struct DriveTerm {
    pub op: Arc<SparseOperator>,
    coeff: Coefficient,
}

impl DriveTerm {
    pub fn new(op: Arc<SparseOperator>, coeff: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Self { op, coeff: Arc::new(coeff) }
    }

    pub fn coeff(&self, t: f64) -> C64 {
        (self.coeff)(t)
    }
}

/// `H(t) = static + Σ coeff_k(t) op_k`; the caller supplies a Hermitian sum.
#[derive(Clone)]
pub struct TimeDependentHamiltonian {
    pub dim: usize,
    pub static_part: Option<SparseOperator>,
    pub drives: Vec<DriveTerm>,
}

impl TimeDependentHamiltonian {
    pub fn new(dim: usize) -> Self {
        Self { dim, static_part: None, drives: Vec::new() }
    }

    pub fn from_static(h: SparseOperator) -> Self {
        Self { dim: h.dim(), static_part: Some(h), drives: Vec::new() }
    }

    pub fn with_static(mut self, h: SparseOperator) -> Self {
        assert_eq!(h.dim(), self.dim);
        self.static_part = Some(match self.static_part.take() {
            Some(s) => s.add(&h),
            None => h,
        });
        self
    }

    pub fn with_drive(mut self, term: DriveTerm) -> Self {
        assert_eq!(term.op.dim(), self.dim);
        self.drives.push(term);
        self
    }

    /// `H(t)` as a sparse matrix.
    pub fn at(&self, t: f64) -> SparseOperator {
        let mut h = self.static_part.clone().unwrap_or_else(|| SparseOperator::zeros(self.dim));
        for d in &self.drives {
            h = h.add_scaled(&d.op, d.coeff(t));
        }
        h
    }
}

/// Evolution request.
#[derive(Clone)]
pub struct PropagatorJob {
    pub hamiltonian: Arc<TimeDependentHamiltonian>,
    pub t_start: f64,
    pub t_end: f64,
    /// Target 2-norm accuracy of each final state.
    pub tolerance: f64,
    pub initial: Vec<StateVector>,
    /// Optional cap on the step size.
    pub max_step: Option<f64>,
}

impl PropagatorJob {
    pub fn new(h: Arc<TimeDependentHamiltonian>, t_start: f64, t_end: f64, tolerance: f64, initial: Vec<StateVector>) -> Self {
        Self { hamiltonian: h, t_start, t_end, tolerance, initial, max_step: None }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub states: Vec<StateVector>,
    pub accepted_steps: Vec<usize>,
    pub rejected_steps: Vec<usize>,
}

/// Largest dimension the integrator accepts.
pub const MAX_DIM: usize = 1 << 14;
const MAX_STEPS: usize = 50_000_000;

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Dimension up to which all columns advance together, sharing coefficient
/// evaluations; larger problems run one column per task.
pub const BLOCK_DIM: usize = 1024;

/// Union sparsity pattern of the static part and every drive, so that one
/// matrix-vector product per column evaluates `H(t) y`.
struct MergedPlan {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    base: Vec<C64>,
    /// `(slot, value)` entries of each drive operator.
    drives: Vec<Vec<(usize, C64)>>,
    values: Vec<C64>,
}

impl MergedPlan {
    fn new(h: &TimeDependentHamiltonian) -> Self {
        let n = h.dim;
        let ops: Vec<&SparseOperator> = h.static_part.iter().chain(h.drives.iter().map(|d| d.op.as_ref())).collect();
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        for r in 0..n {
            let mut cols: Vec<usize> = ops.iter().flat_map(|o| o.row(r).map(|(c, _)| c)).collect();
            cols.sort_unstable();
            cols.dedup();
            indices.extend(cols);
            indptr[r + 1] = indices.len();
        }
        let slot = |r: usize, c: usize| indptr[r] + indices[indptr[r]..indptr[r + 1]].binary_search(&c).expect("column in union pattern");
        let mut base = vec![C64::new(0.0, 0.0); indices.len()];
        if let Some(st) = &h.static_part {
            for r in 0..n {
                for (c, v) in st.row(r) {
                    base[slot(r, c)] += v;
                }
            }
        }
        let drives = h
            .drives
            .iter()
            .map(|d| (0..n).flat_map(|r| d.op.row(r).map(move |(c, v)| (r, c, v)).collect::<Vec<_>>()).map(|(r, c, v)| (slot(r, c), v)).collect())
            .collect();
        let values = base.clone();
        Self { indptr, indices, base, drives, values }
    }

    /// `out_c = -i H(t) y_c` for every column of a column-major block.
    fn rhs(&mut self, h: &TimeDependentHamiltonian, t: f64, y: &[C64], out: &mut [C64]) {
        self.values.copy_from_slice(&self.base);
        for (d, entries) in h.drives.iter().zip(&self.drives) {
            let c = d.coeff(t);
            if c != C64::new(0.0, 0.0) {
                for &(k, v) in entries {
                    self.values[k] += c * v;
                }
            }
        }
        let n = h.dim;
        for (yc, oc) in y.chunks(n).zip(out.chunks_mut(n)) {
            for (r, o) in oc.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.indptr[r]..self.indptr[r + 1] {
                    acc += self.values[k] * yc[self.indices[k]];
                }
                *o = C64::new(acc.im, -acc.re);
            }
        }
    }
}

/// Integrates a column-major block; the step is accepted when every column's
/// error estimate is within its share of the tolerance.
fn integrate_block(h: &TimeDependentHamiltonian, y0: Vec<C64>, job: &PropagatorJob) -> Result<(Vec<C64>, usize, usize)> {
    let len = y0.len();
    let dim = h.dim;
    let span = job.t_end - job.t_start;
    let mut y = y0;
    if span == 0.0 {
        return Ok((y, 0, 0));
    }
    let dir = span.signum();
    let total = span.abs();
    let hmax = job.max_step.unwrap_or(total).min(total);
    let hmin = 1e-14 * total.max(1.0);
    let mut plan = MergedPlan::new(h);
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); len]; 7];
    let mut tmp = vec![C64::new(0.0, 0.0); len];
    let mut t = job.t_start;
    let mut step = (0.01 * total).min(hmax);
    let (mut acc, mut rej) = (0usize, 0usize);
    plan.rhs(h, t, &y, &mut k[0]);
    while dir * (job.t_end - t) > 0.0 {
        if acc + rej > MAX_STEPS {
            return Err(Error::Integrator("step budget exhausted".into()));
        }
        let hs = step.min((job.t_end - t).abs());
        let dt = dir * hs;
        for s in 1..7 {
            tmp.copy_from_slice(&y);
            for (j, a) in A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    let f = dt * a;
                    tmp.iter_mut().zip(&k[j]).for_each(|(x, kj)| *x += kj * f);
                }
            }
            let (_, rest) = k.split_at_mut(s);
            plan.rhs(h, t + C[s] * dt, &tmp, &mut rest[0]);
        }
        // k[6] is evaluated at the 5th-order solution held in tmp (FSAL)
        let mut err = 0.0f64;
        for col in 0..len / dim {
            let mut e2 = 0.0;
            for i in col * dim..(col + 1) * dim {
                let mut e = C64::new(0.0, 0.0);
                for s in 0..7 {
                    e += k[s][i] * (B5[s] - B4[s]);
                }
                e2 += (e * dt).norm_sqr();
            }
            err = err.max(e2.sqrt());
        }
        let allowed = job.tolerance * hs / total;
        if err <= allowed || hs <= hmin {
            if hs <= hmin && err > allowed {
                return Err(Error::Integrator(format!("non-convergence at minimum step {hs:.3e}")));
            }
            t += dt;
            if (job.t_end - t).abs() < hmin {
                t = job.t_end;
            }
            y.copy_from_slice(&tmp);
            k.swap(0, 6);
            acc += 1;
        } else {
            rej += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 5.0) };
        step = (hs * factor).min(hmax);
    }
    Ok((y, acc, rej))
}

/// Evolves every initial state. Small problems advance as one block; large
/// ones run one column per task.
pub fn evolve(job: &PropagatorJob) -> Result<EvolutionResult> {
    let h = &job.hamiltonian;
    if h.dim > MAX_DIM {
        return Err(Error::DimensionGuard { positions: h.dim.trailing_zeros() as usize, limit: 14 });
    }
    if !(job.tolerance > 0.0) || !job.t_start.is_finite() || !job.t_end.is_finite() {
        return Err(Error::InvalidArgument("tolerance must be positive and times finite".into()));
    }
    for s in &job.initial {
        if s.dim() != h.dim {
            return Err(Error::InvalidArgument("initial state dimension mismatch".into()));
        }
    }
    let mut res = EvolutionResult { states: Vec::new(), accepted_steps: Vec::new(), rejected_steps: Vec::new() };
    if job.initial.is_empty() {
        return Ok(res);
    }
    if h.dim <= BLOCK_DIM {
        let flat: Vec<C64> = job.initial.iter().flat_map(|s| s.amps.iter().copied()).collect();
        let (y, a, b) = integrate_block(h, flat, job)?;
        for col in y.chunks(h.dim) {
            res.states.push(StateVector::new(col.to_vec()));
            res.accepted_steps.push(a);
            res.rejected_steps.push(b);
        }
        return Ok(res);
    }
    let out: Vec<Result<(Vec<C64>, usize, usize)>> =
        job.initial.par_iter().map(|s| integrate_block(h, s.amps.clone(), job)).collect();
    for r in out {
        let (y, a, b) = r?;
        res.states.push(StateVector::new(y));
        res.accepted_steps.push(a);
        res.rejected_steps.push(b);
    }
    Ok(res)
}

/// Evolves one state and writes `t,<names…>` rows of real expectation values
/// every `stride` (plus the endpoints).
pub fn evolve_sampled<W: Write>(
    job: &PropagatorJob,
    stride: f64,
    observables: &[(&str, &SparseOperator)],
    mut out: W,
) -> Result<StateVector> {
    if job.initial.len() != 1 || !(stride > 0.0) {
        return Err(Error::InvalidArgument("sampling needs one initial state and a positive stride".into()));
    }
    let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
    let names: Vec<&str> = observables.iter().map(|o| o.0).collect();
    writeln!(out, "t,{}", names.join(",")).map_err(io)?;
    let mut state = job.initial[0].clone();
    let mut t = job.t_start;
    let n_seg = ((job.t_end - job.t_start).abs() / stride).ceil().max(1.0) as usize;
    let seg = (job.t_end - job.t_start) / n_seg as f64;
    for i in 0..=n_seg {
        let vals: Vec<String> = observables.iter().map(|(_, o)| format!("{:.12e}", o.expectation(&state.amps).re)).collect();
        writeln!(out, "{:.12e},{}", t, vals.join(",")).map_err(io)?;
        if i == n_seg {
            break;
        }
        let t1 = if i + 1 == n_seg { job.t_end } else { job.t_start + seg * (i + 1) as f64 };
        let sub = PropagatorJob {
            t_start: t,
            t_end: t1,
            tolerance: job.tolerance / n_seg as f64,
            initial: vec![state],
            ..job.clone()
        };
        state = evolve(&sub)?.states.remove(0);
        t = t1;
    }
    Ok(state)
}

/// `exp(-i H t)` of a Hermitian matrix.
pub fn expm_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -l * t)));
    v * d * v.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityReport {
    /// Smallest `|⟨ψ_target|ψ⟩|²` over the evolved states.
    pub state_fidelity: f64,
    /// `|Tr(U_target† P U P)|² / d²` when a subspace gate was compared.
    pub gate_fidelity: Option<f64>,
    /// Largest `1 - ‖Pψ‖²`.
    pub leakage: f64,
}

/// Result of evolving a subspace basis.
#[derive(Debug, Clone)]
pub struct SubspaceResult {
    /// `M_ij = ⟨b_i| U |b_j⟩`.
    pub matrix: DMatrix<C64>,
    pub leakage: Vec<f64>,
    pub final_states: Vec<StateVector>,
}

pub fn subspace_unitary(
    h: Arc<TimeDependentHamiltonian>,
    t_start: f64,
    t_end: f64,
    basis: &[StateVector],
    tolerance: f64,
) -> Result<SubspaceResult> {
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (a.inner(b) - C64::new(want, 0.0)).norm() > 1e-10 {
                return Err(Error::InvalidArgument("subspace basis is not orthonormal".into()));
            }
        }
    }
    let job = PropagatorJob::new(h, t_start, t_end, tolerance, basis.to_vec());
    let res = evolve(&job)?;
    let m = basis.len();
    let matrix = DMatrix::from_fn(m, m, |i, j| basis[i].inner(&res.states[j]));
    let leakage = (0..m)
        .map(|j| (1.0 - (0..m).map(|i| matrix[(i, j)].norm_sqr()).sum::<f64>()).clamp(0.0, 1.0))
        .collect();
    Ok(SubspaceResult { matrix, leakage, final_states: res.states })
}

/// `|Tr(T† A)|² / d²`, clamped to `[0, 1]`.
pub fn gate_fidelity(achieved: &DMatrix<C64>, target: &DMatrix<C64>) -> f64 {
    let d = target.nrows() as f64;
    let tr: C64 = (target.adjoint() * achieved).trace();
    (tr.norm_sqr() / (d * d)).clamp(0.0, 1.0)
}

/// Global phase taken from the largest-magnitude target entry.
pub fn global_phase(achieved: &DMatrix<C64>, target: &DMatrix<C64>) -> C64 {
    let mut best = (0, 0.0);
    for (k, z) in target.iter().enumerate() {
        if z.norm() > best.1 + 1e-12 {
            best = (k, z.norm());
        }
    }
    let (a, t) = (achieved.as_slice()[best.0], target.as_slice()[best.0]);
    if a.norm() == 0.0 || t.norm() == 0.0 {
        return C64::new(1.0, 0.0);
    }
    C64::from_polar(1.0, a.arg() - t.arg())
}

/// Largest entrywise deviation after removing the global phase.
pub fn phase_aligned_deviation(achieved: &DMatrix<C64>, target: &DMatrix<C64>) -> f64 {
    let ph = global_phase(achieved, target).conj();
    achieved.iter().zip(target.iter()).map(|(a, t)| (a * ph - t).norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersiveComparison {
    pub report: FidelityReport,
    pub fidelities: Vec<f64>,
    pub duration: f64,
    pub effective_time: f64,
}

/// Evolves under the full rotating-frame drive of `synthesis` and under the
/// static second-order effective Hamiltonian for the same `∫ s² dt`.
pub fn effective_vs_full(
    spec: &ChainSpec,
    hw: &HardwareSpec,
    synthesis: &PulseSynthesis,
    envelope: Envelope,
    initial: &[StateVector],
    tolerance: f64,
) -> Result<DispersiveComparison> {
    spec.validate()?;
    let m = spec.n_positions();
    let sched = synthesis.to_schedule(hw, envelope);
    let full = Arc::new(rotating_frame_hamiltonian(&sched, hw, m)?);
    let t_end = envelope.duration();
    let res = evolve(&PropagatorJob::new(full, 0.0, t_end, tolerance, initial.to_vec()))?;
    let model = effective_from_schedule(&sched, hw, m)?;
    let tau = envelope.area(2);
    let mut h_eff = model.second_order().to_dense();
    if model.resonant.nnz() > 0 {
        return Err(Error::InvalidArgument("synthesis schedules must not contain resonant terms".into()));
    }
    h_eff = (&h_eff + h_eff.adjoint()) * C64::new(0.5, 0.0);
    let u = expm_hermitian(&h_eff, tau);
    let fidelities: Vec<f64> = initial
        .iter()
        .zip(&res.states)
        .map(|(psi0, psi)| {
            let v = &u * nalgebra::DVector::from_column_slice(&psi0.amps);
            StateVector::new(v.iter().copied().collect()).fidelity(psi)
        })
        .collect();
    let worst = fidelities.iter().copied().fold(1.0, f64::min);
    Ok(DispersiveComparison {
        report: FidelityReport { state_fidelity: worst.clamp(0.0, 1.0), gate_fidelity: None, leakage: 0.0 },
        fidelities,
        duration: t_end,
        effective_time: tau,
    })
}

/// Integrator invariants for one state over `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HygieneReport {
    pub tolerance: f64,
    /// `|‖ψ(T)‖ - 1|`.
    pub norm_error: f64,
    /// `‖ψ_ε(T) - ψ_{ε/10}(T)‖`.
    pub tightening_change: f64,
    /// `‖U(0,T) U(T,0) ψ - ψ‖`.
    pub round_trip: f64,
}

impl HygieneReport {
    /// Norm within `10ε`, tightening within `ε`, round trip within `10ε`.
    pub fn pass(&self) -> bool {
        let e = self.tolerance;
        self.norm_error <= 10.0 * e && self.tightening_change <= e && self.round_trip <= 10.0 * e
    }
}

fn distance(a: &StateVector, b: &StateVector) -> f64 {
    a.amps.iter().zip(&b.amps).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn hygiene_check(h: Arc<TimeDependentHamiltonian>, t_start: f64, t_end: f64, psi: &StateVector, tolerance: f64) -> Result<HygieneReport> {
    let psi = psi.clone().normalized()?;
    let run = |a: f64, b: f64, tol: f64, s: StateVector| -> Result<StateVector> {
        Ok(evolve(&PropagatorJob::new(h.clone(), a, b, tol, vec![s]))?.states.remove(0))
    };
    let (coarse, fine) = rayon::join(
        || run(t_start, t_end, tolerance, psi.clone()),
        || run(t_start, t_end, tolerance / 10.0, psi.clone()),
    );
    let (coarse, fine) = (coarse?, fine?);
    let back = run(t_end, t_start, tolerance, coarse.clone())?;
    Ok(HygieneReport {
        tolerance,
        norm_error: (coarse.norm() - 1.0).abs(),
        tightening_change: distance(&coarse, &fine),
        round_trip: distance(&back, &psi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarkMeasurement {
    /// `-(E_1 - E_0)/2` of the driven HCB, from the accumulated relative phase.
    pub measured: f64,
    /// `s · d²/3η`.
    pub expected: f64,
    pub relative_error: f64,
}

/// Drives one HCB at `Ω ± 3η` with amplitude `d` and reads the level shift
/// from the phase of `(|0⟩ + |1⟩)/√2`.
pub fn measure_stark_shift(hw: &HardwareSpec, d: f64, sign: i8, envelope: Envelope, tolerance: f64) -> Result<StarkMeasurement> {
    hw.validate()?;
    envelope.validate(true)?;
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidArgument("sign must be ±1".into()));
    }
    let s = f64::from(sign);
    let sched = ToneSchedule {
        tones: vec![Tone {
            target: ToneTarget::Site { position: 1 },
            amplitude: d,
            carrier: hw.splitting(1) + s * 3.0 * hw.eta,
            phase: 0.0,
            envelope,
        }],
    };
    let h = Arc::new(rotating_frame_hamiltonian(&sched, hw, 1)?);
    let plus = StateVector::new(vec![C64::new(FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0)]);
    let out = evolve(&PropagatorJob::new(h, 0.0, envelope.duration(), tolerance, vec![plus]))?;
    let a = &out.states[0].amps;
    let phase = (a[1] / a[0]).arg();
    let measured = phase / (2.0 * envelope.area(2));
    let expected = s * d * d / (3.0 * hw.eta);
    Ok(StarkMeasurement { measured, expected, relative_error: ((measured - expected) / expected).abs() })
}
