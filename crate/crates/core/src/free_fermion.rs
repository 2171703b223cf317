//! Exact solution of the quadratic problem in the Majorana representation.
//!
//! A term list is rewritten as `H = (i/4) γᵀ A γ + offset` with `A` real and
//! antisymmetric. Majorana index `2k` is `γ_A` of mode `k`, `2k+1` is `γ_B`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::{build_diii_terms, ChainSpec, FermionTerm, FermionTermList};
use crate::error::{Error, Result};
use crate::C64;

/// Real antisymmetric single-particle matrix plus the scalar offset.
#[derive(Debug, Clone, PartialEq)]
pub struct MajoranaMatrix {
    pub a: DMatrix<f64>,
    pub offset: f64,
}

/// Majorana modes with `λ` below a threshold.
#[derive(Debug, Clone)]
pub struct ZeroModeSet {
    pub modes: Vec<(DVector<f64>, f64)>,
    pub zero_threshold: f64,
    /// Smallest singular value above the threshold, if any.
    pub gap: Option<f64>,
}

const REALITY_TOL: f64 = 1e-12;

pub fn build_majorana_matrix(terms: &FermionTermList) -> Result<MajoranaMatrix> {
    terms.check_hermitian()?;
    let n = 2 * terms.n_modes();
    let w: Vec<(C64, C64)> = terms.modes.iter().map(|m| m.species.majorana_weights()).collect();
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut offset = C64::new(0.0, 0.0);
    let mut add = |k: C64, p: usize, p_dag: bool, q: usize, q_dag: bool| {
        let wp = if p_dag { [w[p].0.conj(), w[p].1.conj()] } else { [w[p].0, w[p].1] };
        let wq = if q_dag { [w[q].0.conj(), w[q].1.conj()] } else { [w[q].0, w[q].1] };
        for x in 0..2 {
            for y in 0..2 {
                m[(2 * p + x, 2 * q + y)] += k * wp[x] * wq[y];
            }
        }
    };
    for t in &terms.terms {
        match *t {
            FermionTerm::Hop { create, annihilate, coeff } => add(coeff, create, true, annihilate, false),
            FermionTerm::Pair { first, second, coeff, creation } => add(coeff, first, creation, second, creation),
            FermionTerm::Chem { mode, coeff, offset: o } => {
                add(C64::new(coeff, 0.0), mode, true, mode, false);
                offset += o;
            }
        }
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for k in 0..n {
        offset += m[(k, k)];
        for l in (k + 1)..n {
            let v = C64::new(0.0, -2.0) * (m[(k, l)] - m[(l, k)]);
            if v.im.abs() > REALITY_TOL * scale {
                return Err(Error::NonHermitian(format!("complex Majorana entry at ({k},{l})")));
            }
            a[(k, l)] = v.re;
            a[(l, k)] = -v.re;
        }
    }
    if offset.im.abs() > REALITY_TOL * scale {
        return Err(Error::NonHermitian("complex scalar offset".into()));
    }
    Ok(MajoranaMatrix { a, offset: offset.re })
}

impl MajoranaMatrix {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Singular values in ascending order (each quasiparticle energy twice).
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.a.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(f64::total_cmp);
        s
    }

    /// Quasiparticle energies `λ_k ≥ 0`, ascending, one per fermionic mode.
    pub fn quasiparticle_energies(&self) -> Vec<f64> {
        self.singular_values().chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    }

    pub fn ground_energy(&self) -> f64 {
        self.offset - 0.5 * self.quasiparticle_energies().iter().sum::<f64>()
    }

    /// All `2^n` many-body levels, ascending.
    pub fn many_body_spectrum(&self) -> Vec<f64> {
        let lam = self.quasiparticle_energies();
        let e0 = self.ground_energy();
        let mut out = Vec::with_capacity(1 << lam.len());
        for mask in 0usize..(1 << lam.len()) {
            let e: f64 = lam.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, l)| l).sum();
            out.push(e0 + e);
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Eigenvalues of `(i/2) A`, ascending.
    pub fn pair_energies(&self) -> Vec<f64> {
        let n = self.dim();
        let h = DMatrix::<C64>::from_fn(n, n, |r, c| C64::new(0.0, 0.5 * self.a[(r, c)]));
        let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Bulk gap: fifth-smallest singular value, falling back to `‖A‖`, then 1.
    pub fn bulk_gap(&self) -> f64 {
        let s = self.singular_values();
        match s.get(4) {
            Some(&g) if g > 0.0 => g,
            _ => {
                let nrm = self.a.norm();
                if nrm > 0.0 {
                    nrm
                } else {
                    1.0
                }
            }
        }
    }
}

/// Deterministic basis of a subspace: canonical vectors are projected in
/// order and kept when their projection survives.
pub(crate) fn canonical_basis(cols: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let Some(first) = cols.first() else { return Vec::new() };
    let dim = first.len();
    let mut remaining: Vec<DVector<f64>> = orthonormalize(cols);
    let mut out = Vec::new();
    for i in 0..dim {
        if remaining.is_empty() {
            break;
        }
        let mut v = DVector::<f64>::zeros(dim);
        for r in &remaining {
            v.axpy(r[i], r, 1.0);
        }
        let nrm = v.norm();
        if nrm * nrm < 1e-8 {
            continue;
        }
        v /= nrm;
        for r in remaining.iter_mut() {
            let c = v.dot(r);
            r.axpy(-c, &v, 1.0);
        }
        remaining = orthonormalize(&remaining);
        out.push(v);
    }
    out
}

fn orthonormalize(cols: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            for u in &out {
                let p = u.dot(&v);
                v.axpy(-p, u, 1.0);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-6 {
            out.push(v / nrm);
        }
    }
    out
}

/// Majorana eigenmodes with `|λ| < threshold` (default `1e-10 ×` bulk gap).
pub fn zero_modes(a: &MajoranaMatrix, threshold: Option<f64>) -> Result<ZeroModeSet> {
    let thr = match threshold {
        Some(t) if t <= 0.0 || !t.is_finite() => {
            return Err(Error::InvalidArgument(format!("zero-mode threshold must be positive, got {t}")))
        }
        Some(t) => t,
        None => 1e-10 * a.bulk_gap(),
    };
    let svd = a.a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut null = Vec::new();
    let mut gap: Option<f64> = None;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < thr {
            null.push(vt.row(i).transpose());
        } else {
            gap = Some(gap.map_or(s, |g: f64| g.min(s)));
        }
    }
    let modes = canonical_basis(&null)
        .into_iter()
        .map(|v| {
            let lam = (&a.a * &v).norm();
            (v, lam)
        })
        .collect();
    Ok(ZeroModeSet { modes, zero_threshold: thr, gap })
}

impl ZeroModeSet {
    pub fn count(&self) -> usize {
        self.modes.len()
    }

    /// Weight of each mode on the Majoranas of the given fermionic sites
    /// (each site owns four Majoranas).
    pub fn weight_on_sites(&self, sites: &[usize]) -> Vec<f64> {
        self.modes
            .iter()
            .map(|(v, _)| {
                sites
                    .iter()
                    .flat_map(|&j| (4 * (j - 1))..(4 * j))
                    .map(|k| v[k] * v[k])
                    .sum()
            })
            .collect()
    }
}

/// One grid point of a phase scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseRow {
    pub w: f64,
    pub delta: f64,
    pub mu: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_zero: usize,
    pub splitting: f64,
    pub gap: f64,
}

/// Evaluates zero-mode diagnostics at every `(w, Δ, μ)` point, in grid order.
pub fn phase_scan(grid: &[(f64, f64, f64)], n: usize) -> Result<Vec<PhaseRow>> {
    if grid.is_empty() || n < 2 {
        return Err(Error::InvalidArgument("phase scan needs a non-empty grid and N >= 2".into()));
    }
    grid.par_iter()
        .map(|&(w, delta, mu)| {
            let m = build_majorana_matrix(&build_diii_terms(&ChainSpec::new(n, w, delta, mu))?)?;
            let s = m.singular_values();
            let gap = s[4];
            let splitting = s[3];
            let thr = 1e-10 * m.bulk_gap();
            let n_zero = s.iter().filter(|&&x| x < thr).count();
            Ok(PhaseRow { w, delta, mu, n, n_zero, splitting, gap })
        })
        .collect()
}

pub fn write_phase_csv<W: Write>(rows: &[PhaseRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "w,delta,mu,N,n_zero,splitting,gap")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{:e},{:e}", r.w, r.delta, r.mu, r.n, r.n_zero, r.splitting, r.gap)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct IdealPointReport {
    pub n: usize,
    pub w: f64,
    pub pair_energies: Vec<f64>,
    pub zero_count: usize,
    pub bulk_count: usize,
    /// Ground energy minus the constant offset.
    pub ground_energy: f64,
    pub bulk_gap: f64,
    pub consistent: bool,
}

/// Checks the single-particle spectrum at `w = Δ`, `μ = 0`.
pub fn ideal_point_check(n: usize, w: f64) -> Result<IdealPointReport> {
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("ideal point requires w > 0".into()));
    }
    let m = build_majorana_matrix(&build_diii_terms(&ChainSpec::ideal(n, w))?)?;
    let e = m.pair_energies();
    let tol = 1e-10 * w;
    let zero_count = e.iter().filter(|x| x.abs() < tol).count();
    let plus = e.iter().filter(|x| (*x - w).abs() < tol).count();
    let minus = e.iter().filter(|x| (*x + w).abs() < tol).count();
    let ground_energy = m.ground_energy() - m.offset;
    let bulk_gap = m.quasiparticle_energies().iter().copied().find(|&l| l > tol).unwrap_or(f64::INFINITY);
    let bulk = 2 * (n - 1);
    let consistent = zero_count == 4
        && plus == bulk
        && minus == bulk
        && (ground_energy + 2.0 * bulk as f64 * w / 2.0).abs() < 1e-10 * (1.0 + w * n as f64)
        && (n == 1 || (bulk_gap - 2.0 * w).abs() < tol);
    Ok(IdealPointReport { n, w, pair_energies: e, zero_count, bulk_count: plus, ground_energy, bulk_gap, consistent })
}
