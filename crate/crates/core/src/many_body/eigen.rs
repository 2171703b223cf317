use nalgebra::DMatrix;

use super::{SparseOperator, StateVector};
use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Largest dimension solved densely.
    pub dense_limit: usize,
    /// Residual target relative to the operator norm bound.
    pub tol: f64,
    /// Relative energy window treated as degenerate.
    pub degeneracy_tol: f64,
    pub max_restarts: usize,
    /// Krylov blocks per restart cycle.
    pub krylov_depth: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { dense_limit: 1024, tol: 1e-9, degeneracy_tol: 1e-8, max_restarts: 200, krylov_depth: 12 }
    }
}

/// Lowest eigenpairs in deterministic order.
#[derive(Debug, Clone)]
pub struct GroundManifold {
    pub energies: Vec<f64>,
    pub states: Vec<StateVector>,
    /// `Π_total` eigenvalue of each state.
    pub parities: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn ground_manifold(h: &SparseOperator, k: usize) -> Result<GroundManifold> {
    ground_manifold_with(h, k, &EigenOptions::default())
}

/// Lowest `k` eigenpairs ordered by energy, then `Π_total` (odd first), then
/// a canonical basis inside each degenerate parity block.
pub fn ground_manifold_with(h: &SparseOperator, k: usize, opts: &EigenOptions) -> Result<GroundManifold> {
    let dim = h.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={dim}")));
    }
    if !h.hermitian {
        return Err(Error::InvalidArgument("ground_manifold needs a hermitian operator".into()));
    }
    let scale = h.norm_bound().max(f64::MIN_POSITIVE);
    let (vals, vecs) = if dim <= opts.dense_limit {
        dense_lowest(h, (k + 8).min(dim))
    } else {
        krylov_lowest(h, k, opts, scale)?
    };
    let states = canonicalize(&vals, vecs, opts.degeneracy_tol * scale.max(1.0));
    let mut out = GroundManifold { energies: Vec::new(), states: Vec::new(), parities: Vec::new(), residuals: Vec::new() };
    for (e, v) in states.into_iter().take(k) {
        let hv = h.apply(&v);
        let r = hv.iter().zip(&v).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt();
        out.parities.push(parity_value(&v));
        out.energies.push(e);
        out.residuals.push(r);
        out.states.push(StateVector::new(v));
    }
    let worst = out.residuals.iter().copied().fold(0.0, f64::max);
    if worst > opts.tol * scale {
        return Err(Error::NoConvergence { residual: worst });
    }
    Ok(out)
}

fn parity_sign(s: usize) -> f64 {
    if s.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn parity_value(v: &[C64]) -> f64 {
    v.iter().enumerate().map(|(s, a)| parity_sign(s) * a.norm_sqr()).sum()
}

fn dense_lowest(h: &SparseOperator, m: usize) -> (Vec<f64>, Vec<Vec<C64>>) {
    let mut pairs: Vec<(f64, Vec<C64>)> = if h.is_real() {
        let eig = h.to_dense().map(|z| z.re).symmetric_eigen();
        (0..eig.eigenvalues.len())
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().map(|&x| C64::new(x, 0.0)).collect()))
            .collect()
    } else {
        let eig = h.to_dense().symmetric_eigen();
        (0..eig.eigenvalues.len()).map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())).collect()
    };
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.truncate(m);
    pairs.into_iter().unzip()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthogonalizes `v` against `basis` (two passes) and normalizes it.
fn orth_against(basis: &[Vec<C64>], v: &mut [C64]) -> f64 {
    let before = vnorm(v);
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
    let n = vnorm(v);
    if n > 1e-10 * before.max(f64::MIN_POSITIVE) {
        v.iter_mut().for_each(|x| *x /= n);
        n
    } else {
        0.0
    }
}

/// Restarted block Krylov subspace iteration with Rayleigh–Ritz extraction.
fn krylov_lowest(h: &SparseOperator, k: usize, opts: &EigenOptions, scale: f64) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let dim = h.dim();
    let b = (k + 4).min(dim);
    let mut block: Vec<Vec<C64>> = (0..b)
        .map(|j| {
            (0..dim)
                .map(|i| {
                    let x = (i as f64 + 1.0) * 0.618_033_988_749_895 + (j as f64 + 1.0) * 0.414_213_562_373_095;
                    C64::new((x * 12.9898).sin(), 0.25 * (x * 78.233).cos())
                })
                .collect()
        })
        .collect();
    let mut worst = f64::INFINITY;
    for _ in 0..opts.max_restarts {
        let mut q: Vec<Vec<C64>> = Vec::new();
        let mut hq: Vec<Vec<C64>> = Vec::new();
        let mut current = block.clone();
        for _ in 0..=opts.krylov_depth {
            let mut added = Vec::new();
            for mut v in current.drain(..) {
                if orth_against(&q, &mut v) > 0.0 {
                    let hv = h.apply(&v);
                    q.push(v);
                    hq.push(hv.clone());
                    added.push(hv);
                }
            }
            if added.is_empty() || q.len() + added.len() > dim {
                break;
            }
            current = added;
        }
        let m = q.len();
        let t = DMatrix::<C64>::from_fn(m, m, |r, c| dot(&q[r], &hq[c]));
        let t = (&t + t.adjoint()) * C64::new(0.5, 0.0);
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let mut vals = Vec::with_capacity(b);
        let mut vecs = Vec::with_capacity(b);
        worst = 0.0f64;
        for (rank, &i) in order.iter().take(b).enumerate() {
            let y = eig.eigenvectors.column(i);
            let mut v = vec![C64::new(0.0, 0.0); dim];
            let mut hv = vec![C64::new(0.0, 0.0); dim];
            for j in 0..m {
                axpy(y[j], &q[j], &mut v);
                axpy(y[j], &hq[j], &mut hv);
            }
            let e = eig.eigenvalues[i];
            if rank < k {
                let r = hv.iter().zip(&v).map(|(a, c)| (a - c * e).norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(r);
            }
            vals.push(e);
            vecs.push(v);
        }
        if worst <= 0.1 * opts.tol * scale {
            return Ok((vals, vecs));
        }
        block = vecs;
    }
    Err(Error::NoConvergence { residual: worst })
}

/// Splits into degenerate clusters, rotates each cluster into `Π_total`
/// eigenvectors and applies a canonical basis inside each parity block.
fn canonicalize(vals: &[f64], vecs: Vec<Vec<C64>>, tol: f64) -> Vec<(f64, Vec<C64>)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < vals.len() {
        let mut j = i + 1;
        while j < vals.len() && (vals[j] - vals[i]).abs() <= tol {
            j += 1;
        }
        let e = vals[i..j].iter().sum::<f64>() / (j - i) as f64;
        let cluster = &vecs[i..j];
        for sign in [-1.0, 1.0] {
            let block = parity_block(cluster, sign);
            for v in canonical_complex_basis(&block) {
                out.push((e, v));
            }
        }
        i = j;
    }
    out
}

/// Projection of a cluster onto one `Π_total` sector, orthonormalized.
fn parity_block(cluster: &[Vec<C64>], sign: f64) -> Vec<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for v in cluster {
        let mut p: Vec<C64> =
            v.iter().enumerate().map(|(s, a)| if parity_sign(s) == sign { *a } else { C64::new(0.0, 0.0) }).collect();
        if vnorm(&p) > 1e-6 && orth_against(&basis, &mut p) > 1e-6 {
            basis.push(p);
        }
    }
    basis
}

/// Basis of `span(cols)` obtained by projecting unit vectors in index order;
/// each vector's pivot entry is real and positive.
pub(crate) fn canonical_complex_basis(cols: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let Some(first) = cols.first() else { return Vec::new() };
    let dim = first.len();
    let mut remaining: Vec<Vec<C64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        if orth_against(&remaining, &mut v) > 0.0 {
            remaining.push(v);
        }
    }
    let want = remaining.len();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(want);
    for i in 0..dim {
        if out.len() == want {
            break;
        }
        let w2: f64 = remaining.iter().map(|r| r[i].norm_sqr()).sum();
        if w2 < 1e-8 {
            continue;
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        for r in &remaining {
            axpy(r[i].conj(), r, &mut v);
        }
        let n = vnorm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        let mut next = Vec::new();
        for mut r in remaining.drain(..) {
            let c = dot(&v, &r);
            axpy(-c, &v, &mut r);
            if orth_against(&next, &mut r) > 1e-6 {
                next.push(r);
            }
        }
        remaining = next;
        out.push(v);
    }
    out
}
