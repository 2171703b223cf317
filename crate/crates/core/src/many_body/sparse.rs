use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::C64;

const PAR_ROWS: usize = 4096;

/// Complex operator in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    /// Set when the operator equals its adjoint to `1e-14` (relative to its
    /// largest entry).
    pub hermitian: bool,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, mut trips: Vec<(usize, usize, C64)>) -> Self {
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<C64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(trips.len());
        for (r, c, v) in trips {
            assert!(r < dim && c < dim, "triplet ({r},{c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                rows.push(r);
                last = Some((r, c));
            }
        }
        let mut ki = Vec::with_capacity(indices.len());
        let mut kv = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != C64::new(0.0, 0.0) {
                indptr[r + 1] += 1;
                ki.push(c);
                kv.push(v);
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        let mut op = Self { dim, indptr, indices: ki, values: kv, hermitian: false };
        op.hermitian = op.is_hermitian(1e-14);
        op
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, indptr: vec![0; dim + 1], indices: Vec::new(), values: Vec::new(), hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal((0..dim).map(|_| C64::new(1.0, 0.0)).collect())
    }

    pub fn diagonal(diag: Vec<C64>) -> Self {
        let dim = diag.len();
        Self::from_triplets(dim, diag.into_iter().enumerate().map(|(i, v)| (i, i, v)).collect())
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != C64::new(0.0, 0.0) {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzero entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let s = self.indptr[r]..self.indptr[r + 1];
        self.indices[s.clone()].iter().copied().zip(self.values[s].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        (0..self.dim).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(k, _)| k == c).map_or(C64::new(0.0, 0.0), |(_, v)| v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max absolute row sum; an upper bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(1.0);
        self.sub(&self.adjoint_raw()).max_abs() <= tol * scale
    }

    fn adjoint_raw(&self) -> Self {
        let mut counts = vec![0usize; self.dim + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for r in 0..self.dim {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![C64::new(0.0, 0.0); self.nnz()];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let k = next[c];
                indices[k] = r;
                values[k] = v.conj();
                next[c] += 1;
            }
        }
        Self { dim: self.dim, indptr: counts, indices, values, hermitian: self.hermitian }
    }

    pub fn adjoint(&self) -> Self {
        self.adjoint_raw()
    }

    fn combine(&self, other: &Self, alpha: C64, beta: C64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim {
            t.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, beta * v)));
        }
        Self::from_triplets(self.dim, t)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim {
            t.extend(self.row(r).map(|(c, v)| (r, c, v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, -v)));
        }
        let mut trips = t;
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        // hermiticity of a difference is not needed here; avoid recursion
        let mut out = Self::zeros(self.dim);
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); self.dim];
        for (r, c, v) in trips {
            match rows[r].last_mut() {
                Some((lc, lv)) if *lc == c => *lv += v,
                _ => rows[r].push((c, v)),
            }
        }
        for (r, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                if v != C64::new(0.0, 0.0) {
                    out.indices.push(c);
                    out.values.push(v);
                }
            }
            out.indptr[r + 1] = out.indices.len();
        }
        out.hermitian = false;
        out
    }

    pub fn add_scaled(&self, other: &Self, beta: C64) -> Self {
        self.combine(other, C64::new(1.0, 0.0), beta)
    }

    pub fn scale(&self, alpha: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out.hermitian = out.is_hermitian(1e-14);
        out
    }

    /// Operator product `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let rows: Vec<Vec<(usize, C64)>> = (0..self.dim)
            .into_par_iter()
            .map_init(
                || (vec![C64::new(0.0, 0.0); self.dim], vec![false; self.dim], Vec::new()),
                |(acc, used, touched), r| {
                    touched.clear();
                    for (k, a) in self.row(r) {
                        for (c, b) in other.row(k) {
                            if !used[c] {
                                used[c] = true;
                                touched.push(c);
                            }
                            acc[c] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    let mut out = Vec::with_capacity(touched.len());
                    for &c in touched.iter() {
                        out.push((c, acc[c]));
                        acc[c] = C64::new(0.0, 0.0);
                        used[c] = false;
                    }
                    out
                },
            )
            .collect();
        let t = rows.into_iter().enumerate().flat_map(|(r, row)| row.into_iter().map(move |(c, v)| (r, c, v)));
        Self::from_triplets(self.dim, t.collect())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// `y = self · x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row = |r: usize| self.row(r).fold(C64::new(0.0, 0.0), |s, (c, v)| s + v * x[c]);
        if self.dim >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
        } else {
            y.iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
        }
    }

    /// `y += alpha · self · x`.
    pub fn apply_add(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        let row = |r: usize| self.row(r).fold(C64::new(0.0, 0.0), |s, (c, v)| s + v * x[c]);
        if self.dim >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr += alpha * row(r));
        } else {
            y.iter_mut().enumerate().for_each(|(r, yr)| *yr += alpha * row(r));
        }
    }

    pub fn expectation(&self, x: &[C64]) -> C64 {
        let y = self.apply(x);
        x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum()
    }

    /// Matrix element `⟨u|self|v⟩`.
    pub fn element(&self, u: &[C64], v: &[C64]) -> C64 {
        let y = self.apply(v);
        u.iter().zip(&y).map(|(a, b)| a.conj() * b).sum()
    }

    /// Restriction to the index set `keep`, re-indexed in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.dim];
        for (i, &k) in keep.iter().enumerate() {
            map[k] = i;
        }
        let mut t = Vec::new();
        for (i, &r) in keep.iter().enumerate() {
            for (c, v) in self.row(r) {
                if map[c] != usize::MAX {
                    t.push((i, map[c], v));
                }
            }
        }
        Self::from_triplets(keep.len(), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let op = SparseOperator::from_triplets(
            3,
            vec![(0, 1, c64(1.0, 0.0)), (0, 1, c64(-1.0, 0.0)), (2, 2, c64(2.0, 0.0)), (1, 0, c64(0.0, 1.0))],
        );
        assert_eq!(op.nnz(), 2);
        assert_eq!(op.get(2, 2), c64(2.0, 0.0));
        assert!(!op.hermitian);
    }

    #[test]
    fn product_matches_dense() {
        let a = SparseOperator::from_triplets(3, vec![(0, 1, c64(1.0, 2.0)), (1, 2, c64(0.5, 0.0)), (2, 0, c64(0.0, -1.0))]);
        let b = SparseOperator::from_triplets(3, vec![(1, 1, c64(3.0, 0.0)), (2, 0, c64(1.0, 1.0)), (0, 2, c64(2.0, 0.0))]);
        let d = a.to_dense() * b.to_dense();
        assert!((a.mul(&b).to_dense() - d).norm() < 1e-15);
        let h = a.add(&a.adjoint());
        assert!(h.hermitian);
        assert!((a.adjoint().to_dense() - a.to_dense().adjoint()).norm() == 0.0);
    }
}
