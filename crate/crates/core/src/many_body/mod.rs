//! Exact many-body engine on the `2^M` hard-core-boson occupation basis.
//!
//! Basis index bit `p - 1` holds the occupation of linear position `p`.
//! Two independent assembly routes exist: hard-core-boson monomials with
//! explicit parity strings, and fermionic term lists through Jordan–Wigner
//! signs in the same order.

mod eigen;
mod sparse;

use std::io::{Read, Write};

use serde::Serialize;

pub use eigen::{ground_manifold, ground_manifold_with, EigenOptions, GroundManifold};
pub use sparse::SparseOperator;

use crate::chain_model::{ChainSpec, FermionTerm, FermionTermList, Leg, SiteIndex};
use crate::error::{Error, Result};
use crate::{c64, C64};

/// Default cap on the number of hard-core bosons.
pub const DEFAULT_MAX_POSITIONS: usize = 14;

/// Normalized many-body state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite state".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Little-endian dump: `u64` dimension followed by `(re, im)` pairs.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&(self.amps.len() as u64).to_le_bytes())?;
        for a in &self.amps {
            out.write_all(&a.re.to_le_bytes())?;
            out.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> std::io::Result<Self> {
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut amps = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            input.read_exact(&mut b8)?;
            amps.push(C64::new(re, f64::from_le_bytes(b8)));
        }
        Ok(Self { amps })
    }
}

/// `Π_{p∈S} (1 - 2 n_p)` over 1-based linear positions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ParityString {
    pub positions: Vec<usize>,
}

impl ParityString {
    pub fn new(positions: Vec<usize>) -> Self {
        Self { positions }
    }

    pub fn single(p: usize) -> Self {
        Self { positions: vec![p] }
    }

    fn mask(&self) -> usize {
        self.positions.iter().fold(0, |m, &p| m ^ (1 << (p - 1)))
    }

    /// `±1` on basis state `s`.
    pub fn sign(&self, s: usize) -> f64 {
        if (s & self.mask()).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn to_operator(&self, n_positions: usize) -> SparseOperator {
        let m = self.mask();
        SparseOperator::diagonal(
            (0..1usize << n_positions)
                .map(|s| c64(if (s & m).count_ones() % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
                .collect(),
        )
    }
}

/// Global parity `Π_total` over all positions.
pub fn total_parity(n_positions: usize) -> SparseOperator {
    ParityString::new((1..=n_positions).collect()).to_operator(n_positions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HcbOp {
    Create,
    Annihilate,
    Number,
}

/// `coeff · ops[0] ops[1] … · string`; the string acts first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BosonTerm {
    pub coeff: C64,
    pub ops: Vec<(usize, HcbOp)>,
    pub string: ParityString,
}

impl BosonTerm {
    pub fn new(coeff: C64, ops: Vec<(usize, HcbOp)>, string: ParityString) -> Self {
        Self { coeff, ops, string }
    }

    /// Image of basis state `s`, if nonzero.
    pub fn act(&self, s: usize) -> Option<(usize, C64)> {
        let amp = self.coeff * self.string.sign(s);
        let mut st = s;
        for &(p, op) in self.ops.iter().rev() {
            let bit = 1usize << (p - 1);
            match op {
                HcbOp::Create if st & bit == 0 => st |= bit,
                HcbOp::Annihilate if st & bit != 0 => st &= !bit,
                HcbOp::Number if st & bit != 0 => {}
                _ => return None,
            }
        }
        Some((st, amp))
    }

    /// Hermitian conjugate (the string commutes with ops on other positions).
    pub fn adjoint(&self) -> BosonTerm {
        let ops = self
            .ops
            .iter()
            .rev()
            .map(|&(p, op)| {
                let op = match op {
                    HcbOp::Create => HcbOp::Annihilate,
                    HcbOp::Annihilate => HcbOp::Create,
                    HcbOp::Number => HcbOp::Number,
                };
                (p, op)
            })
            .collect();
        BosonTerm { coeff: self.coeff.conj(), ops, string: self.string.clone() }
    }
}

fn guard(n_positions: usize, limit: usize) -> Result<()> {
    if n_positions > limit {
        Err(Error::DimensionGuard { positions: n_positions, limit })
    } else {
        Ok(())
    }
}

/// Sums boson monomials plus a constant into a sparse matrix.
pub fn hcb_operator(n_positions: usize, terms: &[BosonTerm], constant: f64) -> SparseOperator {
    let dim = 1usize << n_positions;
    let mut t = Vec::with_capacity(dim * (terms.len() / 4 + 1));
    for s in 0..dim {
        if constant != 0.0 {
            t.push((s, s, c64(constant, 0.0)));
        }
        for term in terms {
            if let Some((r, v)) = term.act(s) {
                t.push((r, s, v));
            }
        }
    }
    SparseOperator::from_triplets(dim, t)
}

/// Hard-core-boson monomials of the bosonized chain and their constant.
///
/// Plus-leg bonds carry `P̄_j` (position of `(j,-)`), minus-leg bonds carry
/// `P_{j+1}` (position of `(j+1,+)`).
pub fn bosonized_terms(spec: &ChainSpec) -> Result<(Vec<BosonTerm>, f64)> {
    spec.validate()?;
    let (w, d, mu) = (spec.w, spec.delta_pair, spec.mu);
    let mut terms = Vec::new();
    let mut push_hc = |t: BosonTerm| {
        terms.push(t.adjoint());
        terms.push(t);
    };
    for j in spec.bonds() {
        let (p, q) = (SiteIndex::plus(j).position(), SiteIndex::plus(j + 1).position());
        let s = ParityString::single(SiteIndex::minus(j).position());
        push_hc(BosonTerm::new(c64(-w, 0.0), vec![(p, HcbOp::Create), (q, HcbOp::Annihilate)], s.clone()));
        push_hc(BosonTerm::new(c64(d, 0.0), vec![(q, HcbOp::Annihilate), (p, HcbOp::Annihilate)], s));
        let (p, q) = (SiteIndex::minus(j).position(), SiteIndex::minus(j + 1).position());
        let s = ParityString::single(SiteIndex::plus(j + 1).position());
        push_hc(BosonTerm::new(c64(-w, 0.0), vec![(p, HcbOp::Create), (q, HcbOp::Annihilate)], s.clone()));
        push_hc(BosonTerm::new(c64(-d, 0.0), vec![(q, HcbOp::Annihilate), (p, HcbOp::Annihilate)], s));
    }
    let m = spec.n_positions();
    for p in 1..=m {
        terms.push(BosonTerm::new(c64(-mu, 0.0), vec![(p, HcbOp::Number)], ParityString::default()));
    }
    Ok((terms, 0.5 * mu * m as f64))
}

pub fn assemble_bosonized(spec: &ChainSpec) -> Result<SparseOperator> {
    assemble_bosonized_with(spec, DEFAULT_MAX_POSITIONS)
}

pub fn assemble_bosonized_with(spec: &ChainSpec, max_positions: usize) -> Result<SparseOperator> {
    guard(spec.n_positions(), max_positions)?;
    let (terms, constant) = bosonized_terms(spec)?;
    Ok(hcb_operator(spec.n_positions(), &terms, constant))
}

/// Fermionic operator product applied right to left with Jordan–Wigner
/// signs; positions are 0-based bits here.
fn fermion_act(ops: &[(usize, bool)], s: usize) -> Option<(usize, f64)> {
    let mut st = s;
    let mut sign = 1.0;
    for &(p, dag) in ops.iter().rev() {
        let bit = 1usize << p;
        if (st & bit != 0) == dag {
            return None;
        }
        if (st & (bit - 1)).count_ones() % 2 == 1 {
            sign = -sign;
        }
        st ^= bit;
    }
    Some((st, sign))
}

/// Many-body matrix of a fermionic term list; mode `k` is bit `k`.
pub fn fermion_operator(list: &FermionTermList) -> Result<SparseOperator> {
    list.check_hermitian()?;
    let n = list.n_modes();
    let dim = 1usize << n;
    let mut t = Vec::new();
    for s in 0..dim {
        for term in &list.terms {
            let (ops, coeff, offset): (Vec<(usize, bool)>, C64, f64) = match *term {
                FermionTerm::Hop { create, annihilate, coeff } => (vec![(create, true), (annihilate, false)], coeff, 0.0),
                FermionTerm::Pair { first, second, coeff, creation } => {
                    (vec![(first, creation), (second, creation)], coeff, 0.0)
                }
                FermionTerm::Chem { mode, coeff, offset } => (vec![(mode, true), (mode, false)], c64(coeff, 0.0), offset),
            };
            if offset != 0.0 {
                t.push((s, s, c64(offset, 0.0)));
            }
            if let Some((r, sg)) = fermion_act(&ops, s) {
                t.push((r, s, coeff * sg));
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, t))
}

pub fn assemble_fermionic_oracle(spec: &ChainSpec) -> Result<SparseOperator> {
    assemble_fermionic_oracle_with(spec, DEFAULT_MAX_POSITIONS)
}

pub fn assemble_fermionic_oracle_with(spec: &ChainSpec, max_positions: usize) -> Result<SparseOperator> {
    guard(spec.n_positions(), max_positions)?;
    fermion_operator(&crate::chain_model::build_diii_terms(spec)?)
}

/// Linear combination `Σ coeff · c_p` / `c†_p` with Jordan–Wigner strings.
fn linear_fermion(n_positions: usize, p: usize, ann: C64, cre: C64) -> SparseOperator {
    let dim = 1usize << n_positions;
    let mut t = Vec::with_capacity(dim);
    for s in 0..dim {
        for (dag, k) in [(false, ann), (true, cre)] {
            if let Some((r, sg)) = fermion_act(&[(p - 1, dag)], s) {
                t.push((r, s, k * sg));
            }
        }
    }
    SparseOperator::from_triplets(dim, t)
}

/// Fermion annihilation operator at a site, with its string.
pub fn annihilator(n_positions: usize, site: SiteIndex) -> SparseOperator {
    linear_fermion(n_positions, site.position(), c64(1.0, 0.0), c64(0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MajoranaKind {
    A,
    B,
}

/// `γ_A = i(a - a†)`, `γ_B = a + a†`, `γ̄_A = ā + ā†`, `γ̄_B = -i(ā - ā†)`.
pub fn majorana_operator(n_positions: usize, site: SiteIndex, kind: MajoranaKind) -> SparseOperator {
    let (ann, cre) = match (site.leg, kind) {
        (Leg::Plus, MajoranaKind::A) => (c64(0.0, 1.0), c64(0.0, -1.0)),
        (Leg::Plus, MajoranaKind::B) => (c64(1.0, 0.0), c64(1.0, 0.0)),
        (Leg::Minus, MajoranaKind::A) => (c64(1.0, 0.0), c64(1.0, 0.0)),
        (Leg::Minus, MajoranaKind::B) => (c64(0.0, -1.0), c64(0.0, 1.0)),
    };
    linear_fermion(n_positions, site.position(), ann, cre)
}

/// End Majoranas of a (sub)chain: `γ_A`, `γ̄_A` on the first site and
/// `γ_B`, `γ̄_B` on the last.
#[derive(Debug, Clone)]
pub struct EndMajoranas {
    pub gamma_a: SparseOperator,
    pub gamma_bar_a: SparseOperator,
    pub gamma_b: SparseOperator,
    pub gamma_bar_b: SparseOperator,
}

pub fn end_majoranas(n_positions: usize, first: usize, last: usize) -> EndMajoranas {
    EndMajoranas {
        gamma_a: majorana_operator(n_positions, SiteIndex::plus(first), MajoranaKind::A),
        gamma_bar_a: majorana_operator(n_positions, SiteIndex::minus(first), MajoranaKind::A),
        gamma_b: majorana_operator(n_positions, SiteIndex::plus(last), MajoranaKind::B),
        gamma_bar_b: majorana_operator(n_positions, SiteIndex::minus(last), MajoranaKind::B),
    }
}

pub fn majorana_end_operators(spec: &ChainSpec) -> Result<EndMajoranas> {
    spec.validate()?;
    guard(spec.n_positions(), DEFAULT_MAX_POSITIONS)?;
    Ok(end_majoranas(spec.n_positions(), 1, spec.n_fermion_sites))
}

/// `n_p` for a 1-based position.
pub fn number_operator(n_positions: usize, p: usize) -> SparseOperator {
    let bit = 1usize << (p - 1);
    SparseOperator::diagonal((0..1usize << n_positions).map(|s| c64(if s & bit != 0 { 1.0 } else { 0.0 }, 0.0)).collect())
}

/// Ascending eigenvalues of a Hermitian operator by dense diagonalization.
pub fn dense_spectrum(h: &SparseOperator) -> Vec<f64> {
    let mut e: Vec<f64> = if h.is_real() {
        h.to_dense().map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        h.to_dense().symmetric_eigenvalues().iter().copied().collect()
    };
    e.sort_by(f64::total_cmp);
    e
}

pub fn max_level_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::build_spin_terms;
    use proptest::prelude::*;

    #[test]
    fn single_site_spectrum() {
        let e = dense_spectrum(&assemble_bosonized(&ChainSpec::new(1, 1.0, 1.0, 1.5)).unwrap());
        let want = [-1.5, 0.0, 0.0, 1.5];
        assert!(max_level_deviation(&e, &want) < 1e-14);
    }

    #[test]
    fn bosonized_matches_oracle_two_sites() {
        let spec = ChainSpec::ideal(2, 1.0);
        let a = dense_spectrum(&assemble_bosonized(&spec).unwrap());
        let b = dense_spectrum(&assemble_fermionic_oracle(&spec).unwrap());
        assert_eq!(a.len(), 16);
        assert!(max_level_deviation(&a, &b) < 1e-10);
    }

    #[test]
    fn ideal_three_sites_degeneracy_and_gap() {
        let e = dense_spectrum(&assemble_bosonized(&ChainSpec::ideal(3, 1.0)).unwrap());
        assert!((e[3] - e[0]).abs() < 1e-10);
        assert!((e[4] - e[0] - 2.0).abs() < 1e-10);
        assert!((e[0] + 4.0).abs() < 1e-10);
    }

    #[test]
    fn chemical_offsets_give_traceless_oracle() {
        // Σ_modes -μ(n - 1/2) has zero trace
        let h = assemble_fermionic_oracle(&ChainSpec::new(3, 1.0, 1.0, 2.0)).unwrap();
        let tr: C64 = (0..h.dim()).map(|i| h.get(i, i)).sum();
        assert!(tr.norm() < 1e-10);
    }

    #[test]
    fn diagonal_oracle_without_bonds() {
        let spec = ChainSpec::new(2, 0.0, 0.0, 0.7);
        let h = assemble_fermionic_oracle(&spec).unwrap();
        for r in 0..h.dim() {
            for (c, v) in h.row(r) {
                assert!(c == r || v.norm() == 0.0);
            }
        }
        let e = dense_spectrum(&h);
        let mut want: Vec<f64> = (0..16u32).map(|s| -0.7 * (s.count_ones() as f64 - 2.0)).collect();
        want.sort_by(f64::total_cmp);
        assert!(max_level_deviation(&e, &want) < 1e-14);
    }

    #[test]
    fn spin_form_is_isospectral() {
        let spec = ChainSpec::new(2, 0.8, -1.3, 0.4);
        let a = dense_spectrum(&fermion_operator(&build_spin_terms(&spec).unwrap()).unwrap());
        let b = dense_spectrum(&assemble_fermionic_oracle(&spec).unwrap());
        assert!(max_level_deviation(&a, &b) < 1e-10);
    }

    #[test]
    fn guard_rejects_large_chains() {
        let spec = ChainSpec::ideal(8, 1.0);
        assert!(matches!(assemble_bosonized(&spec), Err(Error::DimensionGuard { positions: 16, limit: 14 })));
    }

    #[test]
    fn end_majorana_algebra() {
        let spec = ChainSpec::ideal(3, 1.0);
        let h = assemble_bosonized(&spec).unwrap();
        let g = majorana_end_operators(&spec).unwrap();
        let id = SparseOperator::identity(64);
        for op in [&g.gamma_a, &g.gamma_b, &g.gamma_bar_a, &g.gamma_bar_b] {
            assert!(op.hermitian);
            assert!(op.mul(op).sub(&id).max_abs() < 1e-15);
        }
        let pa = g.gamma_a.mul(&g.gamma_b).scale(c64(0.0, -1.0));
        let pb = g.gamma_bar_a.mul(&g.gamma_bar_b).scale(c64(0.0, -1.0));
        assert!(h.commutator(&pa).max_abs() < 1e-12);
        assert!(h.commutator(&pb).max_abs() < 1e-12);
        let anti = g.gamma_a.mul(&g.gamma_bar_a).add(&g.gamma_bar_a.mul(&g.gamma_a));
        assert!(anti.max_abs() < 1e-15);
        let gm = ground_manifold(&h, 4).unwrap();
        for s in &gm.states {
            let v = pa.expectation(&s.amps).re;
            assert!((v.abs() - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn state_dump_round_trip() {
        let s = StateVector::new(vec![c64(0.6, 0.0), c64(0.0, -0.8)]);
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 32);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(StateVector::read_binary(&buf[..]).unwrap(), s);
    }

    proptest! {
        #[test]
        fn parity_strings_are_involutions(n in 1usize..7, mask in 0usize..64) {
            let ps: Vec<usize> = (1..=n).filter(|p| mask >> (p - 1) & 1 == 1).collect();
            let op = ParityString::new(ps).to_operator(n);
            let sq = op.mul(&op).sub(&SparseOperator::identity(1 << n));
            prop_assert_eq!(sq.max_abs(), 0.0);
            for r in 0..op.dim() {
                prop_assert!(op.row(r).all(|(c, v)| c == r && v.im == 0.0 && v.re.abs() == 1.0));
            }
        }

        #[test]
        fn assembled_hamiltonians_conserve_parity(n in 1usize..4, w in -2.0..2.0f64, d in -2.0..2.0f64, mu in -2.0..2.0f64) {
            let spec = ChainSpec::new(n, w, d, mu);
            let p = total_parity(spec.n_positions());
            for h in [assemble_bosonized(&spec).unwrap(), assemble_fermionic_oracle(&spec).unwrap()] {
                prop_assert!(h.hermitian);
                prop_assert_eq!(h.commutator(&p).max_abs(), 0.0);
            }
        }
    }
}
