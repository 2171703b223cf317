//! Lattice geometry, zig-zag ordering and fermionic term lists.
//!
//! Sites are 1-based. Every fermionic site `j` carries two modes which are
//! laid out along the zig-zag path `(1,+), (1,-), (2,+), (2,-), ...`; the
//! linear position of a mode is the single source of truth for string
//! operators downstream.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::ddm_engine::PulseSynthesis;
use crate::error::{Error, Result};
use crate::{c64, C64};

/// Kitaev leg of the two-leg ladder: `a` (plus) or `ā` (minus).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    Plus,
    Minus,
}

/// Label of a fermionic mode: a leg mode or an original spin mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Plus,
    Minus,
    Up,
    Down,
}

impl Species {
    /// Weights `(u_A, u_B)` with `c = u_A γ_A + u_B γ_B`.
    ///
    /// Plus leg: `γ_A = i(a - a†)`, `γ_B = a + a†`.
    /// Minus leg: `γ̄_A = ā + ā†`, `γ̄_B = -i(ā - ā†)`.
    /// Spin modes use the minus-leg form.
    pub fn majorana_weights(self) -> (C64, C64) {
        match self {
            Species::Plus => (c64(0.0, -0.5), c64(0.5, 0.0)),
            Species::Minus | Species::Up | Species::Down => (c64(0.5, 0.0), c64(0.0, 0.5)),
        }
    }
}

impl From<Leg> for Species {
    fn from(leg: Leg) -> Self {
        match leg {
            Leg::Plus => Species::Plus,
            Leg::Minus => Species::Minus,
        }
    }
}

/// A leg mode `(j, ±)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteIndex {
    pub site: usize,
    pub leg: Leg,
}

impl SiteIndex {
    pub fn new(site: usize, leg: Leg) -> Self {
        Self { site, leg }
    }

    pub fn plus(site: usize) -> Self {
        Self::new(site, Leg::Plus)
    }

    pub fn minus(site: usize) -> Self {
        Self::new(site, Leg::Minus)
    }

    /// Linear zig-zag position, 1-based: `p(j,+) = 2j-1`, `p(j,-) = 2j`.
    pub fn position(&self) -> usize {
        match self.leg {
            Leg::Plus => 2 * self.site - 1,
            Leg::Minus => 2 * self.site,
        }
    }

    /// Inverse of [`SiteIndex::position`].
    pub fn from_position(p: usize) -> Self {
        assert!(p >= 1, "positions are 1-based");
        if p % 2 == 1 {
            Self::plus((p + 1) / 2)
        } else {
            Self::minus(p / 2)
        }
    }
}

/// Geometry and couplings of the DIII chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n_fermion_sites: usize,
    pub w: f64,
    pub delta_pair: f64,
    pub mu: f64,
    #[serde(default)]
    pub cut_after_site: Option<usize>,
}

impl ChainSpec {
    pub fn new(n: usize, w: f64, delta: f64, mu: f64) -> Self {
        Self { n_fermion_sites: n, w, delta_pair: delta, mu, cut_after_site: None }
    }

    /// Ideal point `w = Δ`, `μ = 0`.
    pub fn ideal(n: usize, w: f64) -> Self {
        Self::new(n, w, w, 0.0)
    }

    pub fn with_cut(mut self, after: usize) -> Self {
        self.cut_after_site = Some(after);
        self
    }

    /// Number of hard-core bosons `M = 2N`.
    pub fn n_positions(&self) -> usize {
        2 * self.n_fermion_sites
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fermion_sites == 0 {
            return Err(Error::InvalidSpec("n_fermion_sites must be >= 1".into()));
        }
        for (name, v) in [("w", self.w), ("delta_pair", self.delta_pair), ("mu", self.mu)] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} is not finite")));
            }
        }
        if let Some(c) = self.cut_after_site {
            if c == 0 || c >= self.n_fermion_sites {
                return Err(Error::InvalidSpec(format!(
                    "cut_after_site {c} outside 1..{}",
                    self.n_fermion_sites
                )));
            }
        }
        Ok(())
    }

    /// Bonds `(j, j+1)` present in the fermionic model; the cut bond is absent.
    pub fn bonds(&self) -> Vec<usize> {
        (1..self.n_fermion_sites).filter(|&j| Some(j) != self.cut_after_site).collect()
    }
}

/// A fermionic mode in a term list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub site: usize,
    pub species: Species,
}

/// One quadratic term. Mode fields index into [`FermionTermList::modes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FermionTerm {
    /// `coeff · c†_create c_annihilate`
    Hop { create: usize, annihilate: usize, coeff: C64 },
    /// `coeff · c_first c_second`, or `coeff · c†_first c†_second` if `creation`.
    Pair { first: usize, second: usize, coeff: C64, creation: bool },
    /// `coeff · n_mode + offset`
    Chem { mode: usize, coeff: f64, offset: f64 },
}

impl FermionTerm {
    fn conjugate(&self) -> FermionTerm {
        match *self {
            FermionTerm::Hop { create, annihilate, coeff } => {
                FermionTerm::Hop { create: annihilate, annihilate: create, coeff: coeff.conj() }
            }
            FermionTerm::Pair { first, second, coeff, creation } => {
                FermionTerm::Pair { first: second, second: first, coeff: coeff.conj(), creation: !creation }
            }
            chem => chem,
        }
    }
}

/// Symbolic quadratic Hamiltonian over an ordered list of modes.
///
/// Mode `k` sits at linear position `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermionTermList {
    pub modes: Vec<Mode>,
    pub terms: Vec<FermionTerm>,
}

const CLOSURE_TOL: f64 = 1e-14;

fn same_term(a: &FermionTerm, b: &FermionTerm) -> bool {
    let close = |x: C64, y: C64| (x - y).norm() <= CLOSURE_TOL * (1.0 + x.norm());
    match (*a, *b) {
        (
            FermionTerm::Hop { create: c1, annihilate: a1, coeff: k1 },
            FermionTerm::Hop { create: c2, annihilate: a2, coeff: k2 },
        ) => c1 == c2 && a1 == a2 && close(k1, k2),
        (
            FermionTerm::Pair { first: f1, second: s1, coeff: k1, creation: r1 },
            FermionTerm::Pair { first: f2, second: s2, coeff: k2, creation: r2 },
        ) => {
            r1 == r2 && ((f1 == f2 && s1 == s2 && close(k1, k2)) || (f1 == s2 && s1 == f2 && close(k1, -k2)))
        }
        _ => false,
    }
}

impl FermionTermList {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn count_hops(&self) -> usize {
        self.terms.iter().filter(|t| matches!(t, FermionTerm::Hop { .. })).count()
    }

    pub fn count_pairs(&self) -> usize {
        self.terms.iter().filter(|t| matches!(t, FermionTerm::Pair { .. })).count()
    }

    /// Every non-diagonal term must have its conjugate partner in the list.
    pub fn check_hermitian(&self) -> Result<()> {
        let n = self.modes.len();
        for (i, t) in self.terms.iter().enumerate() {
            match *t {
                FermionTerm::Chem { mode, coeff, offset } => {
                    if mode >= n || !coeff.is_finite() || !offset.is_finite() {
                        return Err(Error::NonHermitian(format!("term {i}: bad chem term")));
                    }
                }
                FermionTerm::Hop { create, annihilate, coeff } => {
                    if create >= n || annihilate >= n {
                        return Err(Error::NonHermitian(format!("term {i}: mode out of range")));
                    }
                    if create == annihilate {
                        if coeff.im.abs() > CLOSURE_TOL * (1.0 + coeff.norm()) {
                            return Err(Error::NonHermitian(format!("term {i}: complex diagonal")));
                        }
                        continue;
                    }
                    let partner = t.conjugate();
                    if !self.terms.iter().any(|u| same_term(u, &partner)) {
                        return Err(Error::NonHermitian(format!("term {i}: missing conjugate")));
                    }
                }
                FermionTerm::Pair { first, second, .. } => {
                    if first >= n || second >= n || first == second {
                        return Err(Error::NonHermitian(format!("term {i}: bad pair indices")));
                    }
                    let partner = t.conjugate();
                    if !self.terms.iter().any(|u| same_term(u, &partner)) {
                        return Err(Error::NonHermitian(format!("term {i}: missing conjugate")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Terms restricted to one leg, re-indexed onto that leg's modes.
    pub fn leg_terms(&self, species: Species) -> Vec<FermionTerm> {
        let keep: Vec<Option<usize>> = {
            let mut next = 0;
            self.modes
                .iter()
                .map(|m| {
                    (m.species == species).then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        self.terms
            .iter()
            .filter_map(|t| match *t {
                FermionTerm::Hop { create, annihilate, coeff } => Some(FermionTerm::Hop {
                    create: keep[create]?,
                    annihilate: keep[annihilate]?,
                    coeff,
                }),
                FermionTerm::Pair { first, second, coeff, creation } => Some(FermionTerm::Pair {
                    first: keep[first]?,
                    second: keep[second]?,
                    coeff,
                    creation,
                }),
                FermionTerm::Chem { mode, coeff, offset } => {
                    Some(FermionTerm::Chem { mode: keep[mode]?, coeff, offset })
                }
            })
            .collect()
    }

    /// Dense quadratic-form representation.
    pub fn quadratic_form(&self) -> QuadraticForm {
        let n = self.modes.len();
        let mut q = QuadraticForm {
            hop: DMatrix::zeros(n, n),
            ann: DMatrix::zeros(n, n),
            cre: DMatrix::zeros(n, n),
            constant: 0.0,
        };
        for t in &self.terms {
            match *t {
                FermionTerm::Hop { create, annihilate, coeff } => q.hop[(create, annihilate)] += coeff,
                FermionTerm::Pair { first, second, coeff, creation } => {
                    let m = if creation { &mut q.cre } else { &mut q.ann };
                    m[(first, second)] += coeff * 0.5;
                    m[(second, first)] -= coeff * 0.5;
                }
                FermionTerm::Chem { mode, coeff, offset } => {
                    q.hop[(mode, mode)] += c64(coeff, 0.0);
                    q.constant += offset;
                }
            }
        }
        q
    }
}

/// `H = Σ hop_kl c†_k c_l + Σ ann_kl c_k c_l + Σ cre_kl c†_k c†_l + constant`
/// with `ann` and `cre` antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hop: DMatrix<C64>,
    pub ann: DMatrix<C64>,
    pub cre: DMatrix<C64>,
    pub constant: f64,
}

impl QuadraticForm {
    /// Rewrites the form under the mode substitution `c = W a`.
    pub fn substitute(&self, w: &DMatrix<C64>) -> QuadraticForm {
        let wh = w.adjoint();
        QuadraticForm {
            hop: &wh * &self.hop * w,
            ann: w.transpose() * &self.ann * w,
            cre: &wh * &self.cre * w.conjugate(),
            constant: self.constant,
        }
    }

    pub fn max_abs_diff(&self, other: &QuadraticForm) -> f64 {
        let d = |a: &DMatrix<C64>, b: &DMatrix<C64>| {
            a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
        };
        d(&self.hop, &other.hop)
            .max(d(&self.ann, &other.ann))
            .max(d(&self.cre, &other.cre))
            .max((self.constant - other.constant).abs())
    }
}

fn push_hop_hc(terms: &mut Vec<FermionTerm>, i: usize, j: usize, coeff: C64) {
    terms.push(FermionTerm::Hop { create: i, annihilate: j, coeff });
    terms.push(FermionTerm::Hop { create: j, annihilate: i, coeff: coeff.conj() });
}

fn push_pair_hc(terms: &mut Vec<FermionTerm>, first: usize, second: usize, coeff: C64) {
    terms.push(FermionTerm::Pair { first, second, coeff, creation: false });
    terms.push(FermionTerm::Pair { first: second, second: first, coeff: coeff.conj(), creation: true });
}

fn zigzag_modes(n: usize, first: Species, second: Species) -> Vec<Mode> {
    (1..=n)
        .flat_map(|j| [Mode { site: j, species: first }, Mode { site: j, species: second }])
        .collect()
}

/// Two decoupled Kitaev legs:
/// `Σ(-w a†_j a_{j+1} ± Δ a_{j+1} a_j + h.c.) - μ(n - 1/2)` with `+Δ` on the
/// plus leg and `-Δ` on the minus leg.
pub fn build_diii_terms(spec: &ChainSpec) -> Result<FermionTermList> {
    spec.validate()?;
    let n = spec.n_fermion_sites;
    let modes = zigzag_modes(n, Species::Plus, Species::Minus);
    let idx = |s: SiteIndex| s.position() - 1;
    let mut terms = Vec::new();
    for leg in [Leg::Plus, Leg::Minus] {
        let sign = if leg == Leg::Plus { 1.0 } else { -1.0 };
        for j in spec.bonds() {
            let (a, b) = (idx(SiteIndex::new(j, leg)), idx(SiteIndex::new(j + 1, leg)));
            push_hop_hc(&mut terms, a, b, c64(-spec.w, 0.0));
            push_pair_hc(&mut terms, b, a, c64(sign * spec.delta_pair, 0.0));
        }
    }
    for k in 0..modes.len() {
        terms.push(FermionTerm::Chem { mode: k, coeff: -spec.mu, offset: 0.5 * spec.mu });
    }
    Ok(FermionTermList { modes, terms })
}

/// Spin-basis form:
/// `Σ_{jα}(-w c†_{j,α} c_{j+1,α} - iΔ c_{j+1,α} c_{j,ᾱ} + h.c.) - μ(n_{j,α} - 1/2)`.
pub fn build_spin_terms(spec: &ChainSpec) -> Result<FermionTermList> {
    spec.validate()?;
    let n = spec.n_fermion_sites;
    let modes = zigzag_modes(n, Species::Up, Species::Down);
    let idx = |j: usize, up: bool| 2 * (j - 1) + usize::from(!up);
    let mut terms = Vec::new();
    for j in spec.bonds() {
        for up in [true, false] {
            push_hop_hc(&mut terms, idx(j, up), idx(j + 1, up), c64(-spec.w, 0.0));
            push_pair_hc(&mut terms, idx(j + 1, up), idx(j, !up), c64(0.0, -spec.delta_pair));
        }
    }
    for k in 0..modes.len() {
        terms.push(FermionTerm::Chem { mode: k, coeff: -spec.mu, offset: 0.5 * spec.mu });
    }
    Ok(FermionTermList { modes, terms })
}

/// Per-site map `(a, ā)ᵀ = U (c↑, c↓)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinBasisTransform {
    pub n_sites: usize,
    pub unitary: Matrix2<C64>,
}

impl SpinBasisTransform {
    /// Block-diagonal substitution matrix `W` with `c = W (a, ā)` on all modes.
    pub fn substitution(&self) -> DMatrix<C64> {
        let n = 2 * self.n_sites;
        let inv = self.unitary.adjoint();
        let mut w = DMatrix::zeros(n, n);
        for j in 0..self.n_sites {
            for r in 0..2 {
                for c in 0..2 {
                    w[(2 * j + r, 2 * j + c)] = inv[(r, c)];
                }
            }
        }
        w
    }
}

/// `a = e^{-iπ/4}(c↑ + c↓)/√2`, `ā = e^{-iπ/4}(c↑ - c↓)/√2`.
pub fn build_spin_basis_transform(n: usize) -> Result<SpinBasisTransform> {
    if n == 0 {
        return Err(Error::InvalidSpec("N must be >= 1".into()));
    }
    let ph = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_PI_4);
    Ok(SpinBasisTransform { n_sites: n, unitary: Matrix2::new(ph, ph, ph, -ph) })
}

/// Zeroes `t̄_c`, `q̄_c` and `q_{c+1}` at the cut link `c`.
pub fn apply_cut(spec: &ChainSpec, synthesis: &PulseSynthesis) -> Result<PulseSynthesis> {
    spec.validate()?;
    let c = spec
        .cut_after_site
        .ok_or_else(|| Error::InvalidArgument("cut_after_site not set".into()))?;
    let n = synthesis.t.len();
    if n != spec.n_fermion_sites || synthesis.t_bar.len() + 1 != n {
        return Err(Error::InvalidArgument("synthesis does not cover all links".into()));
    }
    let mut out = synthesis.clone();
    out.t_bar[c - 1] = 0.0;
    out.q_bar[c - 1] = 0.0;
    out.q[c] = 0.0;
    Ok(out)
}
