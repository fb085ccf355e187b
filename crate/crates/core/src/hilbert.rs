//! Truncated many-body Hilbert spaces, local operators and their embedding.
//!
//! A [`HilbertSpec`] is a tensor product of factors in a fixed order: matter
//! sites (row-major), then gauge cells (links or plaquettes, in lattice
//! order), then the global rotors of periodic lattices. Basis states are
//! mixed-radix integers with the first factor most significant.
//!
//! Operators are kept symbolic ([`Operator`]: a sum of products of local
//! operators on distinct factors) and materialised on a [`Basis`], either the
//! full product basis or a sector of it. Fermionic local operators pick up a
//! Jordan-Wigner sign from the occupied fermionic factors before them.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CellKind, Lattice};

pub type C64 = Complex64;

/// Default cap on the product-space dimension.
pub const DEFAULT_DIM_LIMIT: u64 = 1 << 26;

const ZERO_TOL: f64 = 1e-14;

/// Sparse square matrix on one tensor factor, stored by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOp {
    pub dim: usize,
    cols: Vec<Vec<(usize, C64)>>,
    /// Odd under fermion parity (needs a Jordan-Wigner string).
    pub fermionic: bool,
}

impl LocalOp {
    pub fn from_columns(dim: usize, mut f: impl FnMut(usize) -> Vec<(usize, C64)>, fermionic: bool) -> Self {
        let cols = (0..dim)
            .map(|c| {
                let mut col: Vec<(usize, C64)> = f(c).into_iter().filter(|(_, v)| v.norm() > ZERO_TOL).collect();
                col.sort_by_key(|e| e.0);
                col
            })
            .collect();
        Self { dim, cols, fermionic }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_columns(dim, |c| vec![(c, C64::new(1.0, 0.0))], false)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_columns(values.len(), |c| vec![(c, C64::new(values[c], 0.0))], false)
    }

    pub fn diagonal_complex(values: &[C64]) -> Self {
        Self::from_columns(values.len(), |c| vec![(c, values[c])], false)
    }

    pub fn from_dense(m: &DMatrix<C64>, fermionic: bool) -> Self {
        Self::from_columns(
            m.ncols(),
            |c| (0..m.nrows()).map(|r| (r, m[(r, c)])).collect(),
            fermionic,
        )
    }

    /// Image of basis state `d` as (state, amplitude) pairs.
    pub fn column(&self, d: usize) -> &[(usize, C64)] {
        &self.cols[d]
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_dense(&self.to_dense().adjoint(), self.fermionic)
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        Self::from_dense(&(self.to_dense() * rhs.to_dense()), self.fermionic ^ rhs.fermionic)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn is_diagonal(&self) -> bool {
        self.cols
            .iter()
            .enumerate()
            .all(|(c, col)| col.iter().all(|&(r, _)| r == c))
    }

    pub fn diagonal_value(&self, d: usize) -> C64 {
        self.cols[d].iter().find(|e| e.0 == d).map(|e| e.1).unwrap_or_default()
    }

    /// Applies `f` to each diagonal entry (diagonal operators only).
    pub fn map_diagonal(&self, f: impl Fn(C64) -> C64) -> Self {
        let vals: Vec<C64> = (0..self.dim).map(|d| f(self.diagonal_value(d))).collect();
        Self::diagonal_complex(&vals)
    }
}

/// Rotor operators with integer spectrum `−Λ..=Λ`.
#[derive(Debug, Clone)]
pub struct RotorOperators {
    pub cutoff: u32,
    /// Electric field (or `M`), `diag(−Λ, …, Λ)`.
    pub e: LocalOp,
    /// `e^{iφ}` (or `e^{iθ}`): raises the level by one and annihilates the top.
    pub u: LocalOp,
    pub u_dag: LocalOp,
}

pub fn rotor_operators(cutoff: u32) -> Result<RotorOperators> {
    if cutoff == 0 {
        return Err(Error::Cutoff(cutoff));
    }
    let dim = 2 * cutoff as usize + 1;
    let levels: Vec<f64> = (0..dim).map(|k| k as f64 - cutoff as f64).collect();
    let one = C64::new(1.0, 0.0);
    let u = LocalOp::from_columns(dim, |c| if c + 1 < dim { vec![(c + 1, one)] } else { vec![] }, false);
    Ok(RotorOperators {
        cutoff,
        e: LocalOp::diagonal(&levels),
        u_dag: u.adjoint(),
        u,
    })
}

/// Raising by `k` steps for `k > 0`, lowering by `|k|` for `k < 0`.
pub fn rotor_shift(ops: &RotorOperators, k: i64) -> LocalOp {
    if k >= 0 {
        ops.u.pow(k as u32)
    } else {
        ops.u_dag.pow((-k) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatterKind {
    None,
    StaggeredFermion,
    HardcoreBoson,
    TruncatedBoson { n_max: u32 },
}

impl MatterKind {
    pub fn local_dim(&self) -> usize {
        match self {
            MatterKind::None => 1,
            MatterKind::StaggeredFermion | MatterKind::HardcoreBoson => 2,
            MatterKind::TruncatedBoson { n_max } => ((n_max + 1) * (n_max + 1)) as usize,
        }
    }
}

/// Matter operators on one site.
#[derive(Debug, Clone)]
pub struct MatterOperators {
    pub psi: LocalOp,
    pub psi_dag: LocalOp,
    /// Local charge `Q`.
    pub charge: LocalOp,
    /// Mass density: occupation number, or `a†a + b†b` for bosons.
    pub number: LocalOp,
}

/// Matter operators for a site of the given sublattice parity. Returns `None`
/// for pure gauge theory.
pub fn matter_operators(kind: MatterKind, even: bool) -> Result<Option<MatterOperators>> {
    let one = C64::new(1.0, 0.0);
    Ok(match kind {
        MatterKind::None => None,
        MatterKind::StaggeredFermion | MatterKind::HardcoreBoson => {
            let fermionic = kind == MatterKind::StaggeredFermion;
            let psi = LocalOp::from_columns(2, |c| if c == 1 { vec![(0, one)] } else { vec![] }, fermionic);
            let offset = if even { 0.0 } else { -1.0 };
            Some(MatterOperators {
                psi_dag: psi.adjoint(),
                psi,
                charge: LocalOp::diagonal(&[offset, 1.0 + offset]),
                number: LocalOp::diagonal(&[0.0, 1.0]),
            })
        }
        MatterKind::TruncatedBoson { n_max } => {
            if n_max == 0 {
                return Err(Error::InvalidParams("truncated boson needs n_max >= 1".into()));
            }
            // factor state index = n_a * (n_max+1) + n_b
            let m = n_max as usize + 1;
            let dim = m * m;
            let a = LocalOp::from_columns(
                dim,
                |c| {
                    let (na, nb) = (c / m, c % m);
                    if na == 0 {
                        vec![]
                    } else {
                        vec![((na - 1) * m + nb, C64::new((na as f64).sqrt(), 0.0))]
                    }
                },
                false,
            );
            let b = LocalOp::from_columns(
                dim,
                |c| {
                    let (na, nb) = (c / m, c % m);
                    if nb == 0 {
                        vec![]
                    } else {
                        vec![(na * m + nb - 1, C64::new((nb as f64).sqrt(), 0.0))]
                    }
                },
                false,
            );
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let psi_dense = (a.to_dense() + b.adjoint().to_dense() * C64::new(0.0, 1.0)) * C64::new(s, 0.0);
            let psi = LocalOp::from_dense(&psi_dense, false);
            let na: Vec<f64> = (0..dim).map(|c| (c / m) as f64).collect();
            let nb: Vec<f64> = (0..dim).map(|c| (c % m) as f64).collect();
            Some(MatterOperators {
                psi_dag: psi.adjoint(),
                psi,
                charge: LocalOp::diagonal(&na.iter().zip(&nb).map(|(x, y)| x - y).collect::<Vec<_>>()),
                number: LocalOp::diagonal(&na.iter().zip(&nb).map(|(x, y)| x + y).collect::<Vec<_>>()),
            })
        }
    })
}

/// Which operator family [`local_operators`] should build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    Rotor { cutoff: u32 },
    Matter { kind: MatterKind, even: bool },
}

#[derive(Debug, Clone)]
pub enum LocalOperatorSet {
    Rotor(RotorOperators),
    Matter(Option<MatterOperators>),
}

pub fn local_operators(kind: LocalKind) -> Result<LocalOperatorSet> {
    match kind {
        LocalKind::Rotor { cutoff } => rotor_operators(cutoff).map(LocalOperatorSet::Rotor),
        LocalKind::Matter { kind, even } => matter_operators(kind, even).map(LocalOperatorSet::Matter),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeKind {
    /// Electric rotors on links.
    LinksE { cutoff: u32 },
    /// `M` rotors on plaquettes plus global rotors on periodic lattices.
    PlaqsM { cutoff: u32, global_cutoff: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorRole {
    Matter { site: usize },
    Link { index: usize },
    Plaquette { index: usize },
    Global { dir: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Factor {
    pub role: FactorRole,
    pub dim: usize,
    pub fermionic: bool,
}

#[derive(Debug, Clone)]
pub struct HilbertSpec {
    lattice: Arc<Lattice>,
    pub gauge: GaugeKind,
    pub matter: MatterKind,
    factors: Vec<Factor>,
    strides: Vec<u64>,
    dim: u64,
    fermionic: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(lattice: Arc<Lattice>, gauge: GaugeKind, matter: MatterKind) -> Result<Self> {
        Self::with_limit(lattice, gauge, matter, DEFAULT_DIM_LIMIT)
    }

    pub fn with_limit(lattice: Arc<Lattice>, gauge: GaugeKind, matter: MatterKind, limit: u64) -> Result<Self> {
        let mut factors = Vec::new();
        if matter != MatterKind::None {
            let fermionic = matter == MatterKind::StaggeredFermion;
            for site in 0..lattice.n_sites() {
                factors.push(Factor {
                    role: FactorRole::Matter { site },
                    dim: matter.local_dim(),
                    fermionic,
                });
            }
        }
        match gauge {
            GaugeKind::LinksE { cutoff } => {
                if cutoff == 0 {
                    return Err(Error::Cutoff(cutoff));
                }
                for index in 0..lattice.n_links() {
                    factors.push(Factor {
                        role: FactorRole::Link { index },
                        dim: 2 * cutoff as usize + 1,
                        fermionic: false,
                    });
                }
            }
            GaugeKind::PlaqsM { cutoff, global_cutoff } => {
                if cutoff == 0 {
                    return Err(Error::Cutoff(cutoff));
                }
                for index in 0..lattice.n_plaqs() {
                    factors.push(Factor {
                        role: FactorRole::Plaquette { index },
                        dim: 2 * cutoff as usize + 1,
                        fermionic: false,
                    });
                }
                if lattice.is_periodic() {
                    if global_cutoff == 0 {
                        return Err(Error::Cutoff(global_cutoff));
                    }
                    for dir in 0..lattice.dim() {
                        factors.push(Factor {
                            role: FactorRole::Global { dir },
                            dim: 2 * global_cutoff as usize + 1,
                            fermionic: false,
                        });
                    }
                }
            }
        }
        let total: u128 = factors.iter().map(|f| f.dim as u128).product();
        if total > limit as u128 {
            return Err(Error::DimensionLimit { dim: total, limit });
        }
        let mut strides = vec![1u64; factors.len()];
        for f in (0..factors.len().saturating_sub(1)).rev() {
            strides[f] = strides[f + 1] * factors[f + 1].dim as u64;
        }
        let fermionic = factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.fermionic)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            lattice,
            gauge,
            matter,
            factors,
            strides,
            dim: total as u64,
            fermionic,
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn has_matter(&self) -> bool {
        self.matter != MatterKind::None
    }

    pub fn matter_factor(&self, site: usize) -> Option<usize> {
        self.has_matter().then_some(site)
    }

    fn gauge_offset(&self) -> usize {
        if self.has_matter() {
            self.lattice.n_sites()
        } else {
            0
        }
    }

    pub fn link_factor(&self, link: usize) -> Option<usize> {
        matches!(self.gauge, GaugeKind::LinksE { .. }).then(|| self.gauge_offset() + link)
    }

    pub fn plaq_factor(&self, plaq: usize) -> Option<usize> {
        matches!(self.gauge, GaugeKind::PlaqsM { .. }).then(|| self.gauge_offset() + plaq)
    }

    pub fn global_factor(&self, dir: usize) -> Option<usize> {
        (matches!(self.gauge, GaugeKind::PlaqsM { .. }) && dir < self.lattice.n_global_loops())
            .then(|| self.gauge_offset() + self.lattice.n_plaqs() + dir)
    }

    /// Sublattice parity of a site: even if the coordinate sum is even.
    pub fn site_is_even(&self, site: usize) -> bool {
        self.lattice.cell(CellKind::Site, site).coords.iter().sum::<usize>() % 2 == 0
    }

    pub fn digit(&self, state: u64, factor: usize) -> usize {
        ((state / self.strides[factor]) % self.factors[factor].dim as u64) as usize
    }

    pub fn digits(&self, state: u64) -> Vec<usize> {
        (0..self.factors.len()).map(|f| self.digit(state, f)).collect()
    }

    pub fn state_from_digits(&self, digits: &[usize]) -> u64 {
        digits.iter().zip(&self.strides).map(|(&d, &s)| d as u64 * s).sum()
    }

    fn with_digit(&self, state: u64, factor: usize, new: usize) -> u64 {
        let old = self.digit(state, factor) as u64;
        state - old * self.strides[factor] + new as u64 * self.strides[factor]
    }

    /// Jordan-Wigner sign for a fermionic operator acting on `factor`.
    fn jw_sign(&self, state: u64, factor: usize) -> f64 {
        let occupied = self
            .fermionic
            .iter()
            .take_while(|&&g| g < factor)
            .filter(|&&g| self.digit(state, g) == 1)
            .count();
        if occupied % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn check_compatible(&self, other: &HilbertSpec) -> Result<()> {
        if self.factors != other.factors {
            return Err(Error::IncompatibleSpec(
                "operator built on a different Hilbert space".into(),
            ));
        }
        Ok(())
    }
}

/// `coeff × Π ops`, applied right to left, on pairwise distinct factors.
#[derive(Debug, Clone)]
pub struct Term {
    pub coeff: C64,
    pub ops: Vec<(usize, LocalOp)>,
}

impl Term {
    pub fn new(coeff: C64, ops: Vec<(usize, LocalOp)>) -> Result<Self> {
        let mut seen: Vec<usize> = ops.iter().map(|o| o.0).collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::OverlappingFactors(w[0]));
        }
        Ok(Self { coeff, ops })
    }

    pub fn scalar(coeff: f64) -> Self {
        Self {
            coeff: C64::new(coeff, 0.0),
            ops: Vec::new(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            coeff: self.coeff.conj(),
            ops: self.ops.iter().rev().map(|(f, o)| (*f, o.adjoint())).collect(),
        }
    }

    fn is_diagonal(&self) -> bool {
        self.ops.iter().all(|(_, o)| o.is_diagonal() && !o.fermionic)
    }

    fn diagonal_value(&self, spec: &HilbertSpec, state: u64) -> C64 {
        self.ops
            .iter()
            .fold(self.coeff, |acc, (f, o)| acc * o.diagonal_value(spec.digit(state, *f)))
    }

    fn apply(&self, spec: &HilbertSpec, state: u64, out: &mut Vec<(u64, C64)>) {
        let mut cur: Vec<(u64, C64)> = vec![(state, self.coeff)];
        for (f, op) in self.ops.iter().rev() {
            let mut next = Vec::with_capacity(cur.len());
            for &(s, amp) in &cur {
                let sign = if op.fermionic { spec.jw_sign(s, *f) } else { 1.0 };
                for &(d, v) in op.column(spec.digit(s, *f)) {
                    next.push((spec.with_digit(s, *f, d), amp * v * sign));
                }
            }
            cur = next;
            if cur.is_empty() {
                return;
            }
        }
        out.extend(cur);
    }
}

/// Symbolic operator: a sum of [`Term`]s on one [`HilbertSpec`].
#[derive(Debug, Clone)]
pub struct Operator {
    pub spec: Arc<HilbertSpec>,
    pub terms: Vec<Term>,
}

impl Operator {
    pub fn zero(spec: &Arc<HilbertSpec>) -> Self {
        Self {
            spec: spec.clone(),
            terms: Vec::new(),
        }
    }

    pub fn identity(spec: &Arc<HilbertSpec>) -> Self {
        Self {
            spec: spec.clone(),
            terms: vec![Term::scalar(1.0)],
        }
    }

    /// Single-term operator `coeff × Π ops`.
    pub fn product(spec: &Arc<HilbertSpec>, coeff: f64, ops: Vec<(usize, LocalOp)>) -> Result<Self> {
        Ok(Self {
            spec: spec.clone(),
            terms: vec![Term::new(C64::new(coeff, 0.0), ops)?],
        })
    }

    pub fn push(&mut self, coeff: C64, ops: Vec<(usize, LocalOp)>) -> Result<()> {
        self.terms.push(Term::new(coeff, ops)?);
        Ok(())
    }

    /// Adds `coeff × Π ops` and its hermitian conjugate.
    pub fn push_with_hc(&mut self, coeff: C64, ops: Vec<(usize, LocalOp)>) -> Result<()> {
        let t = Term::new(coeff, ops)?;
        self.terms.push(t.adjoint());
        self.terms.push(t);
        Ok(())
    }

    pub fn plus(mut self, other: &Operator) -> Result<Self> {
        self.spec.check_compatible(&other.spec)?;
        self.terms.extend(other.terms.iter().cloned());
        Ok(self)
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.coeff *= s;
        }
        self
    }

    pub fn adjoint(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            terms: self.terms.iter().map(Term::adjoint).collect(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(Term::is_diagonal)
    }

    /// Eigenvalue on a product basis state (diagonal operators only).
    pub fn diagonal_value(&self, state: u64) -> C64 {
        self.terms.iter().map(|t| t.diagonal_value(&self.spec, state)).sum()
    }

    /// `O|state⟩` as (state, amplitude) pairs with duplicates merged.
    pub fn apply_to_state(&self, state: u64) -> Vec<(u64, C64)> {
        let mut out = Vec::new();
        for t in &self.terms {
            t.apply(&self.spec, state, &mut out);
        }
        merge_sorted(out)
    }

    /// Matrix of the operator restricted to `basis` (rows and columns).
    /// Amplitude leaving the basis is counted in [`OperatorMatrix::leakage`].
    pub fn materialize(&self, basis: &Basis) -> Result<OperatorMatrix> {
        if basis.full_dim() != self.spec.dim() {
            return Err(Error::IncompatibleSpec(
                "basis does not belong to this Hilbert space".into(),
            ));
        }
        let n = basis.len();
        let cols: Vec<(Vec<(usize, C64)>, u64)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut col = Vec::new();
                let mut leak = 0u64;
                for (s, v) in self.apply_to_state(basis.state(j)) {
                    if v.norm() <= ZERO_TOL {
                        continue;
                    }
                    match basis.position(s) {
                        Some(i) => col.push((i, v)),
                        None => leak += 1,
                    }
                }
                (col, leak)
            })
            .collect();
        let leakage = cols.iter().map(|c| c.1).sum();
        let mut trip = Vec::new();
        for (j, (col, _)) in cols.into_iter().enumerate() {
            trip.extend(col.into_iter().map(|(i, v)| (i, j, v)));
        }
        let mut m = OperatorMatrix::from_triplets(n, n, trip);
        m.leakage = leakage;
        Ok(m)
    }
}

fn merge_sorted<K: Ord + Copy>(mut v: Vec<(K, C64)>) -> Vec<(K, C64)> {
    v.sort_by_key(|e| e.0);
    let mut out: Vec<(K, C64)> = Vec::with_capacity(v.len());
    for (k, a) in v {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += a,
            _ => out.push((k, a)),
        }
    }
    out
}

/// A set of product basis states: the whole space or a sorted subset.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Full { dim: u64 },
    Sector { states: Vec<u64>, full_dim: u64 },
}

impl Basis {
    pub fn full(spec: &HilbertSpec) -> Self {
        Basis::Full { dim: spec.dim() }
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Full { dim } => *dim as usize,
            Basis::Sector { states, .. } => states.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full_dim(&self) -> u64 {
        match self {
            Basis::Full { dim } => *dim,
            Basis::Sector { full_dim, .. } => *full_dim,
        }
    }

    pub fn state(&self, j: usize) -> u64 {
        match self {
            Basis::Full { .. } => j as u64,
            Basis::Sector { states, .. } => states[j],
        }
    }

    pub fn position(&self, state: u64) -> Option<usize> {
        match self {
            Basis::Full { dim } => (state < *dim).then_some(state as usize),
            Basis::Sector { states, .. } => states.binary_search(&state).ok(),
        }
    }

    /// Isometry from the sector into the full space (`full_dim × len`).
    pub fn isometry(&self) -> OperatorMatrix {
        let one = C64::new(1.0, 0.0);
        OperatorMatrix::from_triplets(
            self.full_dim() as usize,
            self.len(),
            (0..self.len()).map(|j| (self.state(j) as usize, j, one)).collect(),
        )
    }
}

/// A diagonal constraint `O = value` on product basis states.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub op: Operator,
    pub value: C64,
}

impl Constraint {
    pub fn new(op: Operator, value: f64) -> Self {
        Self {
            op,
            value: C64::new(value, 0.0),
        }
    }
}

/// Product basis states satisfying every constraint to within `tol`.
pub fn sector_basis(spec: &HilbertSpec, constraints: &[Constraint], tol: f64) -> Result<Basis> {
    for c in constraints {
        spec.check_compatible(&c.op.spec)?;
        if !c.op.is_diagonal() {
            return Err(Error::NonDiagonalConstraint);
        }
    }
    if constraints.is_empty() {
        return Ok(Basis::Full { dim: spec.dim() });
    }
    const CHUNK: u64 = 1 << 14;
    let dim = spec.dim();
    let chunks = dim.div_ceil(CHUNK);
    let states: Vec<u64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(dim);
            (lo..hi).filter(move |&s| {
                constraints
                    .iter()
                    .all(|k| (k.op.diagonal_value(s) - k.value).norm() <= tol)
            })
        })
        .collect();
    Ok(Basis::Sector { states, full_dim: dim })
}

/// Gauss operator `∇·E(x) − Q(x)` (electric-link spaces only).
pub fn gauss_operator(spec: &Arc<HilbertSpec>, site: usize) -> Result<Operator> {
    let GaugeKind::LinksE { cutoff } = spec.gauge else {
        return Err(Error::IncompatibleSpec(
            "Gauss operators need electric link variables; the dual formulation has none".into(),
        ));
    };
    let lat = spec.lattice();
    let rotor = rotor_operators(cutoff)?;
    let mut op = Operator::zero(spec);
    for (l, v) in lat.divergence_map().row(site) {
        op.push(
            C64::new(v as f64, 0.0),
            vec![(spec.link_factor(l).unwrap(), rotor.e.clone())],
        )?;
    }
    if let Some(m) = matter_operators(spec.matter, spec.site_is_even(site))? {
        op.push(C64::new(-1.0, 0.0), vec![(site, m.charge)])?;
    }
    Ok(op)
}

/// `Σ_x Q(x)`.
pub fn total_charge(spec: &Arc<HilbertSpec>) -> Result<Operator> {
    let mut op = Operator::zero(spec);
    for site in 0..spec.lattice().n_sites() {
        if let Some(m) = matter_operators(spec.matter, spec.site_is_even(site))? {
            op.push(C64::new(1.0, 0.0), vec![(site, m.charge)])?;
        }
    }
    Ok(op)
}

/// `Σ_x M(x)` over plaquettes (dual spaces only).
pub fn total_m(spec: &Arc<HilbertSpec>) -> Result<Operator> {
    let GaugeKind::PlaqsM { cutoff, .. } = spec.gauge else {
        return Err(Error::IncompatibleSpec("Σ M needs plaquette variables".into()));
    };
    let rotor = rotor_operators(cutoff)?;
    let mut op = Operator::zero(spec);
    for p in 0..spec.lattice().n_plaqs() {
        op.push(
            C64::new(1.0, 0.0),
            vec![(spec.plaq_factor(p).unwrap(), rotor.e.clone())],
        )?;
    }
    Ok(op)
}

/// Sparse complex matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
    /// Number of matrix elements that left the basis during materialisation.
    pub leakage: u64,
}

impl OperatorMatrix {
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, C64)>) -> Self {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<C64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            indptr,
            indices,
            data,
            leakage: 0,
        };
        m.prune();
        m
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut trip = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)].norm() > 0.0 {
                    trip.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn from_real_triplets(n: usize, trip: Vec<(usize, usize, f64)>) -> Self {
        Self::from_triplets(
            n,
            n,
            trip.into_iter().map(|(r, c, v)| (r, c, C64::new(v, 0.0))).collect(),
        )
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.data[k].norm() > ZERO_TOL {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
    }

    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|e| e.0 == c).map(|e| e.1).unwrap_or_default()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .into_par_iter()
            .with_min_len(256)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect(),
        )
    }

    /// Largest entry of `A − A†`.
    pub fn hermiticity_error(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.add_scaled(&self.adjoint(), -1.0).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|v| v.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut trip = self.triplets();
        trip.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, v * s)));
        Self::from_triplets(self.rows, self.cols, trip)
    }

    /// Sparse product `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows);
        let trip: Vec<_> = (0..self.rows)
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut acc: Vec<(usize, C64)> = Vec::new();
                for (k, a) in self.row(r) {
                    acc.extend(rhs.row(k).map(|(c, b)| (c, a * b)));
                }
                merge_sorted(acc).into_iter().map(move |(c, v)| (r, c, v))
            })
            .collect();
        Self::from_triplets(self.rows, rhs.cols, trip)
    }

    /// Largest entry of `[self, other]`.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        self.mul(other).add_scaled(&other.mul(self), -1.0).max_abs()
    }

    /// Number of nonzero entries connecting different classes of `label`.
    pub fn off_block_entries(&self, label: impl Fn(usize) -> i64) -> usize {
        self.triplets()
            .iter()
            .filter(|(r, c, _)| label(*r) != label(*c))
            .count()
    }
}
