//! Sparse second-quantized operators on a finite fermionic Fock space.
//!
//! Spin-orbitals are ordered orbital-major with spin up before spin down:
//! orbital `o` (1-based) with spin up is mode `2(o-1)`, spin down is mode
//! `2(o-1)+1`. Basis state `s` has bit `m` set iff mode `m` is occupied, and
//! ladder operators carry the Jordan-Wigner sign `(-1)^(#occupied modes below m)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use num::Zero;

use crate::algebra::Generator;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::params::{ClusterParams, T1Params, T2Params};

/// Largest number of spin-orbitals for which the full Fock space is built.
pub const DEFAULT_MAX_MODES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

/// Orbital bookkeeping: total orbitals, occupied pairs and the 2D-block map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeIndexing {
    n_orb: usize,
    n_occ: usize,
    blocks: Vec<(usize, usize)>,
    max_modes: usize,
}

impl ModeIndexing {
    /// Validates a block map `(p_i, q_i)` with `p_i` occupied and `q_i` virtual.
    /// An empty map describes a plain orbital space without 2D-blocks.
    pub fn new(n_orb: usize, n_occ: usize, blocks: Vec<(usize, usize)>) -> Result<Self> {
        if n_orb == 0 || n_occ == 0 || n_occ > n_orb {
            return Err(Error::InvalidLayout(format!("need 1 <= n_occ <= n_orb, got n_occ={n_occ}, n_orb={n_orb}")));
        }
        if !blocks.is_empty() && blocks.len() != n_occ {
            return Err(Error::InvalidLayout(format!(
                "block map has {} entries, expected 0 or n_occ={n_occ}",
                blocks.len()
            )));
        }
        let mut seen = vec![false; n_orb + 1];
        for &(p, q) in &blocks {
            if !(1..=n_occ).contains(&p) {
                return Err(Error::InvalidLayout(format!("occupied orbital {p} outside 1..={n_occ}")));
            }
            if !(n_occ + 1..=n_orb).contains(&q) {
                return Err(Error::InvalidLayout(format!("virtual orbital {q} outside {}..={n_orb}", n_occ + 1)));
            }
            for o in [p, q] {
                if seen[o] {
                    return Err(Error::InvalidLayout(format!("orbital {o} used twice")));
                }
                seen[o] = true;
            }
        }
        Ok(ModeIndexing { n_orb, n_occ, blocks, max_modes: DEFAULT_MAX_MODES })
    }

    /// `n_blocks` blocks with `p_i = i` and `q_i = n_blocks + i`.
    pub fn two_d_blocks(n_blocks: usize) -> Result<Self> {
        let blocks = (1..=n_blocks).map(|i| (i, n_blocks + i)).collect();
        ModeIndexing::new(2 * n_blocks, n_blocks, blocks)
    }

    /// Raises or lowers the full-space construction ceiling.
    pub fn with_max_modes(mut self, max_modes: usize) -> Self {
        self.max_modes = max_modes;
        self
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn n_occ(&self) -> usize {
        self.n_occ
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_modes(&self) -> usize {
        2 * self.n_orb
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_modes()
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> Result<(usize, usize)> {
        if i == 0 || i > self.blocks.len() {
            return Err(Error::BlockOutOfRange { block: i, n_blocks: self.blocks.len() });
        }
        Ok(self.blocks[i - 1])
    }

    pub fn spin_orbital(&self, orbital: usize, spin: Spin) -> Result<usize> {
        self.check_orbital(orbital)?;
        Ok(2 * (orbital - 1) + if spin == Spin::Up { 0 } else { 1 })
    }

    /// Inverse of [`ModeIndexing::spin_orbital`].
    pub fn orbital_of(&self, mode: usize) -> Result<(usize, Spin)> {
        if mode >= self.n_modes() {
            return Err(Error::ModeOutOfRange { mode, n_modes: self.n_modes() });
        }
        let spin = if mode.is_multiple_of(2) { Spin::Up } else { Spin::Down };
        Ok((mode / 2 + 1, spin))
    }

    fn check_orbital(&self, orbital: usize) -> Result<()> {
        if orbital == 0 || orbital > self.n_orb {
            return Err(Error::OrbitalOutOfRange { orbital, n_orb: self.n_orb });
        }
        Ok(())
    }

    fn check_dimension(&self) -> Result<()> {
        if self.n_modes() > self.max_modes {
            return Err(Error::DimensionTooLarge { n_modes: self.n_modes(), max_modes: self.max_modes });
        }
        Ok(())
    }
}

/// A single creation or annihilation operator on one spin-orbital.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

impl Ladder {
    fn dagger(self) -> Self {
        match self {
            Ladder::Create(m) => Ladder::Annihilate(m),
            Ladder::Annihilate(m) => Ladder::Create(m),
        }
    }

    /// Applies the operator to basis state `s`, returning the image and its sign.
    #[inline]
    fn apply(self, s: u64) -> Option<(u64, f64)> {
        let (m, create) = match self {
            Ladder::Create(m) => (m, true),
            Ladder::Annihilate(m) => (m, false),
        };
        let bit = 1u64 << m;
        if ((s & bit) != 0) == create {
            return None;
        }
        let sign = if (s & (bit - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        Some((s ^ bit, sign))
    }
}

/// Linear combination of ladder-operator strings; `ops[0]` acts last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FermionExpr {
    terms: Vec<(Complex64, Vec<Ladder>)>,
}

impl FermionExpr {
    pub fn zero() -> Self {
        FermionExpr { terms: Vec::new() }
    }

    pub fn scalar(c: f64) -> Self {
        FermionExpr { terms: vec![(Complex64::new(c, 0.0), Vec::new())] }
    }

    pub fn ladder(op: Ladder) -> Self {
        FermionExpr { terms: vec![(Complex64::new(1.0, 0.0), vec![op])] }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(mut self, c: f64) -> Self {
        for (coeff, _) in &mut self.terms {
            *coeff *= c;
        }
        self
    }

    pub fn adjoint(&self) -> Self {
        let terms =
            self.terms.iter().map(|(c, ops)| (c.conj(), ops.iter().rev().map(|op| op.dagger()).collect())).collect();
        FermionExpr { terms }
    }

    /// Image of basis state `s` as (state, amplitude) pairs.
    fn apply_basis(&self, s: u64, out: &mut Vec<(u64, Complex64)>) {
        for (coeff, ops) in &self.terms {
            let mut state = s;
            let mut sign = 1.0;
            let mut alive = true;
            for op in ops.iter().rev() {
                match op.apply(state) {
                    Some((next, sg)) => {
                        state = next;
                        sign *= sg;
                    }
                    None => {
                        alive = false;
                        break;
                    }
                }
            }
            if alive {
                out.push((state, *coeff * sign));
            }
        }
    }
}

impl Add for FermionExpr {
    type Output = FermionExpr;
    fn add(mut self, rhs: FermionExpr) -> FermionExpr {
        self.terms.extend(rhs.terms);
        self
    }
}

impl Sub for FermionExpr {
    type Output = FermionExpr;
    fn sub(self, rhs: FermionExpr) -> FermionExpr {
        self + rhs.scale(-1.0)
    }
}

impl Mul for &FermionExpr {
    type Output = FermionExpr;
    fn mul(self, rhs: &FermionExpr) -> FermionExpr {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (c1, o1) in &self.terms {
            for (c2, o2) in &rhs.terms {
                let mut ops = o1.clone();
                ops.extend_from_slice(o2);
                terms.push((c1 * c2, ops));
            }
        }
        FermionExpr { terms }
    }
}

/// Sparse complex matrix on the Fock space, stored in canonical CSR form.
///
/// Rows are sorted by column, duplicates merged, and no stored entry has
/// magnitude at or below the drop tolerance used to build it (exact zeros are
/// always dropped). Values are immutable once built.
#[derive(Clone)]
pub struct FockOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    modes: Arc<ModeIndexing>,
}

impl fmt::Debug for FockOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FockOperator").field("dim", &self.dim).field("nnz", &self.nnz()).finish()
    }
}

impl FockOperator {
    pub fn zeros(modes: &ModeIndexing) -> Result<Self> {
        modes.check_dimension()?;
        let dim = modes.dim();
        Ok(FockOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            modes: Arc::new(modes.clone()),
        })
    }

    pub fn identity(modes: &ModeIndexing) -> Result<Self> {
        modes.check_dimension()?;
        let dim = modes.dim();
        let triplets = (0..dim).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect();
        Ok(FockOperator::from_triplets(Arc::new(modes.clone()), triplets, 0.0))
    }

    /// Materializes a ladder expression on the full Fock space.
    pub fn from_expr(expr: &FermionExpr, modes: &ModeIndexing) -> Result<Self> {
        modes.check_dimension()?;
        let dim = modes.dim();
        const CHUNK: usize = 512;
        let n_chunks = dim.div_ceil(CHUNK);
        let chunks = par::map_range(Execution::default(), n_chunks, |c| {
            let mut out = Vec::new();
            let mut scratch = Vec::new();
            for col in c * CHUNK..((c + 1) * CHUNK).min(dim) {
                scratch.clear();
                expr.apply_basis(col as u64, &mut scratch);
                out.extend(scratch.iter().map(|&(row, v)| (row as usize, col, v)));
            }
            out
        });
        let triplets = chunks.into_iter().flatten().collect();
        Ok(FockOperator::from_triplets(Arc::new(modes.clone()), triplets, 0.0))
    }

    /// Canonicalizes `(row, col, value)` triplets, dropping `|v| <= drop_tol`.
    pub fn from_triplets(
        modes: Arc<ModeIndexing>,
        mut triplets: Vec<(usize, usize, Complex64)>,
        drop_tol: f64,
    ) -> Self {
        let dim = modes.dim();
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r},{c}) outside dimension {dim}");
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v.norm() > drop_tol && !v.is_zero() {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        FockOperator { dim, row_ptr, cols: keep_cols, vals: keep_vals, modes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn modes(&self) -> &ModeIndexing {
        &self.modes
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => Complex64::zero(),
        }
    }

    /// Stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim)
            .flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k])))
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn adjoint(&self) -> Self {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        FockOperator::from_triplets(self.modes.clone(), triplets, 0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.scale_complex(Complex64::new(c, 0.0))
    }

    pub fn scale_complex(&self, c: Complex64) -> Self {
        if c.is_zero() {
            return FockOperator {
                dim: self.dim,
                row_ptr: vec![0; self.dim + 1],
                cols: Vec::new(),
                vals: Vec::new(),
                modes: self.modes.clone(),
            };
        }
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= c;
        }
        out
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &FockOperator) -> Self {
        self.assert_same_dim(other);
        let triplets = self.iter().chain(other.iter().map(|(r, col, v)| (r, col, v * c))).collect();
        FockOperator::from_triplets(self.modes.clone(), triplets, 0.0)
    }

    pub fn matmul(&self, other: &FockOperator) -> Self {
        self.matmul_with_tol(other, 0.0)
    }

    /// Sparse product (Gustavson row accumulation) with a drop tolerance.
    pub fn matmul_with_tol(&self, other: &FockOperator, drop_tol: f64) -> Self {
        self.assert_same_dim(other);
        let dim = self.dim;
        let mut acc = vec![Complex64::zero(); dim];
        let mut mark = vec![usize::MAX; dim];
        let mut touched = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..dim {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = Complex64::zero();
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
            }
        }
        FockOperator::from_triplets(self.modes.clone(), triplets, drop_tol)
    }

    pub fn commutator(&self, other: &FockOperator) -> Self {
        self.matmul(other).axpy(-1.0, &other.matmul(self))
    }

    pub fn anticommutator(&self, other: &FockOperator) -> Self {
        self.matmul(other).axpy(1.0, &other.matmul(self))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().fold(0.0, |acc, v| acc + v.norm_sqr()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `||self - other||_F`.
    pub fn distance(&self, other: &FockOperator) -> f64 {
        self.axpy(-1.0, other).frobenius_norm()
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        assert_eq!(v.len(), self.dim, "vector length does not match operator dimension");
        DVector::from_fn(self.dim, |r, _| self.row(r).map(|(c, a)| a * v[c]).sum())
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    /// `||A^dagger + A||_F`; zero for anti-Hermitian operators.
    pub fn anti_hermitian_defect(&self) -> f64 {
        self.adjoint().axpy(1.0, self).frobenius_norm()
    }

    fn assert_same_dim(&self, other: &FockOperator) {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
    }
}

impl Add for &FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        self.axpy(-1.0, rhs)
    }
}

impl Mul for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        self.matmul(rhs)
    }
}

impl Neg for &FockOperator {
    type Output = FockOperator;
    fn neg(self) -> FockOperator {
        self.scale(-1.0)
    }
}

// ---------------------------------------------------------------------------
// Ladder expressions for the pair operators.

fn check_mode(mode: usize, modes: &ModeIndexing) -> Result<()> {
    if mode >= modes.n_modes() {
        return Err(Error::ModeOutOfRange { mode, n_modes: modes.n_modes() });
    }
    Ok(())
}

/// `S+_{ij} = (a+_{i up} a+_{j dn} + a+_{j up} a+_{i dn}) / sqrt(2(1 + delta_ij))`.
pub fn pair_plus_expr(i: usize, j: usize, modes: &ModeIndexing) -> Result<FermionExpr> {
    let iu = modes.spin_orbital(i, Spin::Up)?;
    let id = modes.spin_orbital(i, Spin::Down)?;
    let ju = modes.spin_orbital(j, Spin::Up)?;
    let jd = modes.spin_orbital(j, Spin::Down)?;
    let norm = 1.0 / (2.0f64 * if i == j { 2.0 } else { 1.0 }).sqrt();
    let c = |m| FermionExpr::ladder(Ladder::Create(m));
    Ok((&c(iu) * &c(jd) + &c(ju) * &c(id)).scale(norm))
}

fn b_expr(block: usize, modes: &ModeIndexing) -> Result<FermionExpr> {
    let (p, q) = modes.block(block)?;
    let open = pair_plus_expr(p, q, modes)?;
    let closed = pair_plus_expr(p, p, modes)?;
    Ok(&open * &closed.adjoint() - &closed * &open.adjoint())
}

fn a_expr(i: usize, j: usize, modes: &ModeIndexing) -> Result<FermionExpr> {
    let n = modes.n_blocks();
    if !(1..=n).contains(&i) || !(1..=n).contains(&j) || i >= j {
        return Err(Error::InvalidBlockPair { i, j, n_blocks: n });
    }
    let (pi, qi) = modes.block(i)?;
    let (pj, qj) = modes.block(j)?;
    double_excitation_expr(pi, pj, qi, qj, modes)
}

/// `S+_{p1 q1} S+_{p2 q2} S-_{p2} S-_{p1} - h.c.`
fn double_excitation_expr(p1: usize, p2: usize, q1: usize, q2: usize, modes: &ModeIndexing) -> Result<FermionExpr> {
    let o1 = pair_plus_expr(p1, q1, modes)?;
    let o2 = pair_plus_expr(p2, q2, modes)?;
    let c1 = pair_plus_expr(p1, p1, modes)?;
    let c2 = pair_plus_expr(p2, p2, modes)?;
    let up = &(&(&o1 * &o2) * &c2.adjoint()) * &c1.adjoint();
    let down = &(&(&c1 * &c2) * &o2.adjoint()) * &o1.adjoint();
    Ok(up - down)
}

/// `S+_{pq} S-_p - S+_p S-_{pq}`
fn single_excitation_expr(p: usize, q: usize, modes: &ModeIndexing) -> Result<FermionExpr> {
    let open = pair_plus_expr(p, q, modes)?;
    let closed = pair_plus_expr(p, p, modes)?;
    Ok(&open * &closed.adjoint() - &closed * &open.adjoint())
}

// ---------------------------------------------------------------------------
// Public builders.

pub fn build_creation(mode: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    check_mode(mode, modes)?;
    FockOperator::from_expr(&FermionExpr::ladder(Ladder::Create(mode)), modes)
}

pub fn build_annihilation(mode: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    check_mode(mode, modes)?;
    FockOperator::from_expr(&FermionExpr::ladder(Ladder::Annihilate(mode)), modes)
}

pub fn build_number(orbital: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    let mut expr = FermionExpr::zero();
    for spin in [Spin::Up, Spin::Down] {
        let m = modes.spin_orbital(orbital, spin)?;
        expr = expr + &FermionExpr::ladder(Ladder::Create(m)) * &FermionExpr::ladder(Ladder::Annihilate(m));
    }
    FockOperator::from_expr(&expr, modes)
}

pub fn build_total_number(modes: &ModeIndexing) -> Result<FockOperator> {
    let mut expr = FermionExpr::zero();
    for m in 0..modes.n_modes() {
        expr = expr + &FermionExpr::ladder(Ladder::Create(m)) * &FermionExpr::ladder(Ladder::Annihilate(m));
    }
    FockOperator::from_expr(&expr, modes)
}

pub fn build_pair_plus(i: usize, j: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    FockOperator::from_expr(&pair_plus_expr(i, j, modes)?, modes)
}

pub fn build_pair_minus(i: usize, j: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    FockOperator::from_expr(&pair_plus_expr(i, j, modes)?.adjoint(), modes)
}

/// Broken-pair double excitation between 2D-blocks `i < j` (1-based).
pub fn build_a(i: usize, j: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    FockOperator::from_expr(&a_expr(i, j, modes)?, modes)
}

/// Single excitation `p_i -> p_i q_i` inside 2D-block `i` (1-based).
pub fn build_b(i: usize, modes: &ModeIndexing) -> Result<FockOperator> {
    FockOperator::from_expr(&b_expr(i, modes)?, modes)
}

/// `X = sum_{i<j} mu_ij A_ij` on the full Fock space.
pub fn build_x(params: &ClusterParams, modes: &ModeIndexing) -> Result<FockOperator> {
    check_blocks(params, modes)?;
    let mut expr = FermionExpr::zero();
    for (&(i, j), &mu) in params.mu_pair() {
        if mu != 0.0 {
            expr = expr + a_expr(i, j, modes)?.scale(mu);
        }
    }
    FockOperator::from_expr(&expr, modes)
}

/// `Y = sum_k mu_k B_k` on the full Fock space.
pub fn build_y(params: &ClusterParams, modes: &ModeIndexing) -> Result<FockOperator> {
    check_blocks(params, modes)?;
    let mut expr = FermionExpr::zero();
    for (&k, &mu) in params.mu_single() {
        if mu != 0.0 {
            expr = expr + b_expr(k, modes)?.scale(mu);
        }
    }
    FockOperator::from_expr(&expr, modes)
}

/// Matrix of a single block generator.
pub fn build_generator(g: Generator, modes: &ModeIndexing) -> Result<FockOperator> {
    build_combination(&[(g, 1.0)], modes)
}

/// `sum c_g g` over block generators.
pub fn build_combination(terms: &[(Generator, f64)], modes: &ModeIndexing) -> Result<FockOperator> {
    let mut expr = FermionExpr::zero();
    for &(g, c) in terms {
        let e = match g {
            Generator::A(i, j) => a_expr(i, j, modes)?,
            Generator::B(k) => b_expr(k, modes)?,
        };
        expr = expr + e.scale(c);
    }
    FockOperator::from_expr(&expr, modes)
}

fn check_blocks(params: &ClusterParams, modes: &ModeIndexing) -> Result<()> {
    if params.n_blocks() != modes.n_blocks() {
        return Err(Error::DimensionMismatch { left: params.n_blocks(), right: modes.n_blocks() });
    }
    Ok(())
}

/// General broken-pair single excitations, keyed by `(p, q)` with `p` occupied and `q` virtual.
pub fn build_t1_general(params: &T1Params, modes: &ModeIndexing) -> Result<FockOperator> {
    let mut expr = FermionExpr::zero();
    for (&(p, q), &mu) in params.iter() {
        if p == 0 || p > modes.n_occ() || q <= modes.n_occ() || q > modes.n_orb() {
            return Err(Error::MalformedParams(format!(
                "T1 index ({p},{q}) needs p in 1..={} and q in {}..={}",
                modes.n_occ(),
                modes.n_occ() + 1,
                modes.n_orb()
            )));
        }
        if mu != 0.0 {
            expr = expr + single_excitation_expr(p, q, modes)?.scale(mu);
        }
    }
    FockOperator::from_expr(&expr, modes)
}

/// General broken-pair double excitations, keyed by `(p1, p2, q1, q2)` with
/// `p1 < p2` occupied and `q1 != q2` virtual.
pub fn build_t2prime_general(params: &T2Params, modes: &ModeIndexing) -> Result<FockOperator> {
    let mut expr = FermionExpr::zero();
    let occ = 1..=modes.n_occ();
    let virt = modes.n_occ() + 1..=modes.n_orb();
    for (&(p1, p2, q1, q2), &mu) in params.iter() {
        let ok =
            occ.contains(&p1) && occ.contains(&p2) && p1 < p2 && virt.contains(&q1) && virt.contains(&q2) && q1 != q2;
        if !ok {
            return Err(Error::MalformedParams(format!(
                "T2' index ({p1},{p2},{q1},{q2}) needs p1 < p2 occupied and q1 != q2 virtual"
            )));
        }
        if mu != 0.0 {
            expr = expr + double_excitation_expr(p1, p2, q1, q2, modes)?.scale(mu);
        }
    }
    FockOperator::from_expr(&expr, modes)
}

/// `|phi0> = prod_{p <= n_occ} S+_p |0>`.
pub fn build_reference(modes: &ModeIndexing) -> Result<DVector<Complex64>> {
    modes.check_dimension()?;
    let mut state: BTreeMap<u64, Complex64> = BTreeMap::new();
    state.insert(0, Complex64::new(1.0, 0.0));
    let mut scratch = Vec::new();
    for p in 1..=modes.n_occ() {
        let pair = pair_plus_expr(p, p, modes)?;
        let mut next: BTreeMap<u64, Complex64> = BTreeMap::new();
        for (&s, &amp) in &state {
            scratch.clear();
            pair.apply_basis(s, &mut scratch);
            for &(t, v) in &scratch {
                *next.entry(t).or_insert(Complex64::zero()) += amp * v;
            }
        }
        state = next;
    }
    let mut v = DVector::zeros(modes.dim());
    for (s, amp) in state {
        v[s as usize] = amp;
    }
    Ok(v)
}

/// Fock-space vector `prod_k S+_{state_k} |0>` where block `k` is closed
/// (`S+_{p_k}`) when bit `k-1` of `label` is clear and open (`S+_{p_k q_k}`) when set.
pub fn build_block_state(label: u64, modes: &ModeIndexing) -> Result<DVector<Complex64>> {
    modes.check_dimension()?;
    let mut expr = FermionExpr::scalar(1.0);
    for (k, &(p, q)) in modes.blocks().iter().enumerate() {
        let pair = if label >> k & 1 == 1 { pair_plus_expr(p, q, modes)? } else { pair_plus_expr(p, p, modes)? };
        expr = &expr * &pair;
    }
    let mut out = Vec::new();
    expr.apply_basis(0, &mut out);
    let mut v = DVector::zeros(modes.dim());
    for (s, amp) in out {
        v[s as usize] += amp;
    }
    Ok(v)
}
