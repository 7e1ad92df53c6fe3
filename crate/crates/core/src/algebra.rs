//! Symbolic arithmetic over the span of the block generators `{A_ij, B_k}`.
//!
//! The bracket is the bilinear extension of
//! `[A_ij, A_kl] = [B_i, B_k] = 0` and `[A_ij, B_k] = d_ik B_j + d_jk B_i`.
//! Any bracket therefore lands in the span of the `B_k`, which is what makes
//! the iterated adjoints of `X = sum mu_ij A_ij` on `Y = sum mu_k B_k` free of
//! mixed terms.
//!
//! These relations are taken as the definition of the symbolic algebra. They
//! are *not* realized by the Fock-space matrices of `fock` (there the bracket
//! picks up a block-parity factor), and for three or more blocks the bracket
//! does not satisfy the Jacobi identity. [`check_nma`] and the matrix
//! implementations of [`LieElement`] measure what the operators actually do.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num::complex::Complex64;
use num::{BigRational, One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::FockOperator;
use crate::numfmt::G17;
use crate::params::ClusterParams;

/// Scalar field for symbolic coefficients: `f64` or exact `BigRational`.
pub trait Coefficient:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;

    /// `1/n!`
    fn inv_factorial(n: usize) -> Self {
        let mut acc = Self::one();
        for k in 2..=n {
            acc = acc / Self::from_i64(k as i64);
        }
        acc
    }

    /// `(-1)^n`
    fn sign(n: usize) -> Self {
        if n.is_multiple_of(2) {
            Self::one()
        } else {
            -Self::one()
        }
    }
}

impl Coefficient for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coefficient for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(v.into())
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Elements of a Lie algebra the Zassenhaus machinery can work with.
pub trait LieElement: Clone + Send + Sync {
    type Coeff: Coefficient;

    fn zero_like(&self) -> Self;
    /// `[self, other]`. Callers check [`LieElement::compatible`] first.
    fn lie_bracket(&self, other: &Self) -> Self;
    /// `self + c * other`
    fn add_scaled(&self, c: &Self::Coeff, other: &Self) -> Self;
    fn scaled(&self, c: &Self::Coeff) -> Self;
    /// Frobenius (or coefficient 2-) norm.
    fn norm(&self) -> f64;
    /// Size descriptor used for compatibility checks (dimension or block count).
    fn shape(&self) -> usize;

    fn compatible(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }
}

fn check_compatible<L: LieElement>(x: &L, y: &L) -> Result<()> {
    if x.compatible(y) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: x.shape(), right: y.shape() })
    }
}

/// `(numerator, denominator)`.
pub type Ratio = (i64, i64);

/// One of the block generators, with 1-based block indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Generator {
    /// Broken-pair double excitation between blocks `i < j`.
    A(usize, usize),
    /// Single excitation inside block `k`.
    B(usize),
}

impl std::fmt::Display for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::A(i, j) => write!(f, "A({i},{j})"),
            Generator::B(k) => write!(f, "B({k})"),
        }
    }
}

fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(1 <= i && i < j && j <= n);
    (i - 1) * (2 * n - i) / 2 + (j - i - 1)
}

/// Real combination `sum a_ij A_ij + sum b_k B_k` over `n_blocks` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement<T = f64> {
    n_blocks: usize,
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Coefficient> AlgebraElement<T> {
    pub fn zero(n_blocks: usize) -> Self {
        let n_pairs = n_blocks * n_blocks.saturating_sub(1) / 2;
        AlgebraElement { n_blocks, a: vec![T::zero(); n_pairs], b: vec![T::zero(); n_blocks] }
    }

    pub fn generator(g: Generator, n_blocks: usize) -> Result<Self> {
        let mut e = Self::zero(n_blocks);
        e.add_generator(g, T::one())?;
        Ok(e)
    }

    /// Adds `c * g` in place.
    pub fn add_generator(&mut self, g: Generator, c: T) -> Result<()> {
        let n = self.n_blocks;
        match g {
            Generator::A(i, j) => {
                if !(1 <= i && i < j && j <= n) {
                    return Err(Error::InvalidBlockPair { i, j, n_blocks: n });
                }
                let idx = pair_index(i, j, n);
                self.a[idx] = self.a[idx].clone() + c;
            }
            Generator::B(k) => {
                if k == 0 || k > n {
                    return Err(Error::BlockOutOfRange { block: k, n_blocks: n });
                }
                self.b[k - 1] = self.b[k - 1].clone() + c;
            }
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn a(&self, i: usize, j: usize) -> T {
        self.a[pair_index(i, j, self.n_blocks)].clone()
    }

    pub fn b(&self, k: usize) -> T {
        self.b[k - 1].clone()
    }

    pub fn b_coeffs(&self) -> &[T] {
        &self.b
    }

    /// `((i, j), a_ij)` for every pair, lexicographic.
    pub fn a_coeffs(&self) -> impl Iterator<Item = ((usize, usize), T)> + '_ {
        let n = self.n_blocks;
        (1..=n).flat_map(move |i| (i + 1..=n).map(move |j| ((i, j), self.a[pair_index(i, j, n)].clone())))
    }

    pub fn is_b_only(&self) -> bool {
        self.a.iter().all(|v| v.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.is_b_only() && self.b.iter().all(|v| v.is_zero())
    }

    /// Nonzero terms as `(generator, coefficient)`.
    pub fn terms(&self) -> Vec<(Generator, T)> {
        let mut out: Vec<_> =
            self.a_coeffs().filter(|(_, v)| !v.is_zero()).map(|((i, j), v)| (Generator::A(i, j), v)).collect();
        out.extend(
            self.b.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(k, v)| (Generator::B(k + 1), v.clone())),
        );
        out
    }

    pub fn map<U: Coefficient>(&self, f: impl Fn(&T) -> U) -> AlgebraElement<U> {
        AlgebraElement {
            n_blocks: self.n_blocks,
            a: self.a.iter().map(&f).collect(),
            b: self.b.iter().map(&f).collect(),
        }
    }

    pub fn to_f64(&self) -> AlgebraElement<f64> {
        self.map(|v| v.to_f64())
    }

    fn raw_bracket(&self, other: &Self) -> Self {
        let n = self.n_blocks;
        let mut out = Self::zero(n);
        for i in 1..=n {
            for j in i + 1..=n {
                let idx = pair_index(i, j, n);
                let (ax, ay) = (&self.a[idx], &other.a[idx]);
                if ax.is_zero() && ay.is_zero() {
                    continue;
                }
                // [a A_ij, b B_i] = a b B_j and [a A_ij, b B_j] = a b B_i
                let to_j = ax.clone() * other.b[i - 1].clone() - ay.clone() * self.b[i - 1].clone();
                let to_i = ax.clone() * other.b[j - 1].clone() - ay.clone() * self.b[j - 1].clone();
                out.b[j - 1] = out.b[j - 1].clone() + to_j;
                out.b[i - 1] = out.b[i - 1].clone() + to_i;
            }
        }
        out
    }
}

impl AlgebraElement<f64> {
    /// `X = sum_{i<j} mu_ij A_ij`
    pub fn x_of(params: &ClusterParams) -> Self {
        let mut e = Self::zero(params.n_blocks());
        for (&(i, j), &v) in params.mu_pair() {
            e.a[pair_index(i, j, params.n_blocks())] = v;
        }
        e
    }

    /// `Y = sum_k mu_k B_k`
    pub fn y_of(params: &ClusterParams) -> Self {
        let mut e = Self::zero(params.n_blocks());
        for (&k, &v) in params.mu_single() {
            e.b[k - 1] = v;
        }
        e
    }

    /// Matrix image on the full Fock space of `modes`.
    pub fn embed(&self, modes: &crate::fock::ModeIndexing) -> Result<FockOperator> {
        crate::fock::build_combination(&self.terms(), modes)
    }
}

impl AlgebraElement<BigRational> {
    /// Exact element from integer ratios: `a[(i,j)] = num/den`, `b[k] = num/den`.
    pub fn from_ratios(n_blocks: usize, a: &[((usize, usize), Ratio)], b: &[(usize, Ratio)]) -> Result<Self> {
        let mut e = Self::zero(n_blocks);
        for &((i, j), (p, q)) in a {
            e.add_generator(Generator::A(i, j), BigRational::new(p.into(), q.into()))?;
        }
        for &(k, (p, q)) in b {
            e.add_generator(Generator::B(k), BigRational::new(p.into(), q.into()))?;
        }
        Ok(e)
    }
}

impl<T: Coefficient> LieElement for AlgebraElement<T> {
    type Coeff = T;

    fn zero_like(&self) -> Self {
        Self::zero(self.n_blocks)
    }

    fn lie_bracket(&self, other: &Self) -> Self {
        assert_eq!(self.n_blocks, other.n_blocks, "block counts differ");
        self.raw_bracket(other)
    }

    fn add_scaled(&self, c: &T, other: &Self) -> Self {
        let zip = |u: &[T], v: &[T]| u.iter().zip(v).map(|(x, y)| x.clone() + c.clone() * y.clone()).collect();
        AlgebraElement { n_blocks: self.n_blocks, a: zip(&self.a, &other.a), b: zip(&self.b, &other.b) }
    }

    fn scaled(&self, c: &T) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    fn norm(&self) -> f64 {
        self.a.iter().chain(&self.b).fold(0.0, |acc, v| acc + v.to_f64().powi(2)).sqrt()
    }

    fn shape(&self) -> usize {
        self.n_blocks
    }
}

impl LieElement for FockOperator {
    type Coeff = f64;

    fn zero_like(&self) -> Self {
        self.scale(0.0)
    }

    fn lie_bracket(&self, other: &Self) -> Self {
        self.commutator(other)
    }

    fn add_scaled(&self, c: &f64, other: &Self) -> Self {
        self.axpy(*c, other)
    }

    fn scaled(&self, c: &f64) -> Self {
        self.scale(*c)
    }

    fn norm(&self) -> f64 {
        self.frobenius_norm()
    }

    fn shape(&self) -> usize {
        self.dim()
    }
}

impl LieElement for DMatrix<f64> {
    type Coeff = f64;

    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }

    fn lie_bracket(&self, other: &Self) -> Self {
        self * other - other * self
    }

    fn add_scaled(&self, c: &f64, other: &Self) -> Self {
        self + other * *c
    }

    fn scaled(&self, c: &f64) -> Self {
        self * *c
    }

    fn norm(&self) -> f64 {
        DMatrix::norm(self)
    }

    fn shape(&self) -> usize {
        self.nrows()
    }
}

impl LieElement for DMatrix<Complex64> {
    type Coeff = f64;

    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }

    fn lie_bracket(&self, other: &Self) -> Self {
        self * other - other * self
    }

    fn add_scaled(&self, c: &f64, other: &Self) -> Self {
        self + other * Complex64::new(*c, 0.0)
    }

    fn scaled(&self, c: &f64) -> Self {
        self * Complex64::new(*c, 0.0)
    }

    fn norm(&self) -> f64 {
        DMatrix::norm(self)
    }

    fn shape(&self) -> usize {
        self.nrows()
    }
}

/// `[x, y]` for symbolic elements over the same block count.
pub fn bracket<T: Coefficient>(x: &AlgebraElement<T>, y: &AlgebraElement<T>) -> Result<AlgebraElement<T>> {
    check_compatible(x, y)?;
    Ok(x.raw_bracket(y))
}

/// `ad_x^k y = [x, [x, ... [x, y]]]` (k nested brackets; `k = 0` gives `y`).
pub fn iterated_adjoint<L: LieElement>(x: &L, y: &L, k: usize) -> Result<L> {
    check_compatible(x, y)?;
    let mut acc = y.clone();
    for _ in 0..k {
        acc = x.lie_bracket(&acc);
    }
    Ok(acc)
}

/// All of `ad_x^0 y, ..., ad_x^k y`.
pub fn adjoint_chain<L: LieElement>(x: &L, y: &L, k: usize) -> Result<Vec<L>> {
    check_compatible(x, y)?;
    let mut chain = Vec::with_capacity(k + 1);
    chain.push(y.clone());
    for i in 0..k {
        let next = x.lie_bracket(&chain[i]);
        chain.push(next);
    }
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NmaWitness {
    pub depth: usize,
    pub residual: G17,
}

/// Outcome of a finite no-mixed-adjoint check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmaReport {
    pub holds: bool,
    pub max_depth_checked: usize,
    /// First depth `i` where `||[y, ad_x^i y]||` exceeded the threshold.
    pub witness: Option<NmaWitness>,
    /// `||[y, ad_x^i y]||` for `i = 0..depth`.
    pub residuals: Vec<G17>,
}

pub const DEFAULT_NMA_DEPTH: usize = 6;
pub const DEFAULT_NMA_TOL: f64 = 1e-12;

/// Checks `ad_y ad_x^i y = 0` for `i = 0..depth` against `tol * ||x||^i * ||y||^2`.
pub fn check_nma<L: LieElement>(x: &L, y: &L, depth: usize, tol: f64) -> Result<NmaReport> {
    if depth == 0 {
        return Err(Error::InvalidArgument("NMA depth must be at least 1".into()));
    }
    let chain = adjoint_chain(x, y, depth - 1)?;
    let (nx, ny) = (x.norm(), y.norm());
    let mut residuals = Vec::with_capacity(depth);
    let mut witness = None;
    for (i, term) in chain.iter().enumerate() {
        let r = y.lie_bracket(term).norm();
        residuals.push(G17(r));
        let threshold = tol * nx.powi(i as i32) * ny * ny;
        if witness.is_none() && r > threshold {
            witness = Some(NmaWitness { depth: i, residual: G17(r) });
        }
    }
    Ok(NmaReport { holds: witness.is_none(), max_depth_checked: depth, witness, residuals })
}

/// `||[ad_x^p y, ad_x^q y]||`; zero for pairs with the no-mixed-adjoint property.
pub fn corollary_check<L: LieElement>(x: &L, y: &L, p: usize, q: usize) -> Result<f64> {
    let chain = adjoint_chain(x, y, p.max(q))?;
    Ok(chain[p].lie_bracket(&chain[q]).norm())
}
