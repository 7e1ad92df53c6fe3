//! Zassenhaus exponents `exp(X+Y) = exp(X) exp(Y) exp(C_2) exp(C_3) ...`.
//!
//! Two independent routes to the `C_n`:
//!
//! * [`casas_recursion`] evaluates the general `f_{m,n}` recursion with
//!   commutators only and makes no assumption on `X`, `Y`.
//! * [`closed_form`] uses `C_n = (-1)^(n-1)/n! ad_X^(n-1) Y`, valid when
//!   `ad_Y ad_X^i Y = 0` for all `i`.
//!
//! Terms are stored from `C_1 = Y`.

use std::collections::HashMap;

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num::complex::Complex64;
use num::One;

use crate::algebra::{adjoint_chain, Coefficient, LieElement};
use crate::error::{Error, Result};
use crate::fock::FockOperator;
use crate::oracle::{expm, frobenius_distance, Sectors};
use crate::par::{self, Execution};

/// Relative size below which a series term ends summation.
pub const SERIES_REL_TOL: f64 = 1e-16;
/// Hard cap on the number of summed terms.
pub const SERIES_MAX_TERMS: usize = 64;
/// Consecutive growing terms that flag a series as non-convergent.
pub const GROWTH_LIMIT: usize = 5;
pub const DEFAULT_QUAD_ORDER: usize = 32;

/// Tracks term norms for the shared truncation policy.
#[derive(Debug, Clone, Default)]
pub struct SeriesMonitor {
    norm_sum: f64,
    last: Option<f64>,
    growing: usize,
    count: usize,
}

impl SeriesMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the next term's norm; `Ok(true)` means summation may stop
    /// after this term.
    pub fn push(&mut self, norm: f64) -> Result<bool> {
        if !norm.is_finite() {
            return Err(Error::NonFinite);
        }
        self.count += 1;
        match self.last {
            Some(prev) if norm > prev => self.growing += 1,
            _ => self.growing = 0,
        }
        if self.growing >= GROWTH_LIMIT {
            return Err(Error::NonConvergent { order: self.count, consecutive: self.growing });
        }
        self.last = Some(norm);
        let small = self.count > 1 && norm < SERIES_REL_TOL * self.norm_sum;
        self.norm_sum += norm;
        Ok(small || self.count >= SERIES_MAX_TERMS)
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Recursion,
    ClosedForm,
}

#[derive(Debug, Clone)]
pub struct ZassenhausSeries<L> {
    /// `terms[n-1] = C_n`.
    pub terms: Vec<L>,
    pub method: Method,
}

impl<L> ZassenhausSeries<L> {
    /// `C_n`, 1-based.
    pub fn term(&self, n: usize) -> Option<&L> {
        n.checked_sub(1).and_then(|i| self.terms.get(i))
    }

    pub fn max_order(&self) -> usize {
        self.terms.len()
    }
}

struct Casas<'a, L: LieElement> {
    x_chain: Vec<L>,
    y: &'a L,
    c: Vec<L>,
    f: HashMap<(usize, usize), L>,
}

impl<L: LieElement> Casas<'_, L> {
    fn f(&mut self, m: usize, n: usize) -> L {
        if let Some(v) = self.f.get(&(m, n)) {
            return v.clone();
        }
        let mut acc = self.y.zero_like();
        if m == 1 {
            // sum_{j=1}^n (-1)^n / (j! (n-j)!) ad_Y^(n-j) ad_X^j Y
            for j in 1..=n {
                let mut t = self.x_chain[j].clone();
                for _ in 0..n - j {
                    t = self.y.lie_bracket(&t);
                }
                let coeff = L::Coeff::sign(n) * L::Coeff::inv_factorial(j) * L::Coeff::inv_factorial(n - j);
                acc = acc.add_scaled(&coeff, &t);
            }
        } else {
            // sum_{j=0}^{[n/m]-1} (-1)^j / j! ad_{C_m}^j f_{m-1, n-mj}
            let cm = self.c[m - 1].clone();
            for j in 0..n / m {
                let mut t = self.f(m - 1, n - m * j);
                for _ in 0..j {
                    t = cm.lie_bracket(&t);
                }
                let coeff = L::Coeff::sign(j) * L::Coeff::inv_factorial(j);
                acc = acc.add_scaled(&coeff, &t);
            }
        }
        self.f.insert((m, n), acc.clone());
        acc
    }
}

/// General Zassenhaus terms `C_1 .. C_max_order` from the `f_{m,n}` recursion.
pub fn casas_recursion<L: LieElement>(x: &L, y: &L, max_order: usize) -> Result<ZassenhausSeries<L>> {
    if max_order < 2 {
        return Err(Error::InvalidArgument(format!("max_order must be at least 2, got {max_order}")));
    }
    let x_chain = adjoint_chain(x, y, max_order - 1)?;
    let mut st = Casas { x_chain, y, c: vec![y.clone()], f: HashMap::new() };
    for n in 1..max_order {
        let m = (n / 2).max(1);
        let f = st.f(m, n);
        let c = f.scaled(&(L::Coeff::one() / L::Coeff::from_i64(n as i64 + 1)));
        st.c.push(c);
    }
    Ok(ZassenhausSeries { terms: st.c, method: Method::Recursion })
}

/// `C_n = (-1)^(n-1)/n! ad_X^(n-1) Y`. Meaningful only when `(x, y)` has no mixed adjoints.
pub fn closed_form<L: LieElement>(x: &L, y: &L, max_order: usize) -> Result<ZassenhausSeries<L>> {
    if max_order < 1 {
        return Err(Error::InvalidArgument("max_order must be at least 1".into()));
    }
    let chain = adjoint_chain(x, y, max_order - 1)?;
    let terms = chain
        .into_iter()
        .enumerate()
        .map(|(k, t)| t.scaled(&(L::Coeff::sign(k) * L::Coeff::inv_factorial(k + 1))))
        .collect();
    Ok(ZassenhausSeries { terms, method: Method::ClosedForm })
}

/// Closed-form terms generated lazily until the truncation policy stops.
pub fn closed_form_sum<L: LieElement>(x: &L, y: &L) -> Result<L> {
    if !x.compatible(y) {
        return Err(Error::DimensionMismatch { left: x.shape(), right: y.shape() });
    }
    let mut monitor = SeriesMonitor::new();
    let mut ad = y.clone();
    let mut acc = y.zero_like();
    for k in 0.. {
        let term = ad.scaled(&(L::Coeff::sign(k) * L::Coeff::inv_factorial(k + 1)));
        acc = acc.add_scaled(&L::Coeff::one(), &term);
        if monitor.push(term.norm())? {
            break;
        }
        ad = x.lie_bracket(&ad);
    }
    Ok(acc)
}

/// `sum_n C_n` under the truncation policy.
pub fn sum_series<L: LieElement>(s: &ZassenhausSeries<L>) -> Result<L> {
    let first = s.terms.first().ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    let mut monitor = SeriesMonitor::new();
    let mut acc = first.zero_like();
    for t in &s.terms {
        acc = acc.add_scaled(&L::Coeff::one(), t);
        if monitor.push(t.norm())? {
            break;
        }
    }
    Ok(acc)
}

/// Largest coefficient-norm difference between two series, term by term.
pub fn compare_series<L: LieElement>(a: &ZassenhausSeries<L>, b: &ZassenhausSeries<L>) -> Vec<f64> {
    a.terms.iter().zip(&b.terms).map(|(u, v)| u.add_scaled(&(-L::Coeff::one()), v).norm()).collect()
}

/// Gauss–Legendre nodes and weights on `[0, 1]` from the Jacobi matrix eigenproblem.
pub fn gauss_legendre(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!("quadrature order must be at least 2, got {order}")));
    }
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .map(|&x0| {
            // Newton polish on P_n, weight from 2 / ((1 - x^2) P_n'(x)^2)
            let mut x = x0;
            for _ in 0..3 {
                let (p, d) = legendre(order, x);
                x -= p / d;
            }
            let dp = legendre(order, x).1;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (x + 1.0), 0.5 * w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn conjugated<T: ComplexField<RealField = f64> + Copy>(x: &DMatrix<T>, y: &DMatrix<T>, t: f64) -> Result<DMatrix<T>> {
    let s = T::from_real(t);
    Ok(expm(&(x * -s))? * y * expm(&(x * s))?)
}

/// `int_0^1 exp(-tX) Y exp(tX) dt` for dense matrices.
pub fn duhamel_integral_dense<T>(
    x: &DMatrix<T>,
    y: &DMatrix<T>,
    quad_order: usize,
    exec: Execution,
) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (nodes, weights) = gauss_legendre(quad_order)?;
    let parts = par::map_range(exec, nodes.len(), |i| conjugated(x, y, nodes[i]).map(|m| m * T::from_real(weights[i])));
    let mut acc = DMatrix::zeros(y.nrows(), y.ncols());
    for p in parts {
        acc += p?;
    }
    Ok(acc)
}

/// `int_0^1 exp(-tX) Y exp(tX) dt` on the Fock space, one task per node.
pub fn duhamel_integral(
    x: &FockOperator,
    y: &FockOperator,
    quad_order: usize,
    exec: Execution,
) -> Result<FockOperator> {
    let (nodes, weights) = gauss_legendre(quad_order)?;
    let sectors = Sectors::of(&[x, y])?;
    let blocks =
        (0..sectors.len()).map(|c| Ok((sectors.block(x, c)?, sectors.block(y, c)?))).collect::<Result<Vec<_>>>()?;
    let per_node = par::map_range(exec, nodes.len(), |i| {
        blocks
            .iter()
            .map(|(bx, by)| conjugated(bx, by, nodes[i]).map(|m| m * Complex64::new(weights[i], 0.0)))
            .collect::<Result<Vec<_>>>()
    });
    let mut acc: Vec<DMatrix<Complex64>> =
        blocks.iter().map(|(_, by)| DMatrix::zeros(by.nrows(), by.ncols())).collect();
    for node in per_node {
        for (a, m) in acc.iter_mut().zip(node?) {
            *a += m;
        }
    }
    Ok(sectors.assemble_with_diagonal(&acc, Complex64::new(0.0, 0.0)))
}

#[derive(Debug, Clone)]
pub struct DuhamelResult {
    pub integral: FockOperator,
    pub series: FockOperator,
    pub residual: f64,
}

/// Quadrature integral against `sum_n (-1)^(n-1)/n! ad_X^(n-1) Y` evaluated with operator commutators.
pub fn duhamel_check(x: &FockOperator, y: &FockOperator, quad_order: usize, exec: Execution) -> Result<DuhamelResult> {
    let integral = duhamel_integral(x, y, quad_order, exec)?;
    let series = closed_form_sum(x, y)?;
    let residual = integral.distance(&series);
    Ok(DuhamelResult { integral, series, residual })
}

/// `|| exp(X) exp(Y') - exp(X+Y) ||_F` with `Y'` the closed-form Zassenhaus sum.
pub fn bch_side_check(x: &FockOperator, y: &FockOperator) -> Result<f64> {
    let yp = closed_form_sum(x, y)?;
    let total = x + y;
    let sectors = Sectors::of(&[x, &yp, &total])?;
    let mut sq = 0.0;
    for c in 0..sectors.len() {
        let lhs = expm(&sectors.block(x, c)?)? * expm(&sectors.block(&yp, c)?)?;
        sq += (lhs - expm(&sectors.block(&total, c)?)?).norm_squared();
    }
    Ok(sq.sqrt())
}

pub fn bch_side_check_dense(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let yp = closed_form_sum(x, y)?;
    let lhs = expm(x)? * expm(&yp)?;
    Ok(frobenius_distance(&lhs, &expm(&(x + y))?))
}

/// `|| exp(X) prod_{n=1}^{order} exp(C_n) - exp(X+Y) ||_F` with recursion terms.
pub fn truncated_product_error(x: &DMatrix<f64>, y: &DMatrix<f64>, order: usize) -> Result<f64> {
    let s = casas_recursion(x, y, order.max(2))?;
    let mut acc = expm(x)?;
    for c in s.terms.iter().take(order) {
        acc *= expm(c)?;
    }
    Ok(frobenius_distance(&acc, &expm(&(x + y))?))
}
