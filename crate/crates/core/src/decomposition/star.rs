//! Path-word algebra for the B-factor angles.
//!
//! Words are products of a `mu_i` head, steps `nu_{i->j}` and a `B_l` tail,
//! glued by the `*`-product: `nu_{i->j} * nu_{k->l} = delta_jk nu_{i->j} nu_{j->l}`
//! and likewise at the boundaries. Structurally equal words collapse, so a
//! linear combination is stored as one `(start, end)` matrix per number of
//! steps, with the projected `nu` values already multiplied in (head `mu`
//! values are applied by [`StarWord::project`]). Summing all words of length
//! `n` gives exactly `M^n`.
//!
//! Every bucket also remembers how its weight splits by the vertex the last
//! step leaves, which is what right-multiplication by the inverse steps
//! `nu^{*-1}` needs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{plan_from_gammas, DecompositionPlan, Provenance};
use crate::error::{Error, Result};
use crate::params::ClusterParams;
use crate::zassenhaus::SeriesMonitor;

#[derive(Debug, Clone, PartialEq)]
struct Bucket {
    total: DMatrix<f64>,
    /// `by_last[d]`: paths whose final step leaves `d`; `None` when unknown.
    by_last: Option<Vec<DMatrix<f64>>>,
}

impl Bucket {
    fn merge(&mut self, other: &Bucket) {
        self.total += &other.total;
        self.by_last = match (self.by_last.take(), &other.by_last) {
            (Some(mut a), Some(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Some(a)
            }
            _ => None,
        };
    }

    fn scaled(&self, c: f64) -> Bucket {
        Bucket { total: &self.total * c, by_last: self.by_last.as_ref().map(|v| v.iter().map(|m| m * c).collect()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarWord {
    n: usize,
    /// Starts with a `mu` symbol.
    head: bool,
    /// Ends with a `B` symbol.
    tail: bool,
    /// Keyed by the number of `nu` steps.
    buckets: BTreeMap<usize, Bucket>,
}

fn unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m
}

fn check_vertex(v: usize, n: usize) -> Result<()> {
    if v == 0 || v > n {
        return Err(Error::BlockOutOfRange { block: v, n_blocks: n });
    }
    Ok(())
}

impl StarWord {
    /// The empty word (the zero of the algebra).
    pub fn empty(n: usize) -> Self {
        StarWord { n, head: false, tail: false, buckets: BTreeMap::new() }
    }

    /// Sum of the zero-length words at every vertex (the `*`-unit).
    pub fn one(n: usize) -> Self {
        let mut buckets = BTreeMap::new();
        buckets.insert(0, Bucket { total: DMatrix::identity(n, n), by_last: None });
        StarWord { n, head: false, tail: false, buckets }
    }

    pub fn mu(i: usize, n: usize) -> Result<Self> {
        check_vertex(i, n)?;
        let mut w = Self::empty(n);
        w.head = true;
        w.buckets.insert(0, Bucket { total: unit(n, i - 1, i - 1), by_last: None });
        Ok(w)
    }

    pub fn b(k: usize, n: usize) -> Result<Self> {
        check_vertex(k, n)?;
        let mut w = Self::empty(n);
        w.tail = true;
        w.buckets.insert(0, Bucket { total: unit(n, k - 1, k - 1), by_last: None });
        Ok(w)
    }

    /// `sum_i mu_i` (weights applied at projection).
    pub fn mu_sum(n: usize) -> Self {
        let mut w = Self::one(n);
        w.head = true;
        w
    }

    /// `sum_l B_l`
    pub fn b_sum(n: usize) -> Self {
        let mut w = Self::one(n);
        w.tail = true;
        w
    }

    /// Single step `nu_{i->j}` carrying the weight `mu_ij`.
    pub fn nu(i: usize, j: usize, params: &ClusterParams) -> Result<Self> {
        let n = params.n_blocks();
        check_vertex(i, n)?;
        check_vertex(j, n)?;
        if i == j {
            return Err(Error::InvalidBlockPair { i, j, n_blocks: n });
        }
        let total = unit(n, i - 1, j - 1) * params.nu(i, j);
        let mut by_last = vec![DMatrix::zeros(n, n); n];
        by_last[i - 1] = total.clone();
        let mut w = Self::empty(n);
        w.buckets.insert(1, Bucket { total, by_last: Some(by_last) });
        Ok(w)
    }

    /// `sum_{i != j} nu_{i->j}`
    pub fn nu_sum(params: &ClusterParams) -> Self {
        let n = params.n_blocks();
        let m = params.transfer_matrix();
        let by_last = (0..n)
            .map(|d| {
                let mut r = DMatrix::zeros(n, n);
                r.set_row(d, &m.row(d));
                r
            })
            .collect();
        let mut w = Self::empty(n);
        w.buckets.insert(1, Bucket { total: m, by_last: Some(by_last) });
        w
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.values().all(|b| b.total.iter().all(|&v| v == 0.0))
    }

    /// Weight of the length-`len` words from `start` to `end` (1-based).
    pub fn coefficient(&self, len: usize, start: usize, end: usize) -> f64 {
        self.buckets.get(&len).map_or(0.0, |b| b.total[(start - 1, end - 1)])
    }

    pub fn norm(&self) -> f64 {
        self.buckets.values().fold(0.0, |acc, b| acc + b.total.norm_squared()).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        StarWord {
            n: self.n,
            head: self.head,
            tail: self.tail,
            buckets: self.buckets.iter().map(|(&k, b)| (k, b.scaled(c))).collect(),
        }
    }

    pub fn add(&self, other: &StarWord) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { left: self.n, right: other.n });
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if (self.head, self.tail) != (other.head, other.tail) {
            return Err(Error::InvalidArgument("cannot add words with different boundary symbols".into()));
        }
        let mut out = self.clone();
        for (&k, b) in &other.buckets {
            match out.buckets.get_mut(&k) {
                Some(mine) => mine.merge(b),
                None => {
                    out.buckets.insert(k, b.clone());
                }
            }
        }
        Ok(out)
    }

    /// `self * sum_{k->l} nu_{k->l}^{*-1}`: each word loses its final step
    /// `d -> e` and its weight is divided by `nu_{d->e}`; zero steps give the
    /// empty word.
    pub fn right_cancel(&self, params: &ClusterParams) -> Result<Self> {
        let n = self.n;
        if self.tail {
            return Err(Error::InvalidArgument("cannot cancel a step after a B symbol".into()));
        }
        let m = params.transfer_matrix();
        let mut out = StarWord { n, head: self.head, tail: false, buckets: BTreeMap::new() };
        for (&len, b) in &self.buckets {
            if len == 0 {
                if b.total.iter().any(|&v| v != 0.0) {
                    return Err(Error::InvalidArgument("a word without steps has nothing to cancel".into()));
                }
                continue;
            }
            let by_last = b
                .by_last
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("last step of a word is no longer known".into()))?;
            let mut total = DMatrix::zeros(n, n);
            for (d, part) in by_last.iter().enumerate() {
                for s in 0..n {
                    for e in 0..n {
                        let nu = m[(d, e)];
                        if nu != 0.0 {
                            total[(s, d)] += part[(s, e)] / nu;
                        }
                    }
                }
            }
            out.buckets.insert(len - 1, Bucket { total, by_last: None });
        }
        Ok(out)
    }

    /// Coefficients of `B_1..B_N` after substituting the `mu` values.
    pub fn project(&self, params: &ClusterParams) -> Result<Vec<f64>> {
        if !(self.head && self.tail) && !self.is_empty() {
            return Err(Error::InvalidArgument(
                "only words from a mu symbol to a B symbol project to B-coefficients".into(),
            ));
        }
        let mu = params.mu_vector();
        let mut out = vec![0.0; self.n];
        for b in self.buckets.values() {
            let row = mu.transpose() * &b.total;
            for (o, v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        Ok(out)
    }
}

/// Concatenation product; a `B` followed by anything or anything followed
/// by a `mu` is the empty word.
pub fn star_product(u: &StarWord, v: &StarWord) -> Result<StarWord> {
    if u.n != v.n {
        return Err(Error::DimensionMismatch { left: u.n, right: v.n });
    }
    let n = u.n;
    if u.tail || v.head || u.is_empty() || v.is_empty() {
        return Ok(StarWord::empty(n));
    }
    let mut buckets: BTreeMap<usize, Bucket> = BTreeMap::new();
    for (&lu, bu) in &u.buckets {
        for (&lv, bv) in &v.buckets {
            let total = &bu.total * &bv.total;
            let by_last = if lv >= 1 {
                bv.by_last.as_ref().map(|parts| parts.iter().map(|p| &bu.total * p).collect())
            } else if lu >= 1 {
                bu.by_last.as_ref().map(|parts| parts.iter().map(|p| p * &bv.total).collect())
            } else {
                None
            };
            let piece = Bucket { total, by_last };
            match buckets.get_mut(&(lu + lv)) {
                Some(b) => b.merge(&piece),
                None => {
                    buckets.insert(lu + lv, piece);
                }
            }
        }
    }
    Ok(StarWord { n, head: u.head, tail: v.tail, buckets })
}

/// `*e^x = sum_n x^{*n} / n!` under the series truncation policy.
pub fn star_exp(x: &StarWord) -> Result<StarWord> {
    if x.head || x.tail {
        return Err(Error::InvalidArgument("the *-exponential takes step words only".into()));
    }
    let mut monitor = SeriesMonitor::new();
    let mut power = StarWord::one(x.n);
    let mut acc = StarWord::empty(x.n);
    let mut fact = 1.0;
    for k in 0.. {
        if k > 0 {
            power = star_product(&power, x)?;
            fact *= k as f64;
        }
        let term = power.scale(1.0 / fact);
        acc = acc.add(&term)?;
        if monitor.push(term.norm())? {
            break;
        }
    }
    Ok(acc)
}

/// `gamma_l = pi( sum_i mu_i * sum_n (-1)^n/(n+1)! (sum nu)^{*n} * B_l )`.
pub fn star_gammas(params: &ClusterParams) -> Result<Vec<f64>> {
    let n = params.n_blocks();
    let nu = StarWord::nu_sum(params);
    let mut monitor = SeriesMonitor::new();
    let mut power = StarWord::one(n);
    let mut series = StarWord::empty(n);
    let mut coeff = 1.0;
    for k in 0.. {
        if k > 0 {
            power = star_product(&power, &nu)?;
            coeff *= -1.0 / (k as f64 + 1.0);
        }
        let term = power.scale(coeff);
        series = series.add(&term)?;
        if monitor.push(term.norm())? {
            break;
        }
    }
    let word = star_product(&star_product(&StarWord::mu_sum(n), &series)?, &StarWord::b_sum(n))?;
    word.project(params)
}

/// The closed `*`-form `mu * (1 - *e^{-sum nu}) * (sum nu^{*-1}) * B`.
///
/// Cancelling the last step of every word of length `n+1` returns each
/// length-`n` word once per outgoing nonzero step of its end vertex, so this
/// agrees with [`star_gammas`] only when every vertex has out-degree one
/// (two blocks with `mu_12 != 0`).
pub fn star_gammas_literal(params: &ClusterParams) -> Result<Vec<f64>> {
    let n = params.n_blocks();
    let e = star_exp(&StarWord::nu_sum(params).scale(-1.0))?;
    let one_minus = StarWord::one(n).add(&e.scale(-1.0))?;
    let cancelled = one_minus.right_cancel(params)?;
    let word = star_product(&star_product(&StarWord::mu_sum(n), &cancelled)?, &StarWord::b_sum(n))?;
    word.project(params)
}

pub fn star_decompose(params: &ClusterParams) -> Result<DecompositionPlan> {
    Ok(plan_from_gammas(params, &star_gammas(params)?, Provenance::StarAlgebra))
}
