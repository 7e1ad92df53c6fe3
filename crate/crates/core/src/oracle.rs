//! Brute-force ground truth.
//!
//! Full Fock-space exponentials are evaluated sector by sector: the states
//! touched by a set of operators split into connected components of their
//! joint sparsity graph, every operator in the set is block diagonal over
//! those components, and each block is exponentiated densely. The block
//! generators only ever connect a handful of determinants, so this stays
//! cheap up to the 14-mode ceiling.
//!
//! [`RestrictedRep`] is the `2^N`-dimensional span of per-block closed (`P`)
//! and open (`O`) pair states containing the reference; its matrix elements
//! are checked against the Fock construction for small `N`.

use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix, DVector};
use num::complex::Complex64;
use num::Zero;

use crate::algebra::{AlgebraElement, Generator};
use crate::decomposition::DecompositionPlan;
use crate::error::{Error, Result};
use crate::fock::{self, FockOperator, ModeIndexing};
use crate::numfmt::fmt_g17;
use crate::par::{self, Execution};
use crate::params::ClusterParams;

/// Largest block count for which restricted matrices are materialized densely.
pub const MAX_DENSE_BLOCKS: usize = 12;
/// Largest block count accepted by [`RestrictedRep::new`].
pub const MAX_RESTRICTED_BLOCKS: usize = 20;
/// Largest block count verified on the full Fock space.
pub const MAX_FOCK_BLOCKS: usize = 3;

/// Matrix exponential (Padé scaling and squaring).
pub fn expm<T>(a: &DMatrix<T>) -> Result<DMatrix<T>>
where
    T: ComplexField + Copy,
{
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { left: a.nrows(), right: a.ncols() });
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    let e = a.clone().exp();
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(e)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance<T: ComplexField<RealField = f64> + Copy>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    (a - b).norm()
}

/// Connected components of the joint sparsity graph of a set of operators.
#[derive(Debug, Clone)]
pub struct Sectors {
    modes: Arc<ModeIndexing>,
    components: Vec<Vec<usize>>,
    /// `(component, local index)` per state, `u32::MAX` when untouched.
    index: Vec<(u32, u32)>,
}

impl Sectors {
    pub fn of(ops: &[&FockOperator]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidArgument("no operators".into()))?;
        let dim = first.dim();
        if let Some(bad) = ops.iter().find(|o| o.dim() != dim) {
            return Err(Error::DimensionMismatch { left: dim, right: bad.dim() });
        }
        let mut parent: Vec<usize> = (0..dim).collect();
        let mut touched = vec![false; dim];
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for op in ops {
            for (r, c, _) in op.iter() {
                touched[r] = true;
                touched[c] = true;
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut root_slot = vec![u32::MAX; dim];
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut index = vec![(u32::MAX, u32::MAX); dim];
        for s in 0..dim {
            if !touched[s] {
                continue;
            }
            let root = find(&mut parent, s);
            if root_slot[root] == u32::MAX {
                root_slot[root] = components.len() as u32;
                components.push(Vec::new());
            }
            let c = root_slot[root];
            index[s] = (c, components[c as usize].len() as u32);
            components[c as usize].push(s);
        }
        Ok(Sectors { modes: Arc::new(first.modes().clone()), components, index })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, c: usize) -> &[usize] {
        &self.components[c]
    }

    pub fn largest(&self) -> usize {
        self.components.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Dense block of `op` on component `c`; entries leaving the component are an error.
    pub fn block(&self, op: &FockOperator, c: usize) -> Result<DMatrix<Complex64>> {
        let states = &self.components[c];
        let mut m = DMatrix::zeros(states.len(), states.len());
        for (li, &s) in states.iter().enumerate() {
            for (col, v) in op.row(s) {
                let (cc, lj) = self.index[col];
                if cc as usize != c {
                    return Err(Error::InvalidArgument("operator is not block diagonal over these sectors".into()));
                }
                m[(li, lj as usize)] = v;
            }
        }
        Ok(m)
    }

    /// Sparse operator with the given dense blocks and identity on untouched states.
    pub fn assemble(&self, blocks: &[DMatrix<Complex64>]) -> FockOperator {
        self.assemble_with_diagonal(blocks, Complex64::new(1.0, 0.0))
    }

    /// Like [`Sectors::assemble`] with `diag` on the untouched states.
    pub fn assemble_with_diagonal(&self, blocks: &[DMatrix<Complex64>], diag: Complex64) -> FockOperator {
        let mut triplets = Vec::new();
        for (s, &(c, _)) in self.index.iter().enumerate() {
            if c == u32::MAX && !diag.is_zero() {
                triplets.push((s, s, diag));
            }
        }
        for (states, m) in self.components.iter().zip(blocks) {
            for (i, &r) in states.iter().enumerate() {
                for (j, &c) in states.iter().enumerate() {
                    let v = m[(i, j)];
                    if !v.is_zero() {
                        triplets.push((r, c, v));
                    }
                }
            }
        }
        FockOperator::from_triplets(self.modes.clone(), triplets, 0.0)
    }

    /// Sum over sectors of a per-block quantity, in component order.
    fn map_blocks<U: Send>(&self, exec: Execution, f: impl Fn(usize) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
        par::map_range(exec, self.len(), f).into_iter().collect()
    }
}

/// `exp(op)` on the full Fock space.
pub fn fock_expm(op: &FockOperator) -> Result<FockOperator> {
    fock_expm_with(op, Execution::default())
}

pub fn fock_expm_with(op: &FockOperator, exec: Execution) -> Result<FockOperator> {
    let sectors = Sectors::of(&[op])?;
    let blocks = sectors.map_blocks(exec, |c| expm(&sectors.block(op, c)?))?;
    Ok(sectors.assemble(&blocks))
}

/// Where exactness checks are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationSpace {
    Fock,
    Restricted,
}

impl VerificationSpace {
    /// Full Fock space up to [`MAX_FOCK_BLOCKS`], restricted beyond.
    pub fn auto(n_blocks: usize) -> Self {
        if n_blocks <= MAX_FOCK_BLOCKS {
            VerificationSpace::Fock
        } else {
            VerificationSpace::Restricted
        }
    }
}

fn plan_terms(plan: &DecompositionPlan) -> Vec<(Generator, f64)> {
    plan.factors.iter().map(|f| (f.gen, f.angle)).collect()
}

fn dense_product<T>(factors: &[DMatrix<T>], dim: usize) -> Result<DMatrix<T>>
where
    T: ComplexField + Copy,
{
    let mut acc = DMatrix::<T>::identity(dim, dim);
    for g in factors {
        acc = &acc * expm(g)?;
    }
    Ok(acc)
}

/// `|| prod_f exp(angle_f G_f) - exp(X + Y) ||_F` on the full Fock space.
pub fn plan_residual_fock(plan: &DecompositionPlan, params: &ClusterParams, exec: Execution) -> Result<f64> {
    let modes = ModeIndexing::two_d_blocks(params.n_blocks())?;
    let total = &fock::build_x(params, &modes)? + &fock::build_y(params, &modes)?;
    let gens = plan_terms(plan)
        .into_iter()
        .map(|(g, a)| Ok(fock::build_generator(g, &modes)?.scale(a)))
        .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<&FockOperator> = gens.iter().collect();
    all.push(&total);
    let sectors = Sectors::of(&all)?;
    let sq = sectors.map_blocks(exec, |c| {
        let blocks = gens.iter().map(|g| sectors.block(g, c)).collect::<Result<Vec<_>>>()?;
        let dim = sectors.component(c).len();
        let lhs = dense_product(&blocks, dim)?;
        let rhs = expm(&sectors.block(&total, c)?)?;
        Ok((lhs - rhs).norm_squared())
    })?;
    Ok(sq.iter().fold(0.0, |acc, v| acc + v).sqrt())
}

/// Same check on the restricted representation.
pub fn plan_residual_restricted(plan: &DecompositionPlan, params: &ClusterParams) -> Result<f64> {
    let rep = RestrictedRep::new(params.clone())?;
    let factors = plan_terms(plan).into_iter().map(|(g, a)| Ok(rep.generator(g)? * a)).collect::<Result<Vec<_>>>()?;
    let lhs = dense_product(&factors, rep.dim())?;
    let rhs = expm(&(rep.x_r()? + rep.y_r()?))?;
    Ok(frobenius_distance(&lhs, &rhs))
}

/// Plan exactness residual in the chosen space.
pub fn verify_plan(
    plan: &DecompositionPlan,
    params: &ClusterParams,
    space: VerificationSpace,
    exec: Execution,
) -> Result<f64> {
    match space {
        VerificationSpace::Fock => plan_residual_fock(plan, params, exec),
        VerificationSpace::Restricted => plan_residual_restricted(plan, params),
    }
}

/// Verifies many independent instances, one task per instance.
pub fn verify_batch(
    instances: &[(DecompositionPlan, ClusterParams)],
    space: VerificationSpace,
    exec: Execution,
) -> Vec<Result<f64>> {
    // Parallelism lives at the instance level; each check runs sequentially.
    par::map(exec, instances, |(plan, params)| verify_plan(plan, params, space, Execution::Sequential))
}

/// The span of per-block closed/open pair states.
///
/// Label bit `k-1` is set when block `k` is open. `B_r(k)` maps `P -> O` on
/// block `k` with sign `+` and `O -> P` with `-`; `A_r(i,j)` maps
/// `P_i P_j -> O_i O_j` with `+` and back with `-`.
#[derive(Debug, Clone)]
pub struct RestrictedRep {
    params: ClusterParams,
}

impl RestrictedRep {
    pub fn new(params: ClusterParams) -> Result<Self> {
        if params.n_blocks() == 0 || params.n_blocks() > MAX_RESTRICTED_BLOCKS {
            return Err(Error::InvalidArgument(format!(
                "restricted representation needs 1..={MAX_RESTRICTED_BLOCKS} blocks, got {}",
                params.n_blocks()
            )));
        }
        Ok(RestrictedRep { params })
    }

    pub fn n_blocks(&self) -> usize {
        self.params.n_blocks()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_blocks()
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    /// Sparse action `(row, col, value)` of a generator.
    pub fn generator_triplets(&self, g: Generator) -> Result<Vec<(usize, usize, f64)>> {
        let n = self.n_blocks();
        let mut out = Vec::new();
        match g {
            Generator::B(k) => {
                if k == 0 || k > n {
                    return Err(Error::BlockOutOfRange { block: k, n_blocks: n });
                }
                let bit = 1 << (k - 1);
                for s in 0..self.dim() {
                    if s & bit == 0 {
                        out.push((s | bit, s, 1.0));
                    } else {
                        out.push((s & !bit, s, -1.0));
                    }
                }
            }
            Generator::A(i, j) => {
                if !(1 <= i && i < j && j <= n) {
                    return Err(Error::InvalidBlockPair { i, j, n_blocks: n });
                }
                let both = (1 << (i - 1)) | (1 << (j - 1));
                for s in 0..self.dim() {
                    match s & both {
                        0 => out.push((s | both, s, 1.0)),
                        m if m == both => out.push((s & !both, s, -1.0)),
                        _ => {}
                    }
                }
            }
        }
        Ok(out)
    }

    fn check_dense(&self) -> Result<()> {
        if self.n_blocks() > MAX_DENSE_BLOCKS {
            return Err(Error::InvalidArgument(format!(
                "dense restricted matrices limited to {MAX_DENSE_BLOCKS} blocks"
            )));
        }
        Ok(())
    }

    pub fn generator(&self, g: Generator) -> Result<DMatrix<f64>> {
        self.combination(&[(g, 1.0)])
    }

    pub fn combination(&self, terms: &[(Generator, f64)]) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for &(g, c) in terms {
            for (r, col, v) in self.generator_triplets(g)? {
                m[(r, col)] += c * v;
            }
        }
        Ok(m)
    }

    pub fn a_r(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        self.generator(Generator::A(i, j))
    }

    pub fn b_r(&self, k: usize) -> Result<DMatrix<f64>> {
        self.generator(Generator::B(k))
    }

    pub fn x_r(&self) -> Result<DMatrix<f64>> {
        self.combination(&AlgebraElement::x_of(&self.params).terms())
    }

    pub fn y_r(&self) -> Result<DMatrix<f64>> {
        self.combination(&AlgebraElement::y_of(&self.params).terms())
    }

    /// `|P...P>`
    pub fn reference(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = 1.0;
        v
    }

    /// Columns are the Fock-space images of the restricted basis states.
    pub fn intertwiner(&self, modes: &ModeIndexing) -> Result<DMatrix<Complex64>> {
        if modes.n_blocks() != self.n_blocks() {
            return Err(Error::DimensionMismatch { left: self.n_blocks(), right: modes.n_blocks() });
        }
        let cols =
            (0..self.dim()).map(|label| fock::build_block_state(label as u64, modes)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Largest `|| G V - V G_r ||_F` over all generators, with `V` the intertwiner.
    pub fn intertwiner_residual(&self, modes: &ModeIndexing) -> Result<f64> {
        let v = self.intertwiner(modes)?;
        let n = self.n_blocks();
        let mut gens: Vec<Generator> = (1..=n).map(Generator::B).collect();
        for i in 1..=n {
            for j in i + 1..=n {
                gens.push(Generator::A(i, j));
            }
        }
        let mut worst = 0.0f64;
        for g in gens {
            let full = fock::build_generator(g, modes)?;
            let gv = DMatrix::from_columns(
                &(0..v.ncols()).map(|c| full.apply(&v.column(c).into_owned())).collect::<Vec<_>>(),
            );
            let vr = &v * self.generator(g)?.map(|x| Complex64::new(x, 0.0));
            worst = worst.max((gv - vr).norm());
        }
        Ok(worst)
    }
}

/// One row of a Trotter comparison; `k = 0` is the exact plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrotterRow {
    pub k: usize,
    pub error: f64,
    pub factor_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrotterReport {
    pub rows: Vec<TrotterRow>,
}

impl TrotterReport {
    pub fn baseline(&self) -> Option<&TrotterRow> {
        self.rows.iter().find(|r| r.k == 0)
    }

    pub fn row(&self, k: usize) -> Option<&TrotterRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# k=0 denotes exact plan\nk,error,factor_count\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.k, fmt_g17(r.error), r.factor_count));
        }
        out
    }
}

fn trotter_error_dense<T>(x: &DMatrix<T>, y: &DMatrix<T>, exact: &DMatrix<T>, k: usize) -> Result<f64>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let s = T::from_real(1.0 / k as f64);
    let step = expm(&(x * s))? * expm(&(y * s))?;
    let mut acc = DMatrix::<T>::identity(x.nrows(), x.ncols());
    for _ in 0..k {
        acc = &acc * &step;
    }
    Ok(frobenius_distance(&acc, exact))
}

/// Errors of `[exp(X/k) exp(Y/k)]^k` against `exp(X+Y)` plus the exact-plan baseline.
pub fn trotter_compare(
    params: &ClusterParams,
    plan: &DecompositionPlan,
    k_list: &[usize],
    space: VerificationSpace,
    exec: Execution,
) -> Result<TrotterReport> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::InvalidArgument("k list must be nonempty with k >= 1".into()));
    }
    let baseline = verify_plan(plan, params, space, exec)?;
    let errors: Vec<f64> = match space {
        VerificationSpace::Restricted => {
            let rep = RestrictedRep::new(params.clone())?;
            let (x, y) = (rep.x_r()?, rep.y_r()?);
            let exact = expm(&(&x + &y))?;
            par::map(exec, k_list, |&k| trotter_error_dense(&x, &y, &exact, k)).into_iter().collect::<Result<_>>()?
        }
        VerificationSpace::Fock => {
            let modes = ModeIndexing::two_d_blocks(params.n_blocks())?;
            let x = fock::build_x(params, &modes)?;
            let y = fock::build_y(params, &modes)?;
            let total = &x + &y;
            let sectors = Sectors::of(&[&x, &y, &total])?;
            let blocks = (0..sectors.len())
                .map(|c| Ok((sectors.block(&x, c)?, sectors.block(&y, c)?, expm(&sectors.block(&total, c)?)?)))
                .collect::<Result<Vec<_>>>()?;
            par::map(exec, k_list, |&k| {
                let sq = blocks
                    .iter()
                    .map(|(bx, by, ex)| trotter_error_dense(bx, by, ex, k).map(|e| e * e))
                    .sum::<Result<f64>>()?;
                Ok(sq.sqrt())
            })
            .into_iter()
            .collect::<Result<_>>()?
        }
    };
    let mut rows = vec![TrotterRow { k: 0, error: baseline, factor_count: plan.factors.len() }];
    rows.extend(k_list.iter().zip(errors).map(|(&k, error)| TrotterRow { k, error, factor_count: 2 * k }));
    Ok(TrotterReport { rows })
}

/// `|| exp(X) exp(sum_k gamma_k B_k) - exp(X + Y) ||_F`: a single Trotter step
/// with the B-angles replaced by the reparametrized ones.
pub fn disentangled_error(params: &ClusterParams, gamma: &[f64], space: VerificationSpace) -> Result<f64> {
    let n = params.n_blocks();
    if gamma.len() != n {
        return Err(Error::DimensionMismatch { left: gamma.len(), right: n });
    }
    let y_terms: Vec<_> = gamma.iter().enumerate().map(|(k, &g)| (Generator::B(k + 1), g)).collect();
    match space {
        VerificationSpace::Restricted => {
            let rep = RestrictedRep::new(params.clone())?;
            let x = rep.x_r()?;
            let lhs = expm(&x)? * expm(&rep.combination(&y_terms)?)?;
            Ok(frobenius_distance(&lhs, &expm(&(x + rep.y_r()?))?))
        }
        VerificationSpace::Fock => {
            let modes = ModeIndexing::two_d_blocks(n)?;
            let x = fock::build_x(params, &modes)?;
            let yp = fock::build_combination(&y_terms, &modes)?;
            let total = &x + &fock::build_y(params, &modes)?;
            let sectors = Sectors::of(&[&x, &yp, &total])?;
            let sq = sectors.map_blocks(Execution::default(), |c| {
                let lhs = expm(&sectors.block(&x, c)?)? * expm(&sectors.block(&yp, c)?)?;
                Ok((lhs - expm(&sectors.block(&total, c)?)?).norm_squared())
            })?;
            Ok(sq.iter().fold(0.0, |acc, v| acc + v).sqrt())
        }
    }
}

/// `|<plan phi0 | exp(X+Y) phi0>|` on the full Fock space.
pub fn state_fidelity_check(plan: &DecompositionPlan, params: &ClusterParams) -> Result<f64> {
    let modes = ModeIndexing::two_d_blocks(params.n_blocks())?;
    let phi0 = fock::build_reference(&modes)?;
    let mut planned = phi0.clone();
    for f in plan.factors.iter().rev() {
        let u = fock_expm(&fock::build_generator(f.gen, &modes)?.scale(f.angle))?;
        planned = u.apply(&planned);
    }
    let total = &fock::build_x(params, &modes)? + &fock::build_y(params, &modes)?;
    let exact = fock_expm(&total)?.apply(&phi0);
    Ok(planned.dotc(&exact).norm())
}

/// Embedding of `sum a_ij A_ij + sum b_k B_k` as the `(N+1) x (N+1)` matrix
/// `[[S, b], [0, 0]]` with `S_ij = S_ji = a_ij`.
///
/// Pure-`B` elements commute and `[X, Y]` reproduces the symbolic bracket
/// whenever the `A`-part of the operands commute, so `(x_of, y_of)` images
/// form a pair with the no-mixed-adjoint property for every `N`.
pub fn affine_realization(e: &AlgebraElement) -> DMatrix<f64> {
    let n = e.n_blocks();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for ((i, j), v) in e.a_coeffs() {
        m[(i - 1, j - 1)] = v;
        m[(j - 1, i - 1)] = v;
    }
    for k in 0..n {
        m[(k, n)] = e.b_coeffs()[k];
    }
    m
}

/// `|| exp(X) exp(sum gamma_k B_k) - exp(X + Y) ||_F` in the affine realization.
pub fn affine_disentangled_error(params: &ClusterParams, gamma: &[f64]) -> Result<f64> {
    let x = affine_realization(&AlgebraElement::x_of(params));
    let y = affine_realization(&AlgebraElement::y_of(params));
    let mut yp = AlgebraElement::zero(params.n_blocks());
    for (k, &g) in gamma.iter().enumerate() {
        yp.add_generator(Generator::B(k + 1), g)?;
    }
    let lhs = expm(&x)? * expm(&affine_realization(&yp))?;
    Ok(frobenius_distance(&lhs, &expm(&(x + y))?))
}

/// One commutator `[left, right]` checked against its symbolic value.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub left: Generator,
    pub right: Generator,
    pub expected: Vec<(Generator, f64)>,
    pub residual: f64,
}

/// Generator pairs covering every structure constant once:
/// `[A_ij, A_kl]` for `(i,j) <= (k,l)`, `[B_k, B_m]` for `k <= m`, and all `[A_ij, B_k]`.
pub fn structure_pairs(n_blocks: usize) -> Vec<(Generator, Generator)> {
    let pairs: Vec<Generator> =
        (1..=n_blocks).flat_map(|i| (i + 1..=n_blocks).map(move |j| Generator::A(i, j))).collect();
    let singles: Vec<Generator> = (1..=n_blocks).map(Generator::B).collect();
    let mut out = Vec::new();
    for (x, a) in pairs.iter().enumerate() {
        out.extend(pairs[x..].iter().map(|b| (*a, *b)));
    }
    for (x, a) in singles.iter().enumerate() {
        out.extend(singles[x..].iter().map(|b| (*a, *b)));
    }
    for a in &pairs {
        out.extend(singles.iter().map(|b| (*a, *b)));
    }
    out
}

/// Frobenius residual of each structure constant in the chosen representation.
pub fn structure_constant_rows(n_blocks: usize, space: VerificationSpace) -> Result<Vec<IdentityRow>> {
    let pairs = structure_pairs(n_blocks);
    let expected: Vec<AlgebraElement> = pairs
        .iter()
        .map(|&(l, r)| {
            crate::algebra::bracket(&AlgebraElement::generator(l, n_blocks)?, &AlgebraElement::generator(r, n_blocks)?)
        })
        .collect::<Result<_>>()?;
    let residuals: Vec<f64> = match space {
        VerificationSpace::Fock => {
            if n_blocks > MAX_FOCK_BLOCKS {
                return Err(Error::DimensionTooLarge { n_modes: 4 * n_blocks, max_modes: 4 * MAX_FOCK_BLOCKS });
            }
            let modes = ModeIndexing::two_d_blocks(n_blocks)?;
            pairs
                .iter()
                .zip(&expected)
                .map(|(&(l, r), e)| {
                    let lhs = fock::build_generator(l, &modes)?.commutator(&fock::build_generator(r, &modes)?);
                    Ok(lhs.distance(&e.embed(&modes)?))
                })
                .collect::<Result<_>>()?
        }
        VerificationSpace::Restricted => {
            let rep = RestrictedRep::new(ClusterParams::new(n_blocks))?;
            pairs
                .iter()
                .zip(&expected)
                .map(|(&(l, r), e)| {
                    let (gl, gr) = (rep.generator(l)?, rep.generator(r)?);
                    let lhs = &gl * &gr - &gr * &gl;
                    Ok((lhs - rep.combination(&e.terms())?).norm())
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(pairs
        .into_iter()
        .zip(expected)
        .zip(residuals)
        .map(|(((left, right), e), residual)| IdentityRow { left, right, expected: e.terms(), residual })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{decompose, Factor, Provenance};
    use crate::rng::seeded;

    #[test]
    fn expm_basics() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
        let theta = 0.7;
        let g = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) * theta;
        let r = expm(&g).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        assert!((r - rot).norm() < 1e-15);
        let mut bad = z.clone();
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(expm(&bad), Err(Error::NonFinite)));
    }

    #[test]
    fn expm_inverse_and_commuting_sum() {
        use rand::Rng;
        let mut rng = seeded(5);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let e = expm(&a).unwrap() * expm(&(-&a)).unwrap();
        assert!((e - DMatrix::identity(6, 6)).norm() < 1e-12);
        let b = &a * &a * 0.3 + &a * 0.2;
        let lhs = expm(&(&a + &b)).unwrap();
        let rhs = expm(&a).unwrap() * expm(&b).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * expm(&(&a + &b)).unwrap().norm());
    }

    #[test]
    fn fock_exponentials_are_unitary() {
        let mut rng = seeded(9);
        let params = ClusterParams::random(3, 0.5, &mut rng);
        let modes = ModeIndexing::two_d_blocks(3).unwrap();
        let g = &fock::build_x(&params, &modes).unwrap() + &fock::build_y(&params, &modes).unwrap();
        let u = fock_expm(&g).unwrap();
        let id = FockOperator::identity(&modes).unwrap();
        assert!(u.adjoint().matmul(&u).distance(&id) < 1e-12);
        let seq = fock_expm_with(&g, Execution::Sequential).unwrap();
        assert!(seq.distance(&u) == 0.0);
    }

    #[test]
    fn sector_split_matches_dense() {
        let modes = ModeIndexing::two_d_blocks(1).unwrap();
        let g = fock::build_b(1, &modes).unwrap().scale(0.4);
        let dense = expm(&g.to_dense()).unwrap();
        assert!((fock_expm(&g).unwrap().to_dense() - dense).norm() < 1e-15);
    }

    #[test]
    fn restricted_matches_fock_elements() {
        for n in 1..=3 {
            let rep = RestrictedRep::new(ClusterParams::new(n)).unwrap();
            let modes = ModeIndexing::two_d_blocks(n).unwrap();
            assert!(rep.intertwiner_residual(&modes).unwrap() < 1e-13, "n={n}");
            let v = rep.intertwiner(&modes).unwrap();
            let gram = v.adjoint() * &v;
            assert!((gram - DMatrix::identity(rep.dim(), rep.dim())).norm() < 1e-14);
            let phi0 = fock::build_reference(&modes).unwrap();
            assert!((v.column(0) - phi0).norm() < 1e-15);
        }
    }

    #[test]
    fn one_block_restricted() {
        let mut p = ClusterParams::new(1);
        p.set_single(1, 0.3).unwrap();
        let rep = RestrictedRep::new(p).unwrap();
        assert_eq!(rep.x_r().unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(rep.y_r().unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, -0.3, 0.3, 0.0]));
    }

    #[test]
    fn restricted_a_b_bracket_has_parity_factor() {
        let rep = RestrictedRep::new(ClusterParams::new(2)).unwrap();
        let (a, b1, b2) = (rep.a_r(1, 2).unwrap(), rep.b_r(1).unwrap(), rep.b_r(2).unwrap());
        let c = &a * &b1 - &b1 * &a;
        // [A_r, B_r(1)] = Z_1 B_r(2) with Z_1 = +1 on P, -1 on O.
        let z1 = DMatrix::from_diagonal(&DVector::from_fn(4, |s, _| if s & 1 == 0 { 1.0 } else { -1.0 }));
        assert!((&c - z1 * &b2).norm() < 1e-15);
        assert!((c - b2).norm() > 1.0);
    }

    #[test]
    fn commuting_inputs_trotterize_exactly() {
        let mut p = ClusterParams::new(2);
        p.set_single(1, 0.3).unwrap();
        p.set_single(2, -0.2).unwrap();
        let plan = decompose(&p).unwrap();
        for space in [VerificationSpace::Fock, VerificationSpace::Restricted] {
            let r = trotter_compare(&p, &plan, &[1, 2], space, Execution::default()).unwrap();
            assert!(r.row(1).unwrap().error < 1e-13);
            assert!(r.baseline().unwrap().error < 1e-13);
        }
    }

    #[test]
    fn csv_layout() {
        let r = TrotterReport {
            rows: vec![
                TrotterRow { k: 0, error: 0.0, factor_count: 3 },
                TrotterRow { k: 1, error: 0.5, factor_count: 2 },
            ],
        };
        assert_eq!(r.to_csv(), "# k=0 denotes exact plan\nk,error,factor_count\n0,0,3\n1,0.5,2\n");
    }

    #[test]
    fn zero_params_have_unit_fidelity() {
        let p = ClusterParams::new(2);
        let plan = decompose(&p).unwrap();
        assert_eq!(state_fidelity_check(&plan, &p).unwrap(), 1.0);
    }

    #[test]
    fn batch_matches_sequential() {
        let mut rng = seeded(3);
        let inst: Vec<_> = (0..4)
            .map(|_| {
                let p = ClusterParams::random(4, 0.5, &mut rng);
                (decompose(&p).unwrap(), p)
            })
            .collect();
        let a = verify_batch(&inst, VerificationSpace::Restricted, Execution::Parallel);
        let b = verify_batch(&inst, VerificationSpace::Restricted, Execution::Sequential);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
        }
    }

    #[test]
    fn affine_pair_has_no_mixed_adjoints() {
        let mut rng = seeded(21);
        let p = ClusterParams::random(4, 0.5, &mut rng);
        let x = affine_realization(&AlgebraElement::x_of(&p));
        let y = affine_realization(&AlgebraElement::y_of(&p));
        let r = crate::algebra::check_nma(&x, &y, 6, 1e-12).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn single_generator_plan_is_exact_everywhere() {
        let mut p = ClusterParams::new(2);
        p.set_pair(1, 2, 0.4).unwrap();
        let plan = DecompositionPlan {
            provenance: Provenance::PhiMatrix,
            factors: vec![Factor { gen: Generator::A(1, 2), angle: 0.4 }],
        };
        assert!(plan_residual_fock(&plan, &p, Execution::default()).unwrap() < 1e-14);
        assert!(plan_residual_restricted(&plan, &p).unwrap() < 1e-14);
    }

    #[test]
    fn structure_table_shape() {
        let rows = structure_constant_rows(2, VerificationSpace::Restricted).unwrap();
        assert_eq!(rows.len(), 6);
        let row = rows.iter().find(|r| r.left == Generator::A(1, 2) && r.right == Generator::B(1)).unwrap();
        assert_eq!(row.expected, vec![(Generator::B(2), 1.0)]);
        // B-only brackets vanish in both spaces
        for space in [VerificationSpace::Fock, VerificationSpace::Restricted] {
            for r in structure_constant_rows(2, space).unwrap() {
                if matches!((r.left, r.right), (Generator::B(_), Generator::B(_))) {
                    assert_eq!(r.residual, 0.0);
                }
            }
        }
        assert_eq!(structure_pairs(3).len(), 6 + 6 + 9);
        assert!(structure_constant_rows(4, VerificationSpace::Fock).is_err());
    }
}
