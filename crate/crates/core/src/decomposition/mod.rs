//! Finite product decompositions
//! `exp(X + Y) = prod_{i<j} exp(mu_ij A_ij) * prod_k exp(gamma_k B_k)`
//! with `gamma = phi(M) mu` and `phi(z) = (1 - e^{-z}) / z`.
//!
//! Three routes produce the angles: the two-block sinh/cosh formulas, the
//! matrix function `phi(M)`, and the path-sum algebra of [`star`], which
//! never inverts `M`.

pub mod star;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::algebra::Generator;
use crate::error::{Error, Result};
use crate::numfmt::G17;
use crate::params::ClusterParams;

pub use star::{star_decompose, star_exp, star_gammas, star_gammas_literal, star_product, StarWord};

/// Symmetric hollow matrix of the couplings `nu_{i->j} = mu_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix(DMatrix<f64>);

impl TransferMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { left: m.nrows(), right: m.ncols() });
        }
        for i in 0..m.nrows() {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("transfer matrix diagonal entry {i} is nonzero")));
            }
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::InvalidArgument(format!("transfer matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(TransferMatrix(m))
    }

    pub fn from_params(params: &ClusterParams) -> Self {
        TransferMatrix(params.transfer_matrix())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Ratio of extreme singular values (`inf` when singular).
    pub fn condition_number(&self) -> f64 {
        condition_number(&self.0)
    }
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `phi(M) = sum_k (-1)^k M^k / (k+1)!`.
///
/// The series is summed for `M / 2^s` with norm at most 1/2 and then
/// doubled back with `phi(2Z) = phi(Z) (I - Z phi(Z) / 2)`. No inverse is
/// taken, so singular `M` is fine.
pub fn phi_of_m(m: &TransferMatrix) -> DMatrix<f64> {
    phi_of_matrix(m.matrix())
}

pub fn phi_of_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let norm = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let mut z = m / 2f64.powi(s);
    let mut phi = id.clone();
    let mut term = id.clone();
    for k in 1..40 {
        term = &term * &z * (-1.0 / (k as f64 + 1.0));
        phi += &term;
        if term.norm() <= f64::EPSILON * 1e-2 * phi.norm() {
            break;
        }
    }
    for _ in 0..s {
        phi = &phi * (&id - &z * &phi * 0.5);
        z *= 2.0;
    }
    phi
}

/// Which route produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    N2ClosedForm,
    PhiMatrix,
    StarAlgebra,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::N2ClosedForm => "n2_closed_form",
            Provenance::PhiMatrix => "phi_matrix",
            Provenance::StarAlgebra => "star_algebra",
        }
    }
}

/// `exp(angle * gen)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub gen: Generator,
    pub angle: f64,
}

impl Serialize for Factor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        match self.gen {
            Generator::A(i, j) => {
                map.serialize_entry("gen", "A")?;
                map.serialize_entry("i", &i)?;
                map.serialize_entry("j", &j)?;
            }
            Generator::B(k) => {
                map.serialize_entry("gen", "B")?;
                map.serialize_entry("k", &k)?;
            }
        }
        map.serialize_entry("angle", &G17(self.angle))?;
        map.end()
    }
}

/// Ordered product of generator exponentials, leftmost factor first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionPlan {
    pub provenance: Provenance,
    pub factors: Vec<Factor>,
}

impl DecompositionPlan {
    pub fn a_count(&self) -> usize {
        self.factors.iter().filter(|f| matches!(f.gen, Generator::A(..))).count()
    }

    pub fn b_count(&self) -> usize {
        self.factors.iter().filter(|f| matches!(f.gen, Generator::B(_))).count()
    }

    /// Angle of `B_k`, or 0 when absent.
    pub fn b_angle(&self, k: usize) -> f64 {
        self.factors.iter().filter(|f| f.gen == Generator::B(k)).map(|f| f.angle).sum()
    }

    pub fn b_angles(&self, n_blocks: usize) -> Vec<f64> {
        (1..=n_blocks).map(|k| self.b_angle(k)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization is infallible")
    }

    /// Same plan with zero-angle factors removed.
    pub fn pruned(&self) -> Self {
        DecompositionPlan {
            provenance: self.provenance,
            factors: self.factors.iter().copied().filter(|f| f.angle != 0.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMethod {
    Closed,
    Phi,
    Star,
}

fn assemble(params: &ClusterParams, gamma: &[f64], provenance: Provenance) -> DecompositionPlan {
    let mut factors: Vec<Factor> =
        params.active_pairs().map(|((i, j), mu)| Factor { gen: Generator::A(i, j), angle: mu }).collect();
    factors.extend(gamma.iter().enumerate().map(|(k, &g)| Factor { gen: Generator::B(k + 1), angle: g }));
    DecompositionPlan { provenance, factors }
}

/// `gamma = phi(M) mu`.
pub fn phi_gammas(params: &ClusterParams) -> Vec<f64> {
    let phi = phi_of_matrix(&params.transfer_matrix());
    (phi.transpose() * params.mu_vector()).iter().copied().collect()
}

fn sinhc(m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else {
        m.sinh() / m
    }
}

/// `(cosh m - 1) / m` in the cancellation-free form `2 sinh^2(m/2) / m`.
fn coshc1(m: f64) -> f64 {
    if m == 0.0 {
        0.0
    } else {
        2.0 * (0.5 * m).sinh().powi(2) / m
    }
}

/// Two-block formulas; every other block only carries `mu_k`.
pub fn n2_gammas(params: &ClusterParams) -> Result<Vec<f64>> {
    if let Some(((i, j), _)) = params.active_pairs().find(|&(p, _)| p != (1, 2)) {
        return Err(Error::InvalidArgument(format!(
            "two-block closed form needs mu_ij = 0 outside (1,2); found ({i},{j})"
        )));
    }
    let n = params.n_blocks();
    let mut g: Vec<f64> = (1..=n).map(|k| params.single(k)).collect();
    if n >= 2 {
        let m = params.pair(1, 2);
        let (s, c) = (sinhc(m), coshc1(m));
        let (m1, m2) = (params.single(1), params.single(2));
        g[0] = s * m1 - c * m2;
        g[1] = s * m2 - c * m1;
    }
    Ok(g)
}

pub fn n2_closed_form(params: &ClusterParams) -> Result<DecompositionPlan> {
    Ok(assemble(params, &n2_gammas(params)?, Provenance::N2ClosedForm))
}

/// Plan from `phi(M)`.
pub fn decompose(params: &ClusterParams) -> Result<DecompositionPlan> {
    Ok(assemble(params, &phi_gammas(params), Provenance::PhiMatrix))
}

pub fn decompose_with(params: &ClusterParams, method: PlanMethod) -> Result<DecompositionPlan> {
    match method {
        PlanMethod::Closed => n2_closed_form(params),
        PlanMethod::Phi => decompose(params),
        PlanMethod::Star => star_decompose(params),
    }
}

pub(crate) fn plan_from_gammas(params: &ClusterParams, gamma: &[f64], provenance: Provenance) -> DecompositionPlan {
    assemble(params, gamma, provenance)
}

/// Angles of the reparametrized B-factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamResult {
    pub gamma: Vec<f64>,
    /// `(alpha, beta, gamma) = (mu_12, gamma_1, gamma_2)` for two blocks.
    pub alpha_beta_gamma: Option<(f64, f64, f64)>,
}

pub fn reparametrize(params: &ClusterParams) -> ReparamResult {
    let gamma = phi_gammas(params);
    let alpha_beta_gamma = (params.n_blocks() == 2).then(|| (params.pair(1, 2), gamma[0], gamma[1]));
    ReparamResult { gamma, alpha_beta_gamma }
}

pub const JACOBIAN_CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct JacobianReport {
    /// Rows: outputs `(mu_ij..., gamma_k...)`; columns: inputs `(mu_ij..., mu_k...)`.
    pub matrix: DMatrix<f64>,
    pub condition: f64,
    /// Condition number above [`JACOBIAN_CONDITION_LIMIT`].
    pub ill_conditioned: bool,
}

fn reparam_map(n: usize, coords: &[f64]) -> Result<DVector<f64>> {
    let p = ClusterParams::from_coordinates(n, coords)?;
    let n_pairs = n * (n - 1) / 2;
    let mut out = coords[..n_pairs].to_vec();
    out.extend(phi_gammas(&p));
    Ok(DVector::from_vec(out))
}

/// Central-difference Jacobian of `(mu_ij, mu_k) -> (mu_ij, gamma_k)`.
pub fn reparam_jacobian(params: &ClusterParams, h: f64) -> Result<JacobianReport> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let n = params.n_blocks();
    let x0 = params.to_coordinates();
    let dim = x0.len();
    let mut j = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[c] += h;
        xm[c] -= h;
        let col = (reparam_map(n, &xp)? - reparam_map(n, &xm)?) / (2.0 * h);
        j.set_column(c, &col);
    }
    let condition = condition_number(&j);
    Ok(JacobianReport { matrix: j, condition, ill_conditioned: condition > JACOBIAN_CONDITION_LIMIT })
}

/// `d gamma_k / d mu_l = phi(M)_{lk}`, indexed `[(l, k)]`.
pub fn analytic_gamma_mu_jacobian(params: &ClusterParams) -> DMatrix<f64> {
    phi_of_matrix(&params.transfer_matrix())
}

/// Four-block parameters with every `mu_ij` nonzero and `det M = 0`.
///
/// `det M` is quadratic in `mu_12` with the others fixed, so a random draw is
/// completed by solving for a real root and polishing it with Newton steps.
pub fn find_singular_witness<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> ClusterParams {
    loop {
        let mut p = ClusterParams::random(4, half_width, rng);
        let det_at = |p: &mut ClusterParams, t: f64| {
            p.set_pair(1, 2, t).expect("valid pair");
            p.transfer_matrix().determinant()
        };
        let (dm, d0, dp) = (det_at(&mut p, -1.0), det_at(&mut p, 0.0), det_at(&mut p, 1.0));
        let (a, b, c) = (0.5 * (dp + dm) - d0, 0.5 * (dp - dm), d0);
        let disc = b * b - 4.0 * a * c;
        if a == 0.0 || disc < 0.0 {
            continue;
        }
        let r = disc.sqrt();
        let mut roots = [(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)];
        roots.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        let Some(&t0) = roots.iter().find(|t| t.abs() > 1e-3 && t.abs() <= half_width.max(1.0)) else {
            continue;
        };
        let mut t = t0;
        for _ in 0..3 {
            let d = det_at(&mut p, t);
            let slope = 2.0 * a * t + b;
            if slope == 0.0 {
                break;
            }
            t -= d / slope;
        }
        det_at(&mut p, t);
        if p.mu_pair().values().all(|&v| v != 0.0) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::expm;
    use crate::rng::seeded;

    fn oracle_phi(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        (DMatrix::identity(n, n) - expm(&(-m)).unwrap()) * m.clone().try_inverse().unwrap()
    }

    fn two_block(m12: f64, m1: f64, m2: f64) -> ClusterParams {
        let mut p = ClusterParams::new(2);
        p.set_pair(1, 2, m12).unwrap();
        p.set_single(1, m1).unwrap();
        p.set_single(2, m2).unwrap();
        p
    }

    #[test]
    fn phi_of_zero_is_identity() {
        let z = TransferMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(phi_of_m(&z), DMatrix::identity(3, 3));
    }

    #[test]
    fn transfer_matrix_validation() {
        assert!(TransferMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0])).is_err());
        assert!(TransferMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).is_err());
        let mut rng = seeded(2);
        let t = TransferMatrix::from_params(&ClusterParams::random(5, 0.5, &mut rng));
        assert_eq!(t.n(), 5);
        assert!(TransferMatrix::new(t.matrix().clone()).is_ok());
    }

    #[test]
    fn phi_two_blocks() {
        let m = 0.7;
        let mm = DMatrix::from_row_slice(2, 2, &[0.0, m, m, 0.0]);
        let phi = phi_of_matrix(&mm);
        let e = expm(&(-&mm)).unwrap();
        let expected_e = DMatrix::from_row_slice(2, 2, &[m.cosh(), -m.sinh(), -m.sinh(), m.cosh()]);
        assert!((e - &expected_e).norm() < 1e-15);
        let inv = &mm / (m * m);
        let via_inverse = (DMatrix::identity(2, 2) - &expected_e) * inv;
        assert!((phi - via_inverse).norm() < 1e-15);
    }

    #[test]
    fn phi_matches_inverse_form_on_large_norms() {
        let mut rng = seeded(4);
        for scale in [0.5, 3.0, 10.0] {
            let p = ClusterParams::random(5, scale, &mut rng);
            let m = p.transfer_matrix();
            let phi = phi_of_matrix(&m);
            let o = oracle_phi(&m);
            assert!((&phi - &o).norm() < 1e-12 * o.norm().max(1.0), "scale {scale}");
        }
    }

    #[test]
    fn n2_plan_matches_formulas() {
        let (m12, m1, m2) = (0.1, 0.2, 0.3);
        let p = two_block(m12, m1, m2);
        let beta = (m12.sinh() * m1 - (m12.cosh() - 1.0) * m2) / m12;
        let gamma = (m12.sinh() * m2 - (m12.cosh() - 1.0) * m1) / m12;
        for plan in [n2_closed_form(&p).unwrap(), decompose(&p).unwrap(), star_decompose(&p).unwrap()] {
            assert_eq!(plan.factors[0], Factor { gen: Generator::A(1, 2), angle: m12 });
            assert!((plan.b_angle(1) - beta).abs() < 1e-15);
            assert!((plan.b_angle(2) - gamma).abs() < 1e-15);
        }
        let abg = reparametrize(&p).alpha_beta_gamma.unwrap();
        assert_eq!(abg.0, m12);
    }

    #[test]
    fn commuting_case_passes_mu_through() {
        let mut p = ClusterParams::new(3);
        p.set_single(1, 0.1).unwrap();
        p.set_single(3, -0.4).unwrap();
        let plan = decompose(&p).unwrap();
        assert_eq!(plan.a_count(), 0);
        assert_eq!(plan.b_angles(3), vec![0.1, 0.0, -0.4]);
        let mut q = p.clone();
        q.set_pair(1, 2, 0.3).unwrap();
        let plan = n2_closed_form(&q).unwrap();
        assert_eq!(plan.b_angle(3), -0.4);
        q.set_pair(2, 3, 0.1).unwrap();
        assert!(n2_closed_form(&q).is_err());
    }

    #[test]
    fn json_layout() {
        let plan = n2_closed_form(&two_block(0.2, 0.5, 0.0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(v["provenance"], "n2_closed_form");
        assert_eq!(v["factors"][0]["gen"], "A");
        assert_eq!(v["factors"][0]["angle"], 0.2);
        assert_eq!(v["factors"][2]["k"], 2);
        let compact = serde_json::to_string(&plan.factors[0]).unwrap();
        assert_eq!(compact, r#"{"gen":"A","i":1,"j":2,"angle":0.20000000000000001}"#);
        let text = serde_json::to_string(&plan).unwrap();
        assert!(text.starts_with(r#"{"provenance":"n2_closed_form","factors":[{"gen":"A""#));
    }

    #[test]
    fn jacobian_tends_to_identity() {
        let mut rng = seeded(8);
        let p = ClusterParams::random(3, 1.0, &mut rng).scaled(1e-4);
        let r = reparam_jacobian(&p, 1e-6).unwrap();
        let id = DMatrix::identity(6, 6);
        assert!((&r.matrix - id).norm() < 1e-3);
        assert!(!r.ill_conditioned);
        let q = two_block(0.2, 0.3, -0.1);
        assert!(reparam_jacobian(&q, 1e-6).unwrap().matrix.determinant().abs() > 1e-3);
        assert!(reparam_jacobian(&q, 0.0).is_err());
    }

    #[test]
    fn gamma_depends_linearly_on_mu() {
        let mut rng = seeded(10);
        let p = ClusterParams::random(4, 0.5, &mut rng);
        let phi = analytic_gamma_mu_jacobian(&p);
        let j = reparam_jacobian(&p, 1e-3).unwrap().matrix;
        for l in 0..4 {
            for k in 0..4 {
                // linear in mu, so central differences are exact up to rounding
                assert!((j[(6 + k, 6 + l)] - phi[(l, k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_witness_search() {
        let mut rng = seeded(99);
        let p = find_singular_witness(&mut rng, 0.5);
        let m = p.transfer_matrix();
        assert!(p.mu_pair().values().all(|&v| v != 0.0));
        assert!(m.determinant().abs() < 1e-14, "{}", m.determinant());
        assert!(TransferMatrix::new(m).unwrap().condition_number() > 1e12);
    }

    #[test]
    fn prune_drops_zero_angles() {
        let plan = decompose(&two_block(0.0, 0.3, 0.0)).unwrap();
        assert_eq!(plan.factors.len(), 2);
        assert_eq!(plan.pruned().factors.len(), 1);
    }
}
