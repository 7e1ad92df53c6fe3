//! Acceptance run: one PASS/FAIL line per criterion with the measured values.
//!
//! Runs without the libtest harness so every line is printed; the process
//! exits nonzero when any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use num::BigRational;
use zassucc::algebra::{adjoint_chain, bracket, check_nma, AlgebraElement, Generator};
use zassucc::circuit::{emit, simulate, BlockRegisterLayout};
use zassucc::decomposition::{
    analytic_gamma_mu_jacobian, decompose, decompose_with, find_singular_witness, phi_gammas, phi_of_matrix,
    reparam_jacobian, star_decompose, PlanMethod,
};
use zassucc::fock::{build_x, build_y, ModeIndexing};
use zassucc::numfmt::fmt_g17;
use zassucc::oracle::{
    disentangled_error, expm, frobenius_distance, structure_constant_rows, trotter_compare, verify_batch, verify_plan,
    RestrictedRep, VerificationSpace,
};
use zassucc::par::Execution;
use zassucc::params::ClusterParams;
use zassucc::rng::stream;
use zassucc::zassenhaus::{casas_recursion, closed_form, compare_series, duhamel_check};
use zassucc::Result;

const SEED: u64 = 20_240_917;

fn random(n: usize, half_width: f64, id: u64) -> ClusterParams {
    ClusterParams::random(n, half_width, &mut stream(SEED, id))
}

fn g(x: f64) -> String {
    fmt_g17(x)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn run(id: usize, name: &str, limit_s: f64, f: impl FnOnce() -> Result<Verdict>) -> bool {
    let t = Instant::now();
    let out = f();
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) = match out {
        Ok(v) => (v.pass && secs < limit_s, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {id:>2} ({name}): {detail}; runtime {secs:.2} s (limit {limit_s} s)");
    pass
}

fn c1() -> Result<Verdict> {
    let mut worst = (0.0, String::new());
    for n in [2, 3] {
        for r in structure_constant_rows(n, VerificationSpace::Fock)? {
            if r.residual > worst.0 {
                worst = (r.residual, format!("N={n} [{},{}]", r.left, r.right));
            }
        }
    }
    verdict(worst.0 < 1e-13, format!("max residual {} at {} (tol 1e-13)", g(worst.0), worst.1))
}

/// `[A_ij, B_k]` b-only and `[B_k, B_m] = 0` for every generator pair, with `Y` b-only:
/// then every `ad_X^i Y` is b-only and commutes with `Y`.
fn symbolic_nma_proof(n: usize) -> Result<bool> {
    let gens: Vec<Generator> =
        (1..=n).flat_map(|i| (i + 1..=n).map(move |j| Generator::A(i, j))).chain((1..=n).map(Generator::B)).collect();
    for &a in &gens {
        for &b in &gens {
            let br = bracket(&AlgebraElement::<f64>::generator(a, n)?, &AlgebraElement::generator(b, n)?)?;
            match (a, b) {
                (Generator::A(..), Generator::B(_)) if !br.is_b_only() => return Ok(false),
                (Generator::B(_), Generator::B(_)) if !br.is_zero() => return Ok(false),
                _ => {}
            }
        }
    }
    Ok(true)
}

fn c2() -> Result<Verdict> {
    let mut worst = 0.0f64;
    let mut witness = None;
    for n in [2, 3] {
        let modes = ModeIndexing::two_d_blocks(n)?;
        for s in 0..3 {
            let p = random(n, 0.5, 200 + 10 * n as u64 + s);
            let report = check_nma(&build_x(&p, &modes)?, &build_y(&p, &modes)?, 6, 1e-12)?;
            worst = report.residuals.iter().fold(worst, |m, r| m.max(r.0));
            if let (None, Some(w)) = (&witness, report.witness) {
                witness = Some(format!("N={n} depth {}", w.depth));
            }
        }
    }
    let mut symbolic = true;
    for n in 2..=8 {
        symbolic &= symbolic_nma_proof(n)?;
        let p = random(n, 0.5, 300 + n as u64);
        let chain = adjoint_chain(&AlgebraElement::x_of(&p), &AlgebraElement::y_of(&p), 8)?;
        symbolic &= chain.iter().all(|c| c.is_b_only());
    }
    verdict(
        witness.is_none() && symbolic,
        format!(
            "Fock depth-6 max residual {} (tol 1e-12), first witness {}; symbolic proof {}",
            g(worst),
            witness.unwrap_or_else(|| "none".into()),
            if symbolic { "holds" } else { "fails" }
        ),
    )
}

fn c3() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for n in [2, 3, 4] {
        for s in 0..5 {
            let p = random(n, 0.5, 400 + 10 * n as u64 + s);
            let (x, y) = (AlgebraElement::x_of(&p), AlgebraElement::y_of(&p));
            let diffs = compare_series(&casas_recursion(&x, &y, 8)?, &closed_form(&x, &y, 8)?);
            worst = diffs.into_iter().fold(worst, f64::max);
        }
    }
    let mut exact = true;
    for n in [2, 3, 4] {
        let pairs: Vec<_> = (1..=n)
            .flat_map(|i| (i + 1..=n).map(move |j| ((i, j), ((i * 7 + j) as i64 % 5 - 2, 3 + i as i64))))
            .collect();
        let singles: Vec<_> = (1..=n).map(|k| (k, (k as i64 * 3 % 7 - 3, 2 + k as i64))).collect();
        let x = AlgebraElement::<BigRational>::from_ratios(n, &pairs, &[])?;
        let y = AlgebraElement::<BigRational>::from_ratios(n, &[], &singles)?;
        let (rec, closed) = (casas_recursion(&x, &y, 8)?, closed_form(&x, &y, 8)?);
        exact &= rec.terms == closed.terms;
    }
    verdict(
        worst < 1e-12 && exact,
        format!("max float residual {} (tol 1e-12); rational terms identical: {exact}", g(worst)),
    )
}

fn c4() -> Result<Verdict> {
    let mut worst = (0.0f64, 0);
    for n in 2..=8 {
        let instances: Vec<_> = (0..20)
            .map(|s| {
                let p = random(n, 0.5, 500 + 100 * n as u64 + s);
                Ok((decompose(&p)?, p))
            })
            .collect::<Result<_>>()?;
        for r in verify_batch(&instances, VerificationSpace::auto(n), Execution::default()) {
            let r = r?;
            if r > worst.0 {
                worst = (r, n);
            }
        }
    }
    verdict(worst.0 < 1e-10, format!("max residual {} at N={} over 140 instances (tol 1e-10)", g(worst.0), worst.1))
}

/// `sum_k (-1)^k/(k+1)! sum over index chains j0 -> ... -> i_{k+1}` by walking the chains.
fn chain_sum(p: &ClusterParams, order: usize) -> Vec<f64> {
    let n = p.n_blocks();
    let mut gamma = vec![0.0; n];
    // weight of chains of length k ending at each vertex, started from mu
    let mut w: Vec<f64> = (1..=n).map(|k| p.single(k)).collect();
    let mut fact = 1.0;
    for k in 0..=order {
        fact *= (k + 1) as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for (gk, wk) in gamma.iter_mut().zip(&w) {
            *gk += sign * wk / fact;
        }
        let mut next = vec![0.0; n];
        for (i, wi) in w.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                if i != j {
                    *nj += wi * p.nu(i + 1, j + 1);
                }
            }
        }
        w = next;
    }
    gamma
}

fn c5() -> Result<Verdict> {
    let mut closed = 0.0f64;
    let mut series = 0.0f64;
    let mut cases = vec![ClusterParams::from_maps(2, [((1, 2), 0.1)], [(1, 0.2), (2, 0.3)])?];
    cases.extend((0..20).map(|s| random(2, 0.5, 600 + s)));
    for p in &cases {
        let plan = decompose_with(p, PlanMethod::Closed)?;
        let got = plan.b_angles(2);
        let (m, m1, m2) = (p.pair(1, 2), p.single(1), p.single(2));
        let formula = [(m.sinh() * m1 - (m.cosh() - 1.0) * m2) / m, (m.sinh() * m2 - (m.cosh() - 1.0) * m1) / m];
        let walk = chain_sum(p, 40);
        for k in 0..2 {
            closed = closed.max((got[k] - formula[k]).abs());
            series = series.max((got[k] - walk[k]).abs());
        }
    }
    verdict(
        closed < 1e-14 && series < 1e-12,
        format!("vs sinh/cosh {} (tol 1e-14), vs chain sum to order 40 {} (tol 1e-12)", g(closed), g(series)),
    )
}

fn c6() -> Result<Verdict> {
    let mut phi_res = 0.0f64;
    let mut star_res = 0.0f64;
    for n in 3..=6 {
        for s in 0..5 {
            let p = random(n, 0.5, 700 + 10 * n as u64 + s);
            let m = p.transfer_matrix();
            let inv = m.clone().try_inverse().expect("random transfer matrix is invertible");
            let oracle = (DMatrix::identity(n, n) - expm(&(-&m))?) * inv;
            phi_res = phi_res.max((phi_of_matrix(&m) - oracle).norm());
            let (a, b) = (star_decompose(&p)?, decompose(&p)?);
            for (fa, fb) in a.factors.iter().zip(&b.factors) {
                assert_eq!(fa.gen, fb.gen);
                star_res = star_res.max((fa.angle - fb.angle).abs());
            }
        }
    }
    let w = find_singular_witness(&mut stream(SEED, 799), 0.8);
    let det = w.transfer_matrix().determinant();
    let plan = star_decompose(&w)?;
    let finite = plan.factors.iter().all(|f| f.angle.is_finite());
    let witness_res = verify_plan(&plan, &w, VerificationSpace::Restricted, Execution::default())?;
    verdict(
        phi_res < 1e-12 && star_res < 1e-12 && finite && witness_res < 1e-10,
        format!(
            "phi vs oracle {} (tol 1e-12); star vs phi {} (tol 1e-12); singular witness det {} angles finite {finite}, residual {} (tol 1e-10)",
            g(phi_res),
            g(star_res),
            g(det),
            g(witness_res)
        ),
    )
}

fn c7() -> Result<Verdict> {
    let ks: Vec<usize> = (0..=8).map(|e| 1 << e).collect();
    let (mut baseline, mut k1_min, mut reopt) = (0.0f64, f64::INFINITY, 0.0f64);
    let (mut ratio_lo, mut ratio_hi) = (f64::INFINITY, 0.0f64);
    for (n, s) in [(2, 0), (2, 1), (3, 0), (3, 1)] {
        let p = random(n, 0.5, 800 + 10 * n as u64 + s);
        let space = VerificationSpace::auto(n);
        let report = trotter_compare(&p, &decompose(&p)?, &ks, space, Execution::default())?;
        baseline = baseline.max(report.baseline().expect("baseline row").error);
        k1_min = k1_min.min(report.row(1).expect("k=1 row").error);
        for w in ks.windows(2) {
            let ratio = report.row(w[0]).unwrap().error / report.row(w[1]).unwrap().error;
            ratio_lo = ratio_lo.min(ratio);
            ratio_hi = ratio_hi.max(ratio);
        }
        reopt = reopt.max(disentangled_error(&p, &phi_gammas(&p), space)?);
    }
    let pass = baseline < 1e-10 && k1_min > 1e-4 && ratio_lo >= 1.7 && ratio_hi <= 2.3 && reopt < 1e-10;
    verdict(
        pass,
        format!(
            "exact-plan baseline {} (tol 1e-10); k=1 Trotter min {} (needs > 1e-4); doubling ratios [{}, {}] (needs [1.7, 2.3]); k=1 re-optimized {} (tol 1e-10)",
            g(baseline),
            g(k1_min),
            g(ratio_lo),
            g(ratio_hi),
            g(reopt)
        ),
    )
}

fn c8() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for n in [2, 3] {
        let modes = ModeIndexing::two_d_blocks(n)?;
        for s in 0..3 {
            let p = random(n, 0.5, 900 + 10 * n as u64 + s);
            let r = duhamel_check(&build_x(&p, &modes)?, &build_y(&p, &modes)?, 32, Execution::default())?;
            worst = worst.max(r.residual);
        }
    }
    verdict(worst < 1e-12, format!("max residual {} at Gauss-Legendre order 32 (tol 1e-12)", g(worst)))
}

fn c9() -> Result<Verdict> {
    let mut worst = (0.0f64, 0);
    let mut counts_ok = true;
    for n in 1..=8 {
        for s in 0..3 {
            let mut p = random(n, 0.5, 1000 + 10 * n as u64 + s);
            if s == 2 && n >= 2 {
                // some couplings switched off
                p.set_pair(1, 2, 0.0)?;
            }
            let layout = BlockRegisterLayout::with_frozen(n, 2);
            let c = emit(&decompose(&p)?, &layout, true)?;
            let nonzero = p.active_pairs().count();
            let gammas_nonzero = phi_gammas(&p).iter().filter(|g| **g != 0.0).count();
            counts_ok &= c.len() == nonzero + gammas_nonzero && gammas_nonzero == n && c.len() <= n * (n + 1) / 2;
            let rep = RestrictedRep::new(p)?;
            let exact = expm(&(rep.x_r()? + rep.y_r()?))?;
            let r = frobenius_distance(&simulate(&c, &layout)?, &exact);
            if r > worst.0 {
                worst = (r, n);
            }
        }
    }
    verdict(
        worst.0 < 1e-10 && counts_ok,
        format!(
            "max residual {} at N={} (tol 1e-10); gate count = nonzero mu_ij + N <= N(N+1)/2: {counts_ok}",
            g(worst.0),
            worst.1
        ),
    )
}

fn c10() -> Result<Verdict> {
    let (mut fd, mut analytic_lin, mut analytic_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for n in 2..=6 {
        let small = random(n, 1e-4, 1100 + n as u64);
        let j = reparam_jacobian(&small, 1e-6)?;
        let dim = j.matrix.nrows();
        fd = fd.max((j.matrix - DMatrix::identity(dim, dim)).norm());

        let p = random(n, 0.5, 1200 + n as u64);
        let a = analytic_gamma_mu_jacobian(&p);
        let g0 = phi_gammas(&p);
        // gamma is linear in mu, so a unit difference quotient is exact up to rounding
        for l in 1..=n {
            let mut q = p.clone();
            q.set_single(l, p.single(l) + 1.0)?;
            let g1 = phi_gammas(&q);
            for k in 0..n {
                analytic_lin = analytic_lin.max((a[(l - 1, k)] - (g1[k] - g0[k])).abs());
            }
        }
        let m = p.transfer_matrix();
        let inv = m.clone().try_inverse().expect("invertible");
        let oracle = (DMatrix::identity(n, n) - expm(&(-&m))?) * inv;
        analytic_oracle = analytic_oracle.max((a - oracle).amax());
    }
    let worst = analytic_lin.max(analytic_oracle);
    verdict(
        fd < 1e-3 && worst < 1e-12,
        format!(
            "||J - I|| at scale 1e-4: {} (tol 1e-3); analytic d gamma/d mu vs difference quotient {} and vs (I - e^-M) M^-1 {} (tol 1e-12)",
            g(fd),
            g(analytic_lin),
            g(analytic_oracle)
        ),
    )
}

fn main() {
    let results = [
        run(1, "structure constants", 10.0, c1),
        run(2, "no-mixed-adjoint certificate", 30.0, c2),
        run(3, "recursion vs closed form", 60.0, c3),
        run(4, "plan exactness", 120.0, c4),
        run(5, "two-block closed form", 60.0, c5),
        run(6, "phi consistency", 60.0, c6),
        run(7, "Trotter contrast", 60.0, c7),
        run(8, "Duhamel identity", 60.0, c8),
        run(9, "circuit equivalence", 60.0, c9),
        run(10, "reparametrization", 60.0, c10),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
