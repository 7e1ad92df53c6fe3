use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use zassucc::algebra::{check_nma, AlgebraElement, NmaReport};
use zassucc::circuit::{emit, export_text, simulate, BlockRegisterLayout};
use zassucc::decomposition::{decompose, decompose_with, Factor, PlanMethod, Provenance};
use zassucc::fock::{self, ModeIndexing};
use zassucc::numfmt::{fmt_g17, G17};
use zassucc::oracle::{
    expm, frobenius_distance, structure_constant_rows, trotter_compare, verify_plan, RestrictedRep, VerificationSpace,
    MAX_DENSE_BLOCKS, MAX_FOCK_BLOCKS,
};
use zassucc::par::Execution;
use zassucc::params::{t1_from_json, t2_from_json, ClusterParams};
use zassucc::rng::seeded;
use zassucc::zassenhaus::{
    casas_recursion, closed_form, closed_form_sum, compare_series, duhamel_check, duhamel_integral_dense,
    ZassenhausSeries,
};

use crate::{Command, MethodArg, ParamSource, Space};

pub enum Outcome {
    Verified,
    Failed(String),
}

pub fn run(cmd: Command) -> Result<Outcome> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::AlgebraCheck { blocks, restricted, tol } => algebra_check(&mut out, blocks, restricted, tol),
        Command::NmaCheck { source, t1_file, t2_file, n_orb, n_occ, depth, space, tol } => {
            let general = match (t1_file, t2_file) {
                (Some(t1), Some(t2)) => Some((t1, t2, n_orb.unwrap_or(0), n_occ.unwrap_or(0))),
                _ => None,
            };
            nma_check(&mut out, &source, general, depth as usize, space, tol)
        }
        Command::Decompose { params, method, emit_circuit, circuit_json, frozen, prune, sign_flip, space, tol } => {
            let opts = CircuitOpts { text: emit_circuit, json: circuit_json, frozen, prune, sign_flip };
            decompose_cmd(&mut out, &params, method, &opts, space, tol)
        }
        Command::TrotterBench { params, k, out: path, restricted } => {
            trotter_bench(&mut out, &params, &k, path.as_deref(), restricted)
        }
        Command::Zassenhaus { source, order, compare, space, quad_order, tol } => {
            zassenhaus_cmd(&mut out, &source, order as usize, compare, space, quad_order, tol)
        }
        Command::DuhamelCheck { source, quad_order, tol } => {
            let params = source.load()?;
            let r = duhamel_residual(&params, quad_order)?;
            writeln!(out, "quad_order={quad_order}")?;
            writeln!(out, "duhamel_residual={}", fmt_g17(r))?;
            Ok(check(r <= tol, || format!("Duhamel residual {} exceeds {}", fmt_g17(r), fmt_g17(tol))))
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Outcome::Verified
    } else {
        Outcome::Failed(msg())
    }
}

impl ParamSource {
    fn load(&self) -> Result<ClusterParams> {
        if let Some(path) = &self.params {
            let text = read(path)?;
            return ClusterParams::from_json(&text, None).with_context(|| format!("parsing {}", path.display()));
        }
        let Some(n) = self.blocks else {
            bail!("pass --params <file> or --blocks <N> with a seed");
        };
        if n == 0 {
            bail!("--blocks must be at least 1");
        }
        let Some(seed) = self.seed else {
            bail!("random amplitudes need a seed: pass --seed or set ZASSUCC_SEED");
        };
        if !(self.half_width.is_finite() && self.half_width >= 0.0) {
            bail!("--half-width must be a nonnegative number");
        }
        Ok(ClusterParams::random(n, self.half_width, &mut seeded(seed)))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        bail!("--tol must be a positive number");
    }
    Ok(())
}

fn resolve(space: Space, n: usize) -> Result<VerificationSpace> {
    match space {
        Space::Auto => Ok(VerificationSpace::auto(n)),
        Space::Fock if n > MAX_FOCK_BLOCKS => {
            bail!("{n} blocks exceed the full-Fock ceiling of {MAX_FOCK_BLOCKS}; use the restricted representation")
        }
        Space::Fock => Ok(VerificationSpace::Fock),
        Space::Restricted => Ok(VerificationSpace::Restricted),
        Space::Algebra => bail!("this check needs matrices; choose fock, restricted or auto"),
    }
}

fn space_name(space: VerificationSpace) -> &'static str {
    match space {
        VerificationSpace::Fock => "fock",
        VerificationSpace::Restricted => "restricted",
    }
}

fn algebra_check(out: &mut impl Write, blocks: usize, restricted: bool, tol: f64) -> Result<Outcome> {
    check_tol(tol)?;
    if blocks == 0 {
        bail!("--blocks must be at least 1");
    }
    if !restricted && blocks > MAX_FOCK_BLOCKS {
        bail!("{blocks} blocks exceed the full-Fock ceiling of {MAX_FOCK_BLOCKS}; rerun with --restricted");
    }
    let space = if restricted { VerificationSpace::Restricted } else { VerificationSpace::Fock };
    let rows = structure_constant_rows(blocks, space)?;
    writeln!(out, "# space={}", space_name(space))?;
    let mut bad = Vec::new();
    for r in &rows {
        let expected = if r.expected.is_empty() {
            "0".to_string()
        } else {
            r.expected
                .iter()
                .map(|&(g, c)| match c {
                    1.0 => g.to_string(),
                    -1.0 => format!("-{g}"),
                    c => format!("{}*{g}", fmt_g17(c)),
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let line = format!("[{},{}] = {expected}", r.left, r.right);
        writeln!(out, "{line:<28} residual={}", fmt_g17(r.residual))?;
        if r.residual > tol {
            bad.push(format!("{line} (residual {})", fmt_g17(r.residual)));
        }
    }
    Ok(check(bad.is_empty(), || bad.join("; ")))
}

#[derive(Serialize)]
struct NmaOutput<'a> {
    space: &'a str,
    #[serde(flatten)]
    report: &'a NmaReport,
}

fn nma_check(
    out: &mut impl Write,
    source: &ParamSource,
    general: Option<(std::path::PathBuf, std::path::PathBuf, usize, usize)>,
    depth: usize,
    space: Space,
    tol: f64,
) -> Result<Outcome> {
    check_tol(tol)?;
    let (name, report) = if let Some((t1, t2, n_orb, n_occ)) = general {
        if !matches!(space, Space::Auto | Space::Fock) {
            bail!("general T1/T2 amplitudes are only checked on the full Fock space");
        }
        let modes = ModeIndexing::new(n_orb, n_occ, Vec::new())?;
        let t1 = t1_from_json(&read(&t1)?)?;
        let t2 = t2_from_json(&read(&t2)?)?;
        let x = fock::build_t2prime_general(&t2, &modes)?;
        let y = fock::build_t1_general(&t1, &modes)?;
        ("fock", check_nma(&x, &y, depth, tol)?)
    } else {
        let params = source.load()?;
        if space == Space::Algebra {
            let (x, y) = (AlgebraElement::x_of(&params), AlgebraElement::y_of(&params));
            ("algebra", check_nma(&x, &y, depth, tol)?)
        } else {
            let vs = resolve(space, params.n_blocks())?;
            let report = match vs {
                VerificationSpace::Fock => {
                    let modes = ModeIndexing::two_d_blocks(params.n_blocks())?;
                    check_nma(&fock::build_x(&params, &modes)?, &fock::build_y(&params, &modes)?, depth, tol)?
                }
                VerificationSpace::Restricted => {
                    let rep = RestrictedRep::new(params)?;
                    check_nma(&rep.x_r()?, &rep.y_r()?, depth, tol)?
                }
            };
            (space_name(vs), report)
        }
    };
    let json = serde_json::to_string_pretty(&NmaOutput { space: name, report: &report })?;
    writeln!(out, "{json}")?;
    Ok(check(report.holds, || match &report.witness {
        Some(w) => {
            format!("no-mixed-adjoint property violated at depth {} (residual {})", w.depth, fmt_g17(w.residual.0))
        }
        None => "no-mixed-adjoint property violated".into(),
    }))
}

struct CircuitOpts {
    text: Option<std::path::PathBuf>,
    json: Option<std::path::PathBuf>,
    frozen: usize,
    prune: bool,
    sign_flip: bool,
}

#[derive(Serialize)]
struct DecomposeOutput<'a> {
    provenance: Provenance,
    factors: &'a [Factor],
    verification_space: &'a str,
    residual: G17,
    #[serde(skip_serializing_if = "Option::is_none")]
    circuit_residual: Option<G17>,
}

fn decompose_cmd(
    out: &mut impl Write,
    params_path: &Path,
    method: MethodArg,
    opts: &CircuitOpts,
    space: Space,
    tol: f64,
) -> Result<Outcome> {
    check_tol(tol)?;
    let params = ClusterParams::from_json(&read(params_path)?, None)
        .with_context(|| format!("parsing {}", params_path.display()))?;
    let method = match method {
        MethodArg::Closed => PlanMethod::Closed,
        MethodArg::Phi => PlanMethod::Phi,
        MethodArg::Star => PlanMethod::Star,
    };
    let plan = decompose_with(&params, method)?;
    let vs = resolve(space, params.n_blocks())?;
    let residual = verify_plan(&plan, &params, vs, Execution::default())?;

    let mut circuit_residual = None;
    if opts.text.is_some() || opts.json.is_some() {
        let n = params.n_blocks();
        let layout = BlockRegisterLayout::with_frozen(n, opts.frozen);
        let circuit = emit(&plan, &layout, opts.prune)?;
        if let Some(path) = &opts.text {
            write_file(path, &export_text(&circuit, opts.sign_flip))?;
        }
        if let Some(path) = &opts.json {
            write_file(path, &(circuit.to_json() + "\n"))?;
        }
        if n <= MAX_DENSE_BLOCKS {
            let rep = RestrictedRep::new(params.clone())?;
            let exact = expm(&(rep.x_r()? + rep.y_r()?))?;
            circuit_residual = Some(frobenius_distance(&simulate(&circuit, &layout)?, &exact));
        }
    }

    let doc = DecomposeOutput {
        provenance: plan.provenance,
        factors: &plan.factors,
        verification_space: space_name(vs),
        residual: G17(residual),
        circuit_residual: circuit_residual.map(G17),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    let worst = residual.max(circuit_residual.unwrap_or(0.0));
    Ok(check(worst <= tol, || format!("plan residual {} exceeds tolerance {}", fmt_g17(worst), fmt_g17(tol))))
}

fn trotter_bench(
    out: &mut impl Write,
    params_path: &Path,
    k: &[usize],
    path: Option<&Path>,
    restricted: bool,
) -> Result<Outcome> {
    let params = ClusterParams::from_json(&read(params_path)?, None)
        .with_context(|| format!("parsing {}", params_path.display()))?;
    let space = if restricted { VerificationSpace::Restricted } else { VerificationSpace::auto(params.n_blocks()) };
    let plan = decompose(&params)?;
    let report = trotter_compare(&params, &plan, k, space, Execution::default())?;
    let csv = report.to_csv();
    match path {
        Some(p) => write_file(p, &csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(Outcome::Verified)
}

fn recursion_and_closed<L: zassucc::algebra::LieElement>(
    x: &L,
    y: &L,
    order: usize,
) -> Result<(ZassenhausSeries<L>, ZassenhausSeries<L>)> {
    let mut rec = casas_recursion(x, y, order.max(2))?;
    rec.terms.truncate(order);
    Ok((rec, closed_form(x, y, order)?))
}

fn zassenhaus_cmd(
    out: &mut impl Write,
    source: &ParamSource,
    order: usize,
    compare: bool,
    space: Space,
    quad_order: usize,
    tol: f64,
) -> Result<Outcome> {
    check_tol(tol)?;
    let params = source.load()?;
    let (name, diffs, norms) = match space {
        Space::Algebra => {
            let (x, y) = (AlgebraElement::x_of(&params), AlgebraElement::y_of(&params));
            let (rec, closed) = recursion_and_closed(&x, &y, order)?;
            ("algebra", compare_series(&rec, &closed), norms_of(&closed))
        }
        other => match resolve(other, params.n_blocks())? {
            VerificationSpace::Fock => {
                let modes = ModeIndexing::two_d_blocks(params.n_blocks())?;
                let (x, y) = (fock::build_x(&params, &modes)?, fock::build_y(&params, &modes)?);
                let (rec, closed) = recursion_and_closed(&x, &y, order)?;
                ("fock", compare_series(&rec, &closed), norms_of(&closed))
            }
            VerificationSpace::Restricted => {
                let rep = RestrictedRep::new(params.clone())?;
                let (rec, closed) = recursion_and_closed(&rep.x_r()?, &rep.y_r()?, order)?;
                ("restricted", compare_series(&rec, &closed), norms_of(&closed))
            }
        },
    };
    writeln!(out, "# space={name}")?;
    if compare {
        writeln!(out, "n,recursion_minus_closed")?;
        for (n, d) in diffs.iter().enumerate() {
            writeln!(out, "{},{}", n + 1, fmt_g17(*d))?;
        }
    } else {
        writeln!(out, "n,closed_form_norm")?;
        for (n, v) in norms.iter().enumerate() {
            writeln!(out, "{},{}", n + 1, fmt_g17(*v))?;
        }
    }
    let duhamel = duhamel_residual(&params, quad_order)?;
    writeln!(out, "duhamel_residual={}", fmt_g17(duhamel))?;
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    if compare && worst > tol {
        let n = diffs.iter().position(|&d| d == worst).unwrap_or(0) + 1;
        return Ok(Outcome::Failed(format!("recursion and closed form differ by {} at order {n}", fmt_g17(worst))));
    }
    Ok(check(duhamel <= tol, || format!("Duhamel residual {} exceeds {}", fmt_g17(duhamel), fmt_g17(tol))))
}

fn norms_of<L: zassucc::algebra::LieElement>(s: &ZassenhausSeries<L>) -> Vec<f64> {
    s.terms.iter().map(|t| t.norm()).collect()
}

/// Full Fock space up to the ceiling, pair-state representation beyond.
fn duhamel_residual(params: &ClusterParams, quad_order: usize) -> Result<f64> {
    let exec = Execution::default();
    match VerificationSpace::auto(params.n_blocks()) {
        VerificationSpace::Fock => {
            let modes = ModeIndexing::two_d_blocks(params.n_blocks())?;
            let (x, y) = (fock::build_x(params, &modes)?, fock::build_y(params, &modes)?);
            Ok(duhamel_check(&x, &y, quad_order, exec)?.residual)
        }
        VerificationSpace::Restricted => {
            let rep = RestrictedRep::new(params.clone())?;
            let (x, y) = (rep.x_r()?, rep.y_r()?);
            let integral = duhamel_integral_dense(&x, &y, quad_order, exec)?;
            Ok(frobenius_distance(&integral, &closed_form_sum(&x, &y)?))
        }
    }
}
