use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "zassucc", version, about = "Zassenhaus decompositions of 2D-block pair cluster operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where cluster amplitudes come from: a file, or uniform random draws.
#[derive(Args, Debug, Clone)]
struct ParamSource {
    /// Amplitude file `{"mu_pair": {"1,2": 0.2}, "mu_single": {"1": 0.1}}`
    #[arg(long, conflicts_with = "blocks")]
    params: Option<PathBuf>,
    /// Draw random amplitudes over this many blocks (needs a seed)
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, env = "ZASSUCC_SEED")]
    seed: Option<u64>,
    /// Random amplitudes are uniform on [-w, w]
    #[arg(long, default_value_t = 0.5)]
    half_width: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Space {
    /// Full Fock space up to 3 blocks, restricted representation beyond
    Auto,
    Fock,
    Restricted,
    /// Structure-constant algebra (no matrices)
    Algebra,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Closed,
    Phi,
    Star,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the A/B commutation relations against operator commutators
    AlgebraCheck {
        #[arg(long)]
        blocks: usize,
        /// Use the 2^N-dimensional pair-state representation
        #[arg(long)]
        restricted: bool,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Check ad_Y ad_X^i Y = 0 up to a finite depth
    NmaCheck {
        #[command(flatten)]
        source: ParamSource,
        /// General single excitations `{"p,q": mu}`
        #[arg(long, requires_all = ["t2_file", "n_orb", "n_occ"], conflicts_with_all = ["params", "blocks"])]
        t1_file: Option<PathBuf>,
        /// General double excitations `{"p1,p2,q1,q2": mu}`
        #[arg(long, requires = "t1_file")]
        t2_file: Option<PathBuf>,
        #[arg(long)]
        n_orb: Option<usize>,
        #[arg(long)]
        n_occ: Option<usize>,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
        depth: u64,
        #[arg(long, value_enum, default_value_t = Space::Auto)]
        space: Space,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Disentangled plan exp(X+Y) = prod exp(mu_ij A_ij) prod exp(gamma_k B_k)
    Decompose {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Phi)]
        method: MethodArg,
        /// Write the Givens circuit as text
        #[arg(long)]
        emit_circuit: Option<PathBuf>,
        /// Write the Givens circuit as JSON
        #[arg(long)]
        circuit_json: Option<PathBuf>,
        /// Frozen qubits appended to the register
        #[arg(long, default_value_t = 0)]
        frozen: usize,
        /// Drop zero-angle factors
        #[arg(long)]
        prune: bool,
        /// Negate every angle in the circuit text
        #[arg(long)]
        sign_flip: bool,
        #[arg(long, value_enum, default_value_t = Space::Auto)]
        space: Space,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Trotter errors against the exact plan, as CSV
    TrotterBench {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256")]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        restricted: bool,
    },
    /// Zassenhaus terms from the general recursion and the closed form
    Zassenhaus {
        #[command(flatten)]
        source: ParamSource,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        order: u64,
        /// Print |C_n(recursion) - C_n(closed)| per order
        #[arg(long)]
        compare: bool,
        #[arg(long, value_enum, default_value_t = Space::Algebra)]
        space: Space,
        #[arg(long, default_value_t = 32)]
        quad_order: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Quadrature of int_0^1 e^{-sX} Y e^{sX} ds against the closed-form series
    DuhamelCheck {
        #[command(flatten)]
        source: ParamSource,
        #[arg(long, default_value_t = 32)]
        quad_order: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(commands::Outcome::Verified) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Failed(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
