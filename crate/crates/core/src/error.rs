use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode index {mode} out of range for {n_modes} spin-orbitals")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("orbital index {orbital} out of range 1..={n_orb}")]
    OrbitalOutOfRange { orbital: usize, n_orb: usize },
    #[error("block index {block} out of range 1..={n_blocks}")]
    BlockOutOfRange { block: usize, n_blocks: usize },
    #[error("invalid block pair ({i},{j}): expected 1 <= i < j <= {n_blocks}")]
    InvalidBlockPair { i: usize, j: usize, n_blocks: usize },
    #[error("invalid mode layout: {0}")]
    InvalidLayout(String),
    #[error("full Fock space with {n_modes} spin-orbitals exceeds the ceiling of {max_modes}; use the restricted representation")]
    DimensionTooLarge { n_modes: usize, max_modes: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("malformed parameters: {0}")]
    MalformedParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series did not converge: term norms grew for {consecutive} consecutive orders (last order {order})")]
    NonConvergent { order: usize, consecutive: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("generator index outside the register layout: {0}")]
    OutsideLayout(String),
    #[error("circuit leaked out of the one-hot subspace at basis state {0:#b}")]
    Leakage(u64),
    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
