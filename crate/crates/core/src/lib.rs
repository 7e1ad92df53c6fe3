//! Zassenhaus-based factorization of broken-pair cluster unitaries.
//!
//! The crate is organized bottom-up:
//!
//! * [`fock`]: sparse fermionic operators and the block generators `A_ij`, `B_k`.
//! * [`algebra`]: symbolic brackets over the generator span and the no-mixed-adjoint test.
//! * [`zassenhaus`]: Zassenhaus exponents via the Casas recursion or closed form.
//! * [`decomposition`]: products `prod exp(A) * prod exp(B)` with reparametrized angles.
//! * [`oracle`]: dense/sector matrix exponentials and independent verification.
//! * [`circuit`]: Givens-rotation circuits and a bitstring simulator.

pub mod algebra;
pub mod circuit;
pub mod decomposition;
pub mod error;
pub mod fock;
pub mod numfmt;
pub mod oracle;
pub mod par;
pub mod params;
pub mod rng;
pub mod zassenhaus;

pub use error::{Error, Result};
