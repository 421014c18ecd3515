//! Scale-by-scale quasi-local diagonalization of strongly disordered spin chains.
//!
//! The crate is organised bottom-up: [`pauli`] holds the exact operator
//! algebra, [`model`] the random Hamiltonians, [`diagrams`] the combinatorial
//! bookkeeping, [`flow`] the renormalization loop, [`liom`] the unitary and
//! its locality diagnostics and [`transport`] the bath-coupled current
//! harness. [`oracle`] provides dense reference kernels used to audit all of
//! them.

pub mod diagrams;
pub mod error;
pub mod flow;
pub mod liom;
pub mod model;
pub mod oracle;
pub mod pauli;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
