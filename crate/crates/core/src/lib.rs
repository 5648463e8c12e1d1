//! Ground states, weak-measurement trajectories, and criticality diagnostics
//! for an infinite frustrated spin-1/2 chain, built on uniform matrix product
//! states with a two-site unit cell.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense complex tensors plus the matrix-free iterative layer
//!   (Arnoldi, Lanczos, GMRES) everything else contracts through.
//! - [`model`]: couplings, Pauli constants, and the bond-dimension-6 matrix
//!   product operator for the chain Hamiltonian.
//! - [`umps`]: the mixed-canonical uniform MPS state, gauge fixing, bond
//!   growth, and the binary checkpoint format.
//! - [`vumps`]: the variational fixed-point ground-state solver.
//! - [`measure`]: ancilla-coupling Kraus families, trajectory application,
//!   and Born weights.
//! - [`obs`]: entanglement entropy, correlation length, order parameters,
//!   scaling fits, and the pseudo-critical locator.
//! - [`ed`]: exact diagonalization of small periodic rings, used as the
//!   brute-force cross-check for everything above.

pub mod ed;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod obs;
pub mod umps;
pub mod vumps;

pub use error::{Error, Result};

/// Complex double precision scalar used throughout.
pub type C64 = num_complex::Complex64;
