//! Corner-space simulation of open quantum systems.
//!
//! The density matrix is carried as a low-rank factor `ρ = C C†` whose columns
//! are the leading eigenvectors weighted by `√p_k`. Each time step propagates
//! the factor coherently under the non-Hermitian effective Hamiltonian, appends
//! quantum-jump columns, and re-diagonalizes the small Gram matrix `T†T` to
//! truncate back to the leading eigenpairs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod corner;
pub mod dense;
pub mod error;
pub mod experiments;
pub mod kerr;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod ode;
pub mod ops;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
