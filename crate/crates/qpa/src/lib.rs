//! Consistency of quantum probability assignments.
//!
//! A *quantum probability assignment* is a family of pairs (orthonormal basis,
//! probability vector) on an n-dimensional Hilbert space. It is *consistent*
//! when one density matrix ρ reproduces every probability through
//! `tr(ρ P) = p`. This crate decides consistency numerically, analyses the
//! rank structure of the underlying linear system, regenerates the classical
//! small-dimension constructions, and simulates finite-shot measurements,
//! linear-inversion tomography and a probabilistic secret-sharing scheme.
//!
//! ```
//! use qpa::{generators, solver};
//!
//! let family = generators::dim2_example();
//! let report = solver::check_consistency(&family, solver::DEFAULT_BUDGET).unwrap();
//! assert!(!report.verdict.is_consistent());
//! assert_eq!(solver::consistency_number(2).unwrap(), 4);
//! ```
//!
//! The guide in `book/` walks through each piece with runnable snippets.

pub mod error;
pub mod generators;
pub mod io;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Assignment, AssignmentSet, Basis, DensityMatrix, ProbabilityVector, Projector};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Numerical tolerances shared by every module.
pub mod tol {
    /// ‖M − M†‖_F for Hermiticity.
    pub const HERM: f64 = 1e-10;
    /// ‖P² − P‖_F for idempotence.
    pub const IDEM: f64 = 1e-10;
    /// ‖P_i P_j‖_F and ‖ΣP − I‖_F for bases.
    pub const ORTH: f64 = 1e-10;
    /// Probability entries and sums.
    pub const PROB: f64 = 1e-9;
    /// Admissible negative eigenvalue of a state.
    pub const PSD: f64 = 1e-9;
    /// Relative singular-value threshold for numerical rank.
    pub const RANK: f64 = 1e-9;
    /// Linear residual above which a system is declared infeasible.
    pub const RES: f64 = 1e-8;
}

/// Shorthand for a complex scalar.
#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/assignments.md")]
    mod assignments {}
    #[doc = include_str!("../../../book/src/linear-system.md")]
    mod linear_system {}
    #[doc = include_str!("../../../book/src/consistency.md")]
    mod consistency {}
    #[doc = include_str!("../../../book/src/rank-structure.md")]
    mod rank_structure {}
    #[doc = include_str!("../../../book/src/consistency-number.md")]
    mod consistency_number {}
    #[doc = include_str!("../../../book/src/counterexamples.md")]
    mod counterexamples {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/secret-sharing.md")]
    mod secret_sharing {}
}
