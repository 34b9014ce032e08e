//! Discrete adjoints for sparse spectral PDE solvers.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: Fourier and Chebyshev bases, fields, transforms and sparse
//!   spectral operators.
//! * [`linalg`]: banded, bordered and dense matrices with pivoted LU factors that
//!   solve both `A x = b` and `A^H y = c`.
//! * [`opgraph`]: expression graphs over fields with forward and reverse mode.
//! * [`solvers`]: linear and nonlinear boundary value problems and generalized
//!   eigenvalue problems, each with an adjoint.
//! * [`timestep`]: IMEX multistep and Runge-Kutta schemes with exact discrete adjoints.
//! * [`adjoint`]: whole-trajectory gradients with checkpointing, parameter
//!   augmentation and multi-stage chains.
//! * [`verify`]: Taylor, dot-product and finite-difference checks.
//! * [`workflows`]: the example problems driven by the `adspec` binary.

pub mod adjoint;
pub mod error;
pub mod linalg;
pub mod opgraph;
pub mod solvers;
pub mod spectral;
pub mod timestep;
pub mod verify;
pub mod workflows;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Shorthand for a real-valued complex number.
#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
