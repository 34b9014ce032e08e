//! Banded, bordered and dense matrices with pivoted LU factorizations.
//!
//! Every factorization solves both `A x = b` and `A^H y = c` from the same
//! factors. Factorizations are counted per thread so callers can assert that an
//! adjoint pass performs none.

mod banded;
mod bordered;
mod dense;
mod lu;
mod matrix;

pub use banded::BandedMatrix;
pub use bordered::BorderedMatrix;
pub use dense::DenseMatrix;
pub use lu::LuFactors;
pub use matrix::Matrix;

use std::cell::Cell;

/// Which operator a solve or product applies: `A` or its conjugate transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Adjoint,
}

/// Relative pivot threshold below which a factorization reports singularity.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of LU factorizations performed on the current thread so far.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(|c| c.get())
}

pub(crate) fn record_factorization() {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
}

/// Plain Euclidean pairing `sum conj(a_i) b_i`.
pub fn dot(a: &[crate::C64], b: &[crate::C64]) -> crate::C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Euclidean norm of a complex vector.
pub fn norm(a: &[crate::C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
