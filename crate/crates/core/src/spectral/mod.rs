//! Fourier and Chebyshev bases, fields and sparse spectral operators.
//!
//! Coefficient conventions:
//!
//! * Fourier modes are stored in the order `0, 1, -1, 2, -2, ...`; an even mode
//!   count keeps `+N/2` as the last entry. Coefficients are normalised so that
//!   mode zero is the mean of the grid values. Grids are uniform,
//!   `x_j = a + j L / M`.
//! * Chebyshev fields live in a "space" index: space 0 holds Chebyshev-T
//!   coefficients, space `k > 0` holds ultraspherical `C^(k)` coefficients.
//!   Grids are Gauss points `x_j = cos(pi (j + 1/2) / M)` mapped to the interval.
//!
//! A [`CotangentField`] is the adjoint counterpart of a [`Field`]: its
//! `to_coefficients` applies the adjoint of the backward transform and its
//! `to_grid` applies the adjoint of the forward transform, so the Euclidean
//! pairing with a primal field is the same in either layout.

mod basis;
mod field;
mod operators;

pub use basis::{Basis, BasisKind};
pub use field::{pair, Cotangent, CotangentField, Field, FieldData, Layout, Primal};
pub use operators::{
    boundary_row, conversion_operator, differentiation_operator, inner_product, multiplication_operator,
    quadrature_weights, quadrature_weights_on, resample, Endpoint, SpectralOperator,
};
