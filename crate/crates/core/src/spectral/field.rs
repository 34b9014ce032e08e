use std::marker::PhantomData;

use super::Basis;
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Grid,
    Coeff,
}

/// Marker for ordinary fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Primal;

/// Marker for cotangent (adjoint) fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cotangent;

/// Field data on a basis, either as grid values or coefficients.
///
/// `R` selects the transform semantics: [`Primal`] uses the forward/backward
/// transforms, [`Cotangent`] uses their adjoints.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData<R> {
    basis: Basis,
    layout: Layout,
    space: usize,
    data: Vec<C64>,
    _role: PhantomData<R>,
}

pub type Field = FieldData<Primal>;
pub type CotangentField = FieldData<Cotangent>;

impl<R> FieldData<R> {
    fn build(basis: Basis, layout: Layout, space: usize, data: Vec<C64>) -> Result<Self> {
        let expected = match layout {
            Layout::Grid => basis.grid_size(),
            Layout::Coeff => basis.n_modes(),
        };
        if data.len() != expected {
            return Err(Error::contract(format!("{layout:?} data has length {} but basis expects {expected}", data.len())));
        }
        if layout == Layout::Grid && space != 0 {
            return Err(Error::contract("grid layout is only defined for the native coefficient space"));
        }
        Ok(Self { basis, layout, space, data, _role: PhantomData })
    }

    pub fn from_grid(basis: &Basis, data: Vec<C64>) -> Result<Self> {
        Self::build(basis.clone(), Layout::Grid, 0, data)
    }

    pub fn from_coeffs(basis: &Basis, data: Vec<C64>) -> Result<Self> {
        Self::build(basis.clone(), Layout::Coeff, 0, data)
    }

    /// Coefficients in ultraspherical space `space` (Chebyshev only for `space > 0`).
    pub fn from_coeffs_in_space(basis: &Basis, space: usize, data: Vec<C64>) -> Result<Self> {
        if space > 0 && basis.kind() == super::BasisKind::Fourier {
            return Err(Error::contract("Fourier fields have a single coefficient space"));
        }
        Self::build(basis.clone(), Layout::Coeff, space, data)
    }

    pub fn zeros(basis: &Basis, layout: Layout) -> Self {
        let n = match layout {
            Layout::Grid => basis.grid_size(),
            Layout::Coeff => basis.n_modes(),
        };
        Self { basis: basis.clone(), layout, space: 0, data: vec![C64::default(); n], _role: PhantomData }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Coefficient space index (always 0 for Fourier and grid data).
    pub fn space(&self) -> usize {
        self.space
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn require_native(&self, what: &str) -> Result<()> {
        if self.space != 0 {
            return Err(Error::contract(format!("{what} requires native coefficient space, field is in space {}", self.space)));
        }
        Ok(())
    }
}

impl Field {
    /// Sample `f` on the native grid.
    pub fn from_fn(basis: &Basis, f: impl Fn(f64) -> C64) -> Self {
        let data = basis.grid_points().into_iter().map(f).collect();
        Self::build(basis.clone(), Layout::Grid, 0, data).expect("grid length matches basis")
    }

    /// Grid values to coefficients (identity if already in coefficient layout).
    pub fn to_coefficients(&self) -> Result<Field> {
        match self.layout {
            Layout::Coeff => Ok(self.clone()),
            Layout::Grid => Self::build(self.basis.clone(), Layout::Coeff, 0, self.basis.forward(&self.data)?),
        }
    }

    /// Coefficients to native grid values (identity if already on the grid).
    pub fn to_grid(&self) -> Result<Field> {
        self.require_native("to_grid")?;
        match self.layout {
            Layout::Grid => Ok(self.clone()),
            Layout::Coeff => {
                let g = self.basis.backward(&self.data, self.basis.grid_size())?;
                Self::build(self.basis.clone(), Layout::Grid, 0, g)
            }
        }
    }
}

impl CotangentField {
    /// Applies the adjoint of the backward transform.
    pub fn to_coefficients(&self) -> Result<CotangentField> {
        match self.layout {
            Layout::Coeff => Ok(self.clone()),
            Layout::Grid => Self::build(self.basis.clone(), Layout::Coeff, 0, self.basis.backward_adjoint(&self.data)?),
        }
    }

    /// Applies the adjoint of the forward transform.
    pub fn to_grid(&self) -> Result<CotangentField> {
        self.require_native("to_grid")?;
        match self.layout {
            Layout::Grid => Ok(self.clone()),
            Layout::Coeff => {
                let g = self.basis.forward_adjoint(&self.data, self.basis.grid_size())?;
                Self::build(self.basis.clone(), Layout::Grid, 0, g)
            }
        }
    }
}

/// Euclidean pairing `sum conj(cot_i) f_i`; requires matching basis, layout and space.
pub fn pair(cot: &CotangentField, f: &Field) -> Result<C64> {
    if cot.basis != f.basis || cot.layout != f.layout || cot.space != f.space {
        return Err(Error::contract("pairing requires matching basis, layout and space"));
    }
    Ok(crate::linalg::dot(&cot.data, &f.data))
}
