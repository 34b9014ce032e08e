use super::{BandedMatrix, BorderedMatrix, DenseMatrix, Mode};
use crate::{Error, Result, C64};

/// Any of the supported square or rectangular storage formats.
#[derive(Clone, Debug, PartialEq)]
pub enum Matrix {
    Banded(BandedMatrix),
    Bordered(BorderedMatrix),
    Dense(DenseMatrix),
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        Matrix::Banded(BandedMatrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Matrix::Banded(BandedMatrix::zeros(n, n, 0, 0))
    }

    pub fn rows(&self) -> usize {
        match self {
            Matrix::Banded(m) => m.rows(),
            Matrix::Bordered(m) => m.size(),
            Matrix::Dense(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Banded(m) => m.cols(),
            Matrix::Bordered(m) => m.size(),
            Matrix::Dense(m) => m.cols(),
        }
    }

    pub fn matvec(&self, x: &[C64], mode: Mode) -> Vec<C64> {
        match self {
            Matrix::Banded(m) => m.matvec(x, mode),
            Matrix::Bordered(m) => m.matvec(x, mode),
            Matrix::Dense(m) => m.matvec(x, mode),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Banded(m) => m.to_dense(),
            Matrix::Bordered(m) => m.to_dense(),
            Matrix::Dense(m) => m.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Matrix::Banded(m) => m.max_abs(),
            Matrix::Bordered(m) => m.max_abs(),
            Matrix::Dense(m) => m.max_abs(),
        }
    }

    /// True when every entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    /// True when the matrix is exactly the identity.
    pub fn is_identity(&self) -> bool {
        if self.rows() != self.cols() {
            return false;
        }
        match self {
            Matrix::Banded(m) => m.entries().all(|(i, j, v)| v == if i == j { C64::new(1.0, 0.0) } else { C64::default() }),
            _ => {
                let d = self.to_dense();
                (0..d.rows()).all(|i| (0..d.cols()).all(|j| d.get(i, j) == if i == j { C64::new(1.0, 0.0) } else { C64::default() }))
            }
        }
    }

    /// `a A + b B`, keeping the sparsest format both operands allow.
    pub fn lincomb(a: C64, m1: &Matrix, b: C64, m2: &Matrix) -> Result<Matrix> {
        if m1.rows() != m2.rows() || m1.cols() != m2.cols() {
            return Err(Error::contract("lincomb: shape mismatch"));
        }
        Ok(match (m1, m2) {
            (Matrix::Banded(x), Matrix::Banded(y)) => Matrix::Banded(BandedMatrix::lincomb(a, x, b, y)?),
            (Matrix::Bordered(x), Matrix::Bordered(y)) if x.rotation == y.rotation && x.border_width() == y.border_width() => {
                Matrix::Bordered(BorderedMatrix::lincomb(a, x, b, y)?)
            }
            (Matrix::Bordered(x), Matrix::Banded(y)) | (Matrix::Banded(y), Matrix::Bordered(x))
                if y.entries().all(|(_, _, v)| v == C64::default()) =>
            {
                let scale = if matches!(m1, Matrix::Bordered(_)) { a } else { b };
                Matrix::Bordered(x.scaled(scale))
            }
            _ => Matrix::Dense(DenseMatrix::lincomb(a, &m1.to_dense(), b, &m2.to_dense())?),
        })
    }

    /// Block-diagonal `[self, 0; 0, other]`.
    pub fn block_diag(&self, other: &Matrix) -> Matrix {
        match (self, other) {
            (Matrix::Banded(x), Matrix::Banded(y)) => Matrix::Banded(x.block_diag(y)),
            _ => Matrix::Dense(self.to_dense().block_diag(&other.to_dense())),
        }
    }
}

impl From<BandedMatrix> for Matrix {
    fn from(m: BandedMatrix) -> Self {
        Matrix::Banded(m)
    }
}

impl From<BorderedMatrix> for Matrix {
    fn from(m: BorderedMatrix) -> Self {
        Matrix::Bordered(m)
    }
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}
