use super::basis::gauss_angle;
use super::{Basis, BasisKind, Field, Layout};
use crate::linalg::BandedMatrix;
use crate::{c, Error, Result, C64};

/// Banded operator between two coefficient spaces of one basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOperator {
    pub matrix: BandedMatrix,
    pub input_space: usize,
    pub output_space: usize,
}

impl SpectralOperator {
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.matvec(x, crate::linalg::Mode::Normal)
    }

    /// Composition `self * inner`; spaces must line up.
    pub fn compose(&self, inner: &SpectralOperator) -> Result<SpectralOperator> {
        if inner.output_space != self.input_space {
            return Err(Error::contract(format!(
                "cannot compose: inner maps to space {}, outer expects {}",
                inner.output_space, self.input_space
            )));
        }
        Ok(SpectralOperator {
            matrix: self.matrix.matmul(&inner.matrix)?,
            input_space: inner.input_space,
            output_space: self.output_space,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Left,
    Right,
}

/// `d^order / dx^order`.
///
/// Fourier: diagonal `(i k)^order` with `k = 2 pi m / L`, space 0 to 0; odd
/// orders vanish on the Nyquist slot.
/// Chebyshev: `T_n -> 2^(order-1) (order-1)! n C^(order)_(n-order)`, scaled by
/// `(2 / (b - a))^order`, space 0 to `order`.
pub fn differentiation_operator(basis: &Basis, order: usize) -> SpectralOperator {
    let n = basis.n_modes();
    match basis.kind() {
        BasisKind::Fourier => {
            // the unpaired Nyquist slot has no real odd derivative; zero it so
            // real fields stay real
            let nyquist = if n % 2 == 0 { Some(n - 1) } else { None };
            let diag: Vec<C64> = (0..n)
                .map(|i| {
                    if order % 2 == 1 && Some(i) == nyquist {
                        C64::default()
                    } else {
                        C64::new(0.0, basis.angular_wavenumber(i)).powu(order as u32)
                    }
                })
                .collect();
            SpectralOperator { matrix: BandedMatrix::from_diagonal(&diag), input_space: 0, output_space: 0 }
        }
        BasisKind::Chebyshev => {
            if order == 0 {
                return SpectralOperator { matrix: BandedMatrix::identity(n), input_space: 0, output_space: 0 };
            }
            let (a, b) = basis.interval();
            let scale = (2.0 / (b - a)).powi(order as i32);
            let factorial: f64 = (1..order).map(|k| k as f64).product();
            let pre = 2f64.powi(order as i32 - 1) * factorial * scale;
            let mut m = BandedMatrix::zeros(n, n, 0, order);
            for col in order..n {
                m.set(col - order, col, c(pre * col as f64));
            }
            SpectralOperator { matrix: m, input_space: 0, output_space: order }
        }
    }
}

/// Change of coefficient space `from -> to` (`to >= from`). Identity for Fourier.
pub fn conversion_operator(basis: &Basis, from: usize, to: usize) -> Result<SpectralOperator> {
    let n = basis.n_modes();
    if to < from {
        return Err(Error::contract(format!("conversion must raise the space index ({from} -> {to})")));
    }
    if basis.kind() == BasisKind::Fourier {
        return Ok(SpectralOperator { matrix: BandedMatrix::identity(n), input_space: 0, output_space: 0 });
    }
    let mut op = BandedMatrix::identity(n);
    for lambda in from..to {
        op = single_conversion(n, lambda).matmul(&op)?;
    }
    Ok(SpectralOperator { matrix: op, input_space: from, output_space: to })
}

/// `C^(lambda) -> C^(lambda + 1)`, with `C^(0)` meaning Chebyshev-T.
fn single_conversion(n: usize, lambda: usize) -> BandedMatrix {
    let mut s = BandedMatrix::zeros(n, n, 0, 2);
    if lambda == 0 {
        for col in 0..n {
            s.set(col, col, c(if col == 0 { 1.0 } else { 0.5 }));
            if col >= 2 {
                s.set(col - 2, col, c(-0.5));
            }
        }
    } else {
        let l = lambda as f64;
        for col in 0..n {
            let v = l / (col as f64 + l);
            s.set(col, col, c(v));
            if col >= 2 {
                s.set(col - 2, col, c(-v));
            }
        }
    }
    s
}

/// Jacobi matrix of multiplication by `x` in `C^(lambda)` (T for `lambda = 0`), size `n`.
fn jacobi(n: usize, lambda: usize) -> BandedMatrix {
    let mut j = BandedMatrix::zeros(n, n, 1, 1);
    let l = lambda as f64;
    for col in 0..n {
        let (up, down) = if lambda == 0 {
            if col == 0 {
                (1.0, 0.0)
            } else {
                (0.5, 0.5)
            }
        } else {
            let k = col as f64;
            ((k + 1.0) / (2.0 * (k + l)), (k + 2.0 * l - 1.0) / (2.0 * (k + l)))
        };
        if col + 1 < n {
            j.set(col + 1, col, c(up));
        }
        if col >= 1 {
            j.set(col - 1, col, c(down));
        }
    }
    j
}

/// Multiplication by a function given by its Chebyshev-T series, acting in space `space`.
pub fn multiplication_operator(basis: &Basis, space: usize, multiplier: &[C64]) -> Result<SpectralOperator> {
    if basis.kind() != BasisKind::Chebyshev {
        return Err(Error::Unsupported("multiplication operators are implemented for Chebyshev bases only".into()));
    }
    let n = basis.n_modes();
    let deg = multiplier.iter().rposition(|v| *v != C64::default()).unwrap_or(0);
    let big = n + deg + 1;
    let x = jacobi(big, space);
    let mut prev = BandedMatrix::identity(big);
    let mut acc = prev.scaled(multiplier.first().copied().unwrap_or_default());
    if deg >= 1 {
        let mut cur = x.clone();
        acc = BandedMatrix::lincomb(c(1.0), &acc, multiplier[1], &cur)?;
        for k in 2..=deg {
            let next = BandedMatrix::lincomb(c(2.0), &x.matmul(&cur)?, c(-1.0), &prev)?;
            acc = BandedMatrix::lincomb(c(1.0), &acc, multiplier[k], &next)?;
            prev = cur;
            cur = next;
        }
    }
    Ok(SpectralOperator { matrix: acc.submatrix(n, n), input_space: space, output_space: space })
}

/// Row `r` such that `r . c` is the `order`-th derivative at an endpoint of the
/// Chebyshev series `c`.
pub fn boundary_row(basis: &Basis, endpoint: Endpoint, order: usize) -> Result<Vec<C64>> {
    if basis.kind() != BasisKind::Chebyshev {
        return Err(Error::Unsupported("boundary rows are not defined for periodic bases".into()));
    }
    let (a, b) = basis.interval();
    let scale = (2.0 / (b - a)).powi(order as i32);
    Ok((0..basis.n_modes())
        .map(|n| {
            let nf = n as f64;
            let at_right: f64 = (0..order).map(|j| (nf * nf - (j * j) as f64) / (2 * j + 1) as f64).product();
            let sign = match endpoint {
                Endpoint::Right => 1.0,
                Endpoint::Left => {
                    if (n + order) % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            c(sign * at_right * scale)
        })
        .collect())
}

/// Quadrature weights on the native grid.
pub fn quadrature_weights(basis: &Basis) -> Vec<f64> {
    quadrature_weights_on(basis, basis.grid_size())
}

/// Quadrature weights on a grid of size `m`: uniform for Fourier, Fejer's first
/// rule on Gauss points for Chebyshev.
pub fn quadrature_weights_on(basis: &Basis, m: usize) -> Vec<f64> {
    let len = basis.length();
    match basis.kind() {
        BasisKind::Fourier => vec![len / m as f64; m],
        BasisKind::Chebyshev => (0..m)
            .map(|j| {
                let th = gauss_angle(j, m);
                let s: f64 = (1..=m / 2).map(|k| (2.0 * k as f64 * th).cos() / (4.0 * (k * k) as f64 - 1.0)).sum();
                (2.0 / m as f64) * (1.0 - 2.0 * s) * len / 2.0
            })
            .collect(),
    }
}

/// `sum_j w_j conj(f_j) g_j` on the native grid.
pub fn inner_product(f: &Field, g: &Field) -> Result<C64> {
    if f.basis() != g.basis() {
        return Err(Error::contract("inner product requires fields on the same basis"));
    }
    let fg = f.to_grid()?;
    let gg = g.to_grid()?;
    let w = quadrature_weights(f.basis());
    Ok(w.iter().zip(fg.data()).zip(gg.data()).map(|((w, a), b)| a.conj() * b * *w).sum())
}

/// Zero-pad or truncate coefficients onto a basis with `n_modes` modes.
///
/// Fourier slots are ordered by increasing `|k|`, so a prefix is a symmetric
/// band of wavenumbers.
pub fn resample(f: &Field, n_modes: usize) -> Result<Field> {
    if f.layout() != Layout::Coeff {
        return Err(Error::contract("resample requires coefficient layout"));
    }
    let target = f.basis().with_modes(n_modes)?;
    let mut data = vec![C64::default(); n_modes];
    let k = n_modes.min(f.basis().n_modes());
    data[..k].copy_from_slice(&f.data()[..k]);
    Field::from_coeffs_in_space(&target, f.space(), data)
}
