use super::{BandedMatrix, DenseMatrix, Mode};
use crate::{Error, Result, C64};

/// Banded core plus `t` dense border rows and columns:
///
/// ```text
/// [ core  cols   ]
/// [ rows  corner ]
/// ```
///
/// `rotation` maps the bordered ordering back to the caller's ordering: the
/// matrix seen by the caller is `P^-1 B P` where `P` rotates a vector left by
/// `rotation` entries. With `rotation = t` this represents a square matrix whose
/// first `t` rows are dense boundary rows and whose remaining rows are banded,
/// which is the layout of tau-method systems.
#[derive(Clone, Debug, PartialEq)]
pub struct BorderedMatrix {
    pub(crate) core: BandedMatrix,
    pub(crate) cols: DenseMatrix,
    pub(crate) rows: DenseMatrix,
    pub(crate) corner: DenseMatrix,
    pub(crate) rotation: usize,
}

impl BorderedMatrix {
    pub fn new(core: BandedMatrix, cols: DenseMatrix, rows: DenseMatrix, corner: DenseMatrix) -> Result<Self> {
        let m = core.rows();
        let t = corner.rows();
        if core.cols() != m
            || cols.rows() != m
            || cols.cols() != t
            || rows.rows() != t
            || rows.cols() != m
            || corner.cols() != t
        {
            return Err(Error::contract("bordered matrix: inconsistent block shapes"));
        }
        Ok(Self { core, cols, rows, corner, rotation: 0 })
    }

    /// Square matrix `[top; rest]` where `top` holds `t` dense rows and `rest`
    /// is an `(n - t) x n` banded block.
    pub fn from_tau_rows(top: &DenseMatrix, rest: &BandedMatrix) -> Result<Self> {
        let t = top.rows();
        let n = top.cols();
        if rest.cols() != n || rest.rows() + t != n {
            return Err(Error::contract("tau system: top and banded rows do not form a square matrix"));
        }
        let m = n - t;
        let kl = rest.lower_bandwidth() + t;
        let ku = rest.upper_bandwidth().saturating_sub(t);
        let mut core = BandedMatrix::zeros(m, m, kl, ku);
        let mut cols = DenseMatrix::zeros(m, t);
        for (i, j, v) in rest.entries() {
            if j < t {
                cols.set(i, j, v);
            } else {
                core.set(i, j - t, v);
            }
        }
        let mut rows = DenseMatrix::zeros(t, m);
        let mut corner = DenseMatrix::zeros(t, t);
        for r in 0..t {
            for j in 0..n {
                if j < t {
                    corner.set(r, j, top.get(r, j));
                } else {
                    rows.set(r, j - t, top.get(r, j));
                }
            }
        }
        Ok(Self { core, cols, rows, corner, rotation: t })
    }

    pub fn size(&self) -> usize {
        self.core.rows() + self.corner.rows()
    }

    pub fn border_width(&self) -> usize {
        self.corner.rows()
    }

    pub fn core(&self) -> &BandedMatrix {
        &self.core
    }

    pub(crate) fn rotate_in(&self, x: &[C64]) -> Vec<C64> {
        let mut v = x.to_vec();
        v.rotate_left(self.rotation);
        v
    }

    pub(crate) fn rotate_out(&self, mut v: Vec<C64>) -> Vec<C64> {
        v.rotate_right(self.rotation);
        v
    }

    pub fn matvec(&self, x: &[C64], mode: Mode) -> Vec<C64> {
        assert_eq!(x.len(), self.size(), "matvec: input length");
        let m = self.core.rows();
        let xb = self.rotate_in(x);
        let (xc, xt) = xb.split_at(m);
        let (top, bottom) = match mode {
            Mode::Normal => {
                let mut top = self.core.matvec(xc, mode);
                add(&mut top, &self.cols.matvec(xt, mode));
                let mut bottom = self.rows.matvec(xc, mode);
                add(&mut bottom, &self.corner.matvec(xt, mode));
                (top, bottom)
            }
            Mode::Adjoint => {
                let mut top = self.core.matvec(xc, mode);
                add(&mut top, &self.rows.matvec(xt, mode));
                let mut bottom = self.cols.matvec(xc, mode);
                add(&mut bottom, &self.corner.matvec(xt, mode));
                (top, bottom)
            }
        };
        let mut out = top;
        out.extend(bottom);
        self.rotate_out(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let m = self.core.rows();
        let n = self.size();
        let mut b = DenseMatrix::zeros(n, n);
        for (i, j, v) in self.core.entries() {
            b.set(i, j, v);
        }
        for i in 0..m {
            for k in 0..self.border_width() {
                b.set(i, m + k, self.cols.get(i, k));
                b.set(m + k, i, self.rows.get(k, i));
            }
        }
        for r in 0..self.border_width() {
            for k in 0..self.border_width() {
                b.set(m + r, m + k, self.corner.get(r, k));
            }
        }
        let s = self.rotation;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set((i + s) % n, (j + s) % n, b.get(i, j));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.core
            .max_abs()
            .max(self.cols.max_abs())
            .max(self.rows.max_abs())
            .max(self.corner.max_abs())
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            core: self.core.scaled(s),
            cols: DenseMatrix::lincomb(s, &self.cols, C64::default(), &self.cols).expect("same shape"),
            rows: DenseMatrix::lincomb(s, &self.rows, C64::default(), &self.rows).expect("same shape"),
            corner: DenseMatrix::lincomb(s, &self.corner, C64::default(), &self.corner).expect("same shape"),
            rotation: self.rotation,
        }
    }

    /// `a A + b B` when both share border width and rotation.
    pub fn lincomb(a: C64, m1: &Self, b: C64, m2: &Self) -> Result<Self> {
        if m1.rotation != m2.rotation || m1.border_width() != m2.border_width() || m1.size() != m2.size() {
            return Err(Error::contract("bordered lincomb: structure mismatch"));
        }
        Ok(Self {
            core: BandedMatrix::lincomb(a, &m1.core, b, &m2.core)?,
            cols: DenseMatrix::lincomb(a, &m1.cols, b, &m2.cols)?,
            rows: DenseMatrix::lincomb(a, &m1.rows, b, &m2.rows)?,
            corner: DenseMatrix::lincomb(a, &m1.corner, b, &m2.corner)?,
            rotation: m1.rotation,
        })
    }
}

pub(crate) fn add(a: &mut [C64], b: &[C64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}
