use super::{DenseMatrix, Mode};
use crate::{Error, Result, C64};

/// Rectangular matrix with `kl` sub-diagonals and `ku` super-diagonals.
///
/// Row `i` stores columns `i - kl ..= i + ku`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    rows: usize,
    cols: usize,
    kl: usize,
    ku: usize,
    data: Vec<C64>,
}

impl BandedMatrix {
    pub fn zeros(rows: usize, cols: usize, kl: usize, ku: usize) -> Self {
        Self { rows, cols, kl, ku, data: vec![C64::default(); rows * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len(), 0, 0);
        m.data.copy_from_slice(diag);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.rows && j < self.cols && j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            C64::default()
        }
    }

    /// Overwrite entry `(i, j)`. Panics if the entry lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band (kl={}, ku={})", self.kl, self.ku);
        let k = self.index(i, j);
        self.data[k] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band (kl={}, ku={})", self.kl, self.ku);
        let k = self.index(i, j);
        self.data[k] += v;
    }

    /// Column range stored for row `i`.
    #[inline]
    pub fn row_span(&self, i: usize) -> std::ops::Range<usize> {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku + 1).min(self.cols);
        lo..hi.max(lo)
    }

    /// Iterate over stored `(i, j, value)` triples, row by row.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row_span(i).map(move |j| (i, j, self.get(i, j))))
    }

    pub fn matvec(&self, x: &[C64], mode: Mode) -> Vec<C64> {
        match mode {
            Mode::Normal => {
                assert_eq!(x.len(), self.cols, "matvec: input length");
                (0..self.rows)
                    .map(|i| self.row_span(i).map(|j| self.data[self.index(i, j)] * x[j]).sum())
                    .collect()
            }
            Mode::Adjoint => {
                assert_eq!(x.len(), self.rows, "adjoint matvec: input length");
                let mut y = vec![C64::default(); self.cols];
                for (i, xi) in x.iter().enumerate() {
                    for j in self.row_span(i) {
                        y[j] += self.data[self.index(i, j)].conj() * xi;
                    }
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.entries() {
            d.set(i, j, v);
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Copy into a matrix with at least the given bandwidths.
    pub fn widened(&self, kl: usize, ku: usize) -> Self {
        let mut out = Self::zeros(self.rows, self.cols, kl.max(self.kl), ku.max(self.ku));
        for (i, j, v) in self.entries() {
            out.set(i, j, v);
        }
        out
    }

    /// `a A + b B` for equally shaped banded matrices.
    pub fn lincomb(a: C64, m1: &Self, b: C64, m2: &Self) -> Result<Self> {
        if m1.rows != m2.rows || m1.cols != m2.cols {
            return Err(Error::contract("lincomb: shape mismatch"));
        }
        let mut out = Self::zeros(m1.rows, m1.cols, m1.kl.max(m2.kl), m1.ku.max(m2.ku));
        for (i, j, v) in m1.entries() {
            out.add_to(i, j, a * v);
        }
        for (i, j, v) in m2.entries() {
            out.add_to(i, j, b * v);
        }
        Ok(out)
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::contract("matmul: inner dimension mismatch"));
        }
        let mut out = Self::zeros(self.rows, other.cols, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.rows {
            for k in self.row_span(i) {
                let a = self.get(i, k);
                if a == C64::default() {
                    continue;
                }
                for j in other.row_span(k) {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        Ok(out)
    }

    /// Keep the leading `rows` rows.
    pub fn truncate_rows(&self, rows: usize) -> Self {
        let rows = rows.min(self.rows);
        let w = self.kl + self.ku + 1;
        Self { rows, cols: self.cols, kl: self.kl, ku: self.ku, data: self.data[..rows * w].to_vec() }
    }

    /// Leading `rows x cols` block.
    pub fn submatrix(&self, rows: usize, cols: usize) -> Self {
        let mut out = Self::zeros(rows, cols, self.kl, self.ku);
        for (i, j, v) in self.entries() {
            if i < rows && j < cols {
                out.set(i, j, v);
            }
        }
        out
    }

    /// Block-diagonal matrix `[self, 0; 0, other]`.
    pub fn block_diag(&self, other: &Self) -> Self {
        let kl = self.kl.max(other.kl);
        let ku = self.ku.max(other.ku);
        let mut out = Self::zeros(self.rows + other.rows, self.cols + other.cols, kl, ku);
        for (i, j, v) in self.entries() {
            out.set(i, j, v);
        }
        for (i, j, v) in other.entries() {
            out.set(i + self.rows, j + self.cols, v);
        }
        out
    }

    /// Solve with an upper-triangular square banded matrix (no pivoting, not
    /// counted as a factorization).
    pub fn solve_upper_triangular(&self, b: &[C64], mode: Mode) -> Result<Vec<C64>> {
        let n = self.rows;
        if self.cols != n || b.len() != n {
            return Err(Error::contract("triangular solve: shape mismatch"));
        }
        if self.kl != 0 && self.entries().any(|(i, j, v)| j < i && v != C64::default()) {
            return Err(Error::contract("triangular solve: matrix is not upper triangular"));
        }
        let scale = self.max_abs();
        for i in 0..n {
            let d = self.get(i, i).norm();
            if d <= super::PIVOT_TOLERANCE * scale {
                return Err(Error::Singular { pivot: i, magnitude: d });
            }
        }
        let mut x = b.to_vec();
        match mode {
            Mode::Normal => {
                for i in (0..n).rev() {
                    let mut s = x[i];
                    for j in (i + 1)..(i + self.ku + 1).min(n) {
                        s -= self.get(i, j) * x[j];
                    }
                    x[i] = s / self.get(i, i);
                }
            }
            Mode::Adjoint => {
                for i in 0..n {
                    x[i] /= self.get(i, i).conj();
                    let xi = x[i];
                    for j in (i + 1)..(i + self.ku + 1).min(n) {
                        x[j] -= self.get(i, j).conj() * xi;
                    }
                }
            }
        }
        Ok(x)
    }
}
