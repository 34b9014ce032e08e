use faer::linalg::solvers::SolveCore;

use super::{record_factorization, BandedMatrix, BorderedMatrix, DenseMatrix, Matrix, Mode, PIVOT_TOLERANCE};
use crate::{Error, Result, C64};

/// LU factors of a square matrix with partial pivoting.
///
/// The same factors solve `A x = b` and `A^H y = c`.
#[derive(Clone, Debug)]
pub struct LuFactors {
    inner: Inner,
}

#[derive(Clone, Debug)]
enum Inner {
    Banded(BandedLu),
    Dense(DenseLu),
    Bordered(Box<BorderedLu>),
}

impl LuFactors {
    /// Factor `m`. Fails with [`Error::Singular`] when a pivot falls below
    /// `1e-14 * max|A|`.
    pub fn factor(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::contract("LU: matrix must be square"));
        }
        record_factorization();
        let inner = match m {
            Matrix::Banded(b) => Inner::Banded(BandedLu::factor(b)?),
            Matrix::Dense(d) => Inner::Dense(DenseLu::factor(d)?),
            Matrix::Bordered(b) => Inner::Bordered(Box::new(BorderedLu::factor(b)?)),
        };
        Ok(Self { inner })
    }

    pub fn size(&self) -> usize {
        match &self.inner {
            Inner::Banded(f) => f.n,
            Inner::Dense(f) => f.n,
            Inner::Bordered(f) => f.size,
        }
    }

    pub fn solve(&self, b: &[C64], mode: Mode) -> Result<Vec<C64>> {
        if b.len() != self.size() {
            return Err(Error::contract(format!("LU solve: rhs length {} != {}", b.len(), self.size())));
        }
        Ok(match &self.inner {
            Inner::Banded(f) => f.solve(b, mode),
            Inner::Dense(f) => f.solve(b, mode),
            Inner::Bordered(f) => f.solve(b, mode),
        })
    }
}

/// Banded LU in row-window storage: row `i` keeps columns `i - kl ..= i + ku + kl`
/// to hold fill-in from row interchanges.
#[derive(Clone, Debug)]
struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    u: Vec<C64>,
    mult: Vec<C64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn factor(a: &BandedMatrix) -> Result<Self> {
        let n = a.rows();
        let kl = a.lower_bandwidth();
        let ku = a.upper_bandwidth();
        let width = 2 * kl + ku + 1;
        let mut u = vec![C64::default(); n * width];
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        for (i, j, v) in a.entries() {
            u[idx(i, j)] = v;
        }
        let scale = a.max_abs();
        let mut mult = vec![C64::default(); n * kl.max(1)];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = u[idx(k, k)].norm();
            for r in (k + 1)..=last {
                let v = u[idx(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= PIVOT_TOLERANCE * scale || best == 0.0 {
                return Err(Error::Singular { pivot: k, magnitude: best });
            }
            piv[k] = p;
            let jmax = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    u.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = u[idx(k, k)];
            for r in (k + 1)..=last {
                let l = u[idx(r, k)] / pivot;
                mult[k * kl + (r - k - 1)] = l;
                u[idx(r, k)] = C64::default();
                if l != C64::default() {
                    for j in (k + 1)..=jmax {
                        let ukj = u[idx(k, j)];
                        u[idx(r, j)] -= l * ukj;
                    }
                }
            }
        }
        Ok(Self { n, kl, width, u, mult, piv })
    }

    #[inline]
    fn uget(&self, i: usize, j: usize) -> C64 {
        self.u[i * self.width + (j + self.kl - i)]
    }

    fn solve(&self, b: &[C64], mode: Mode) -> Vec<C64> {
        let n = self.n;
        let kl = self.kl;
        let ubw = self.width - kl - 1;
        let mut x = b.to_vec();
        match mode {
            Mode::Normal => {
                for k in 0..n {
                    x.swap(k, self.piv[k]);
                    let xk = x[k];
                    for r in (k + 1)..=(k + kl).min(n - 1) {
                        x[r] -= self.mult[k * kl + (r - k - 1)] * xk;
                    }
                }
                for i in (0..n).rev() {
                    let mut s = x[i];
                    for j in (i + 1)..=(i + ubw).min(n - 1) {
                        s -= self.uget(i, j) * x[j];
                    }
                    x[i] = s / self.uget(i, i);
                }
            }
            Mode::Adjoint => {
                for i in 0..n {
                    x[i] /= self.uget(i, i).conj();
                    let xi = x[i];
                    for j in (i + 1)..=(i + ubw).min(n - 1) {
                        x[j] -= self.uget(i, j).conj() * xi;
                    }
                }
                for k in (0..n).rev() {
                    let mut s = x[k];
                    for r in (k + 1)..=(k + kl).min(n - 1) {
                        s -= self.mult[k * kl + (r - k - 1)].conj() * x[r];
                    }
                    x[k] = s;
                    x.swap(k, self.piv[k]);
                }
            }
        }
        x
    }
}

/// Dense LU with partial pivoting (faer's blocked kernel).
#[derive(Clone, Debug)]
struct DenseLu {
    n: usize,
    lu: faer::linalg::solvers::PartialPivLu<C64>,
}

impl DenseLu {
    fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        let scale = a.max_abs();
        let lu = a.to_faer().partial_piv_lu();
        let u = lu.U();
        for k in 0..n {
            let m = u[(k, k)].norm();
            if m <= PIVOT_TOLERANCE * scale || m == 0.0 {
                return Err(Error::Singular { pivot: k, magnitude: m });
            }
        }
        Ok(Self { n, lu })
    }

    fn solve(&self, b: &[C64], mode: Mode) -> Vec<C64> {
        let mut x = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        match mode {
            Mode::Normal => self.lu.solve_in_place_with_conj(faer::Conj::No, x.as_mut()),
            Mode::Adjoint => self.lu.solve_transpose_in_place_with_conj(faer::Conj::Yes, x.as_mut()),
        }
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Schur-complement factorization of a bordered matrix.
#[derive(Clone, Debug)]
struct BorderedLu {
    size: usize,
    core: BandedLu,
    /// `core^-1 cols`, stored column by column.
    w: Vec<Vec<C64>>,
    cols: DenseMatrix,
    rows: DenseMatrix,
    schur: Option<DenseLu>,
    rotation: usize,
}

impl BorderedLu {
    fn factor(b: &BorderedMatrix) -> Result<Self> {
        let core = BandedLu::factor(&b.core)?;
        let m = b.core.rows();
        let t = b.border_width();
        let w: Vec<Vec<C64>> = (0..t).map(|k| core.solve(&b.cols.column(k), Mode::Normal)).collect();
        let schur = if t > 0 {
            let mut s = b.corner.clone();
            for r in 0..t {
                for (k, wk) in w.iter().enumerate() {
                    let v: C64 = b.rows.row(r).iter().zip(wk).map(|(a, x)| a * x).sum();
                    s.add_to(r, k, -v);
                }
            }
            Some(DenseLu::factor(&s).map_err(|e| match e {
                Error::Singular { pivot, magnitude } => Error::Singular { pivot: m + pivot, magnitude },
                other => other,
            })?)
        } else {
            None
        };
        Ok(Self { size: m + t, core, w, cols: b.cols.clone(), rows: b.rows.clone(), schur, rotation: b.rotation })
    }

    fn solve(&self, rhs: &[C64], mode: Mode) -> Vec<C64> {
        let m = self.core.n;
        let mut v = rhs.to_vec();
        v.rotate_left(self.rotation);
        let (f, g) = v.split_at(m);
        let (x, y) = match (mode, &self.schur) {
            (_, None) => (self.core.solve(f, mode), Vec::new()),
            (Mode::Normal, Some(schur)) => {
                let z = self.core.solve(f, Mode::Normal);
                let mut r = g.to_vec();
                let cz = self.rows.matvec(&z, Mode::Normal);
                r.iter_mut().zip(&cz).for_each(|(a, b)| *a -= b);
                let y = schur.solve(&r, Mode::Normal);
                let mut x = z;
                for (k, wk) in self.w.iter().enumerate() {
                    x.iter_mut().zip(wk).for_each(|(a, b)| *a -= b * y[k]);
                }
                (x, y)
            }
            (Mode::Adjoint, Some(schur)) => {
                let z = self.core.solve(f, Mode::Adjoint);
                let mut r = g.to_vec();
                let bz = self.cols.matvec(&z, Mode::Adjoint);
                r.iter_mut().zip(&bz).for_each(|(a, b)| *a -= b);
                let y = schur.solve(&r, Mode::Adjoint);
                let mut f2 = f.to_vec();
                let cy = self.rows.matvec(&y, Mode::Adjoint);
                f2.iter_mut().zip(&cy).for_each(|(a, b)| *a -= b);
                (self.core.solve(&f2, Mode::Adjoint), y)
            }
        };
        let mut out = x;
        out.extend(y);
        out.rotate_right(self.rotation);
        out
    }
}
