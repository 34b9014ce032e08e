use crate::linalg::{dot, norm, DenseMatrix, LuFactors, Matrix, Mode};
use crate::{Error, Result, C64};

/// Generalized eigenproblem `(lambda M + L) X = 0`.
#[derive(Clone, Debug)]
pub struct Evp {
    pub mass: Matrix,
    pub stiffness: Matrix,
}

/// Finite eigenvalues with unit-norm right (and optionally left) vectors.
///
/// Each vector is scaled so its largest-magnitude entry is real and positive.
/// Eigenvalues are sorted by decreasing real part.
#[derive(Clone, Debug)]
pub struct EigSolution {
    pub values: Vec<C64>,
    pub right: Vec<Vec<C64>>,
    pub left: Option<Vec<Vec<C64>>>,
}

impl EigSolution {
    /// `||(lambda M + L) X|| / (||X|| (||L|| + |lambda| ||M||))` for pair `i`.
    pub fn relative_residual(&self, evp: &Evp, i: usize) -> f64 {
        let x = &self.right[i];
        let lam = self.values[i];
        let r: Vec<C64> = evp
            .mass
            .matvec(x, Mode::Normal)
            .iter()
            .zip(evp.stiffness.matvec(x, Mode::Normal))
            .map(|(m, l)| lam * m + l)
            .collect();
        let scale = evp.stiffness.max_abs() + lam.norm() * evp.mass.max_abs();
        norm(&r) / (norm(x) * scale)
    }

    /// Index of the eigenvalue closest to `target`.
    pub fn nearest(&self, target: C64) -> Option<usize> {
        (0..self.values.len()).min_by(|&a, &b| {
            (self.values[a] - target).norm().total_cmp(&(self.values[b] - target).norm())
        })
    }
}

fn normalize(v: &mut [C64]) {
    let n = norm(v);
    if n == 0.0 {
        return;
    }
    let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let phase = big.conj() / big.norm();
    v.iter_mut().for_each(|x| *x *= phase / n);
}

/// Finite eigenpairs of the pencil `A x = mu B x`.
fn pencil(a: &DenseMatrix, b: &DenseMatrix, b_is_identity: bool) -> Result<Vec<(C64, Vec<C64>)>> {
    let n = a.rows();
    let fa = a.to_faer();
    let mut pairs: Vec<(C64, Vec<C64>)> = Vec::with_capacity(n);
    if b_is_identity {
        let e = fa.eigen().map_err(|e| Error::Unsupported(format!("eigensolver failed: {e:?}")))?;
        let (s, u) = (e.S(), e.U());
        for j in 0..n {
            pairs.push((s[j], (0..n).map(|i| u[(i, j)]).collect::<Vec<C64>>()));
        }
    } else {
        let e = fa
            .generalized_eigen(b.to_faer())
            .map_err(|e| Error::Unsupported(format!("generalized eigensolver failed: {e:?}")))?;
        let (sa, sb, u) = (e.S_a(), e.S_b(), e.U());
        let bscale = b.max_abs().max(f64::MIN_POSITIVE);
        for j in 0..n {
            if sb[j].norm() <= 1e-12 * bscale {
                continue;
            }
            let mu = sa[j] / sb[j];
            if mu.is_finite() {
                pairs.push((mu, (0..n).map(|i| u[(i, j)]).collect::<Vec<C64>>()));
            }
        }
    }
    for (_, v) in &mut pairs {
        normalize(v);
    }
    Ok(pairs)
}

fn faer_to_dense(m: &faer::Mat<C64>) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            d.set(i, j, m[(i, j)]);
        }
    }
    d
}

/// Tau pencils have mass rows that are exactly zero (boundary rows). Their
/// infinite eigenvalues can stall QZ, so they are removed exactly: with `C`
/// the constraint rows of `A` and `C^H = [W Z] [R; 0]`, every finite
/// eigenvector is `Z y` for an eigenvector `y` of `(A_K Z, B_K Z)`, `K` the
/// remaining rows.
struct Reduction {
    keep: Vec<usize>,
    zero: Vec<usize>,
    q: faer::Mat<C64>,
    r: faer::Mat<C64>,
    a: DenseMatrix,
    b: DenseMatrix,
}

impl Reduction {
    fn new(a: &DenseMatrix, b: &DenseMatrix) -> Option<Self> {
        let n = a.rows();
        let zero: Vec<usize> = (0..n).filter(|&i| b.row(i).iter().all(|v| *v == C64::default())).collect();
        let k = zero.len();
        if k == 0 || k == n {
            return None;
        }
        let keep: Vec<usize> = (0..n).filter(|i| !zero.contains(i)).collect();
        let ch = faer::Mat::<C64>::from_fn(n, k, |i, j| a.get(zero[j], i).conj());
        let qr = ch.qr();
        let r = qr.thin_R().to_owned();
        let scale = (0..k).map(|j| r[(j, j)].norm()).fold(0.0, f64::max);
        if (0..k).any(|j| r[(j, j)].norm() <= 1e-12 * scale) {
            // dependent constraint rows: leave it to QZ
            return None;
        }
        let q = qr.compute_Q();
        let z = q.get(.., k..);
        let ak = faer::Mat::<C64>::from_fn(n - k, n, |i, j| a.get(keep[i], j));
        let bk = faer::Mat::<C64>::from_fn(n - k, n, |i, j| b.get(keep[i], j));
        let (ar, br) = (&ak * z, &bk * z);
        Some(Self { keep, zero, q, r, a: faer_to_dense(&ar), b: faer_to_dense(&br) })
    }

    fn k(&self) -> usize {
        self.zero.len()
    }

    fn expand_right(&self, y: &[C64]) -> Vec<C64> {
        let n = self.q.nrows();
        let k = self.k();
        (0..n).map(|i| (0..y.len()).map(|j| self.q[(i, k + j)] * y[j]).sum()).collect()
    }

    /// Full left vector of `A - mu B` from the reduced one `w`: the kept rows
    /// are `w`, the constraint rows solve `R Y_C = -W^H (A_K - mu B_K)^H w`.
    fn expand_left(&self, a: &DenseMatrix, b: &DenseMatrix, mu: C64, w: &[C64]) -> Vec<C64> {
        let n = a.rows();
        let k = self.k();
        // t = (A_K - mu B_K)^H w
        let mut t = vec![C64::default(); n];
        for (i, &row) in self.keep.iter().enumerate() {
            let (ar, br) = (a.row(row), b.row(row));
            for j in 0..n {
                t[j] += (ar[j] - mu * br[j]).conj() * w[i];
            }
        }
        let mut rhs: Vec<C64> = (0..k).map(|c| -(0..n).map(|i| self.q[(i, c)].conj() * t[i]).sum::<C64>()).collect();
        for i in (0..k).rev() {
            let s: C64 = ((i + 1)..k).map(|j| self.r[(i, j)] * rhs[j]).sum();
            rhs[i] = (rhs[i] - s) / self.r[(i, i)];
        }
        let mut y = vec![C64::default(); n];
        for (i, &row) in self.keep.iter().enumerate() {
            y[row] = w[i];
        }
        for (j, &row) in self.zero.iter().enumerate() {
            y[row] = rhs[j];
        }
        y
    }
}

/// Eigenpairs `A x = mu B x`.
fn right_pairs(a: &DenseMatrix, b: &DenseMatrix, ident: bool) -> Result<Vec<(C64, Vec<C64>)>> {
    if ident {
        return pencil(a, b, true);
    }
    let Some(red) = Reduction::new(a, b) else { return pencil(a, b, false) };
    let mut pairs = pencil(&red.a, &red.b, false)?;
    for (_, v) in &mut pairs {
        *v = red.expand_right(v);
        normalize(v);
    }
    Ok(pairs)
}

/// Eigenpairs of the adjoint pencil `A^H y = conj(mu) B^H y`.
fn left_pairs(a: &DenseMatrix, b: &DenseMatrix, ident: bool) -> Result<Vec<(C64, Vec<C64>)>> {
    if ident {
        return pencil(&a.conj_transpose(), &b.conj_transpose(), true);
    }
    let Some(red) = Reduction::new(a, b) else { return pencil(&a.conj_transpose(), &b.conj_transpose(), false) };
    let mut pairs = pencil(&red.a.conj_transpose(), &red.b.conj_transpose(), false)?;
    for (nu, v) in &mut pairs {
        *v = red.expand_left(a, b, nu.conj(), v);
        normalize(v);
    }
    Ok(pairs)
}

fn operands(evp: &Evp) -> Result<(DenseMatrix, DenseMatrix, bool)> {
    let n = evp.mass.rows();
    if evp.mass.cols() != n || evp.stiffness.rows() != n || evp.stiffness.cols() != n {
        return Err(Error::contract("evp: mass and stiffness must be square and of equal size"));
    }
    let mut a = evp.stiffness.to_dense();
    a.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
    let b = evp.mass.to_dense();
    if !a.as_slice().iter().chain(b.as_slice()).all(|v| v.is_finite()) {
        return Err(Error::contract("evp: non-finite matrix entries"));
    }
    Ok((a, b, evp.mass.is_identity()))
}

/// Dense eigensolve of `(lambda M + L) X = 0`; with `want_left`, also the
/// left vectors `(conj(lambda) M^H + L^H) Y = 0` paired to every eigenvalue.
pub fn solve_evp(evp: &Evp, want_left: bool) -> Result<EigSolution> {
    let (a, b, ident) = operands(evp)?;
    let mut pairs = right_pairs(&a, &b, ident)?;
    pairs.sort_by(|x, y| y.0.re.total_cmp(&x.0.re).then(y.0.im.total_cmp(&x.0.im)));
    let (values, right): (Vec<C64>, Vec<Vec<C64>>) = pairs.into_iter().unzip();
    let mut sol = EigSolution { values, right, left: None };
    if want_left {
        let all: Vec<usize> = (0..sol.values.len()).collect();
        sol.left = Some(left_vectors(evp, &sol, &all)?);
    }
    Ok(sol)
}

/// Left vectors for the selected eigenvalues, from a second eigensolve of the
/// conjugate-transposed pencil. Each eigenvalue is matched to the adjoint
/// eigenvalue nearest its conjugate within `1e-8` relative distance.
pub fn left_vectors(evp: &Evp, sol: &EigSolution, indices: &[usize]) -> Result<Vec<Vec<C64>>> {
    let (a, b, ident) = operands(evp)?;
    let adj = left_pairs(&a, &b, ident)?;
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let lam = *sol.values.get(i).ok_or_else(|| Error::contract("left_vectors: index out of range"))?;
        let target = lam.conj();
        let tol = 1e-8 * lam.norm().max(1.0);
        let hits: Vec<usize> = (0..adj.len()).filter(|&k| (adj[k].0 - target).norm() <= tol).collect();
        match hits.len() {
            0 => return Err(Error::UnpairedEigenvalue { eigenvalue: lam }),
            1 => out.push(adj[hits[0]].1.clone()),
            _ => {
                return Err(Error::AmbiguousPairing {
                    eigenvalue: lam,
                    candidates: hits.iter().map(|&k| adj[k].0.conj()).collect(),
                })
            }
        }
    }
    Ok(out)
}

fn apply(m: Option<&Matrix>, x: &[C64]) -> Vec<C64> {
    m.map(|m| m.matvec(x, Mode::Normal)).unwrap_or_else(|| vec![C64::default(); x.len()])
}

/// `d lambda / dp = -<Y, (lambda dM + dL) X> / <Y, M X>`; `None` means a zero derivative.
pub fn eigenvalue_sensitivity(
    evp: &Evp,
    lambda: C64,
    x: &[C64],
    y: &[C64],
    dm: Option<&Matrix>,
    dl: Option<&Matrix>,
) -> Result<C64> {
    let mx = evp.mass.matvec(x, Mode::Normal);
    let denom = dot(y, &mx);
    if denom.norm() < 1e-12 * norm(y) * norm(x) {
        return Err(Error::DegenerateEigenvalue { overlap: denom.norm() });
    }
    let num: Vec<C64> = apply(dm, x).iter().zip(apply(dl, x)).map(|(a, b)| lambda * a + b).collect();
    Ok(-dot(y, &num) / denom)
}

/// `dX/dp` orthogonal to `X`, from the bordered system
/// `[[lambda M + L, M X], [X^H, 0]] [dX; mu] = [-(dlambda M + lambda dM + dL) X; 0]`.
#[allow(clippy::too_many_arguments)]
pub fn eigenvector_sensitivity(
    evp: &Evp,
    lambda: C64,
    x: &[C64],
    y: &[C64],
    dlambda: C64,
    dm: Option<&Matrix>,
    dl: Option<&Matrix>,
) -> Result<Vec<C64>> {
    let n = x.len();
    let mx = evp.mass.matvec(x, Mode::Normal);
    let rhs: Vec<C64> = mx
        .iter()
        .zip(apply(dm, x))
        .zip(apply(dl, x))
        .map(|((m, dmx), dlx)| -(dlambda * m + lambda * dmx + dlx))
        .collect();
    let consistency = dot(y, &rhs).norm() / (norm(y) * norm(&rhs)).max(f64::MIN_POSITIVE);
    if consistency > 1e-8 {
        return Err(Error::InconsistentInputs { residual: consistency });
    }
    let pencil = Matrix::lincomb(lambda, &evp.mass, C64::new(1.0, 0.0), &evp.stiffness)?.to_dense();
    let mut big = DenseMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        big.row_mut(i)[..n].copy_from_slice(pencil.row(i));
        big.set(i, n, mx[i]);
        big.set(n, i, x[i].conj());
    }
    let mut b = rhs;
    b.push(C64::default());
    let sol = LuFactors::factor(&Matrix::Dense(big))?.solve(&b, Mode::Normal)?;
    Ok(sol[..n].to_vec())
}

/// Left vector `Y` with `Y^H (lambda M + L) = 0` for a known eigenvalue, by
/// inverse iteration on the slightly shifted pencil. One factorization.
pub fn left_vector_near(evp: &Evp, lambda: C64) -> Result<Vec<C64>> {
    let shift = lambda + C64::new(1e-10 * lambda.norm().max(1.0), 0.0);
    let a = Matrix::lincomb(shift, &evp.mass, C64::new(1.0, 0.0), &evp.stiffness)?;
    let lu = LuFactors::factor(&a)?;
    let n = a.rows();
    let mut y: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
    for _ in 0..3 {
        y = lu.solve(&y, Mode::Adjoint)?;
        let s = norm(&y);
        y.iter_mut().for_each(|v| *v /= s);
    }
    let exact = Matrix::lincomb(lambda, &evp.mass, C64::new(1.0, 0.0), &evp.stiffness)?;
    let r = norm(&exact.matvec(&y, Mode::Adjoint)) / exact.max_abs().max(f64::MIN_POSITIVE);
    if r > 1e-8 {
        return Err(Error::ToleranceNotMet { what: "left eigenvector residual".into(), value: r, tolerance: 1e-8 });
    }
    Ok(y)
}
