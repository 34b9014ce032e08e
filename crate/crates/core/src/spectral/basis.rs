use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rustfft::{Fft, FftPlanner};

use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Fourier,
    Chebyshev,
}

/// One-dimensional spectral basis: kind, mode count, interval and dealias factor.
///
/// Cheap to clone; transform plans are shared.
#[derive(Clone)]
pub struct Basis {
    inner: Arc<Inner>,
}

struct Inner {
    kind: BasisKind,
    n_modes: usize,
    interval: (f64, f64),
    dealias: f64,
    grid_size: usize,
    plans: Vec<(usize, OnceLock<Plan>)>,
}

enum Plan {
    Fourier { forward: Arc<dyn Fft<f64>>, inverse: Arc<dyn Fft<f64>> },
    /// `cos(n theta_j)` stored row-major as `M x N`.
    Chebyshev { cos: Vec<f64> },
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis")
            .field("kind", &self.inner.kind)
            .field("n_modes", &self.inner.n_modes)
            .field("interval", &self.inner.interval)
            .field("dealias", &self.inner.dealias)
            .finish()
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.kind == other.inner.kind
                && self.inner.n_modes == other.inner.n_modes
                && self.inner.interval == other.inner.interval
                && self.inner.dealias == other.inner.dealias)
    }
}

/// `ceil(factor * n)`, robust to representation error in the factor.
pub(crate) fn scaled_size(factor: f64, n: usize) -> usize {
    ((factor * n as f64) - 1e-9).ceil().max(1.0) as usize
}

impl Basis {
    /// Periodic Fourier basis on `[a, b)` with the default dealias factor 3/2.
    pub fn fourier(n_modes: usize, interval: (f64, f64)) -> Result<Self> {
        Self::new(BasisKind::Fourier, n_modes, interval, 1.5)
    }

    /// Chebyshev basis on `[a, b]` with the default dealias factor 3/2.
    pub fn chebyshev(n_modes: usize, interval: (f64, f64)) -> Result<Self> {
        Self::new(BasisKind::Chebyshev, n_modes, interval, 1.5)
    }

    pub fn new(kind: BasisKind, n_modes: usize, interval: (f64, f64), dealias: f64) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::contract("basis needs at least one mode"));
        }
        if !(interval.1 > interval.0) || !interval.0.is_finite() || !interval.1.is_finite() {
            return Err(Error::contract(format!("invalid interval {interval:?}")));
        }
        if !(dealias >= 1.0) || !dealias.is_finite() {
            return Err(Error::contract(format!("dealias factor {dealias} must be >= 1")));
        }
        let grid_size = scaled_size(dealias, n_modes);
        let mut sizes = vec![grid_size];
        for f in [2.0, 2.5, 3.0] {
            let m = scaled_size(dealias.max(f), n_modes);
            if !sizes.contains(&m) {
                sizes.push(m);
            }
        }
        let plans = sizes.into_iter().map(|m| (m, OnceLock::new())).collect();
        Ok(Self { inner: Arc::new(Inner { kind, n_modes, interval, dealias, grid_size, plans }) })
    }

    /// Same basis with a different dealias factor.
    pub fn with_dealias(&self, dealias: f64) -> Result<Self> {
        Self::new(self.kind(), self.n_modes(), self.interval(), dealias)
    }

    /// Same kind, interval and dealias factor with a different mode count.
    pub fn with_modes(&self, n_modes: usize) -> Result<Self> {
        Self::new(self.kind(), n_modes, self.interval(), self.dealias())
    }

    pub fn kind(&self) -> BasisKind {
        self.inner.kind
    }

    pub fn n_modes(&self) -> usize {
        self.inner.n_modes
    }

    pub fn interval(&self) -> (f64, f64) {
        self.inner.interval
    }

    pub fn length(&self) -> f64 {
        self.inner.interval.1 - self.inner.interval.0
    }

    pub fn dealias(&self) -> f64 {
        self.inner.dealias
    }

    /// Native grid size `ceil(dealias * n_modes)`.
    pub fn grid_size(&self) -> usize {
        self.inner.grid_size
    }

    /// Grid size used for a product of `k` factors: `max(dealias, (k + 1) / 2)`.
    pub fn product_grid_size(&self, factors: u32) -> usize {
        let f = self.dealias().max(1.5).max((factors as f64 + 1.0) / 2.0);
        scaled_size(f, self.n_modes())
    }

    /// Integer wavenumber of Fourier coefficient slot `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i == 0 {
            0
        } else if i % 2 == 1 {
            ((i + 1) / 2) as i64
        } else {
            -((i / 2) as i64)
        }
    }

    /// Physical angular wavenumber `2 pi k / L` of Fourier slot `i`.
    pub fn angular_wavenumber(&self, i: usize) -> f64 {
        2.0 * PI * self.wavenumber(i) as f64 / self.length()
    }

    /// Native grid points.
    pub fn grid_points(&self) -> Vec<f64> {
        self.grid_points_sized(self.grid_size())
    }

    pub fn grid_points_sized(&self, m: usize) -> Vec<f64> {
        let (a, b) = self.interval();
        match self.kind() {
            BasisKind::Fourier => (0..m).map(|j| a + (b - a) * j as f64 / m as f64).collect(),
            BasisKind::Chebyshev => (0..m).map(|j| a + (b - a) * (gauss_angle(j, m).cos() + 1.0) / 2.0).collect(),
        }
    }

    fn check_grid(&self, m: usize) -> Result<()> {
        if m < self.n_modes() {
            return Err(Error::contract(format!("grid size {m} smaller than mode count {}", self.n_modes())));
        }
        Ok(())
    }

    fn with_plan<T>(&self, m: usize, f: impl FnOnce(&Plan) -> T) -> T {
        if let Some((_, cell)) = self.inner.plans.iter().find(|(s, _)| *s == m) {
            f(cell.get_or_init(|| self.build_plan(m)))
        } else {
            f(&self.build_plan(m))
        }
    }

    fn build_plan(&self, m: usize) -> Plan {
        match self.kind() {
            BasisKind::Fourier => {
                let mut planner = FftPlanner::new();
                Plan::Fourier { forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
            }
            BasisKind::Chebyshev => {
                let n = self.n_modes();
                let mut cos = Vec::with_capacity(m * n);
                for j in 0..m {
                    let th = gauss_angle(j, m);
                    cos.extend((0..n).map(|k| (k as f64 * th).cos()));
                }
                Plan::Chebyshev { cos }
            }
        }
    }

    #[inline]
    fn bin(&self, i: usize, m: usize) -> usize {
        self.wavenumber(i).rem_euclid(m as i64) as usize
    }

    /// Grid values (size `m`) to coefficients.
    pub fn forward(&self, grid: &[C64]) -> Result<Vec<C64>> {
        let m = grid.len();
        self.check_grid(m)?;
        let n = self.n_modes();
        Ok(self.with_plan(m, |plan| match plan {
            Plan::Fourier { forward, .. } => {
                let mut buf = grid.to_vec();
                forward.process(&mut buf);
                let s = 1.0 / m as f64;
                (0..n).map(|i| buf[self.bin(i, m)] * s).collect()
            }
            Plan::Chebyshev { cos } => {
                let mut out = vec![C64::default(); n];
                for (j, g) in grid.iter().enumerate() {
                    for (o, c) in out.iter_mut().zip(&cos[j * n..(j + 1) * n]) {
                        *o += g * c;
                    }
                }
                let s = 2.0 / m as f64;
                out.iter_mut().for_each(|v| *v *= s);
                out[0] *= 0.5;
                out
            }
        }))
    }

    /// Coefficients to grid values on a grid of size `m`.
    pub fn backward(&self, coeffs: &[C64], m: usize) -> Result<Vec<C64>> {
        self.check_grid(m)?;
        self.check_coeffs(coeffs)?;
        let n = self.n_modes();
        Ok(self.with_plan(m, |plan| match plan {
            Plan::Fourier { inverse, .. } => {
                let mut buf = vec![C64::default(); m];
                for (i, c) in coeffs.iter().enumerate() {
                    buf[self.bin(i, m)] = *c;
                }
                inverse.process(&mut buf);
                buf
            }
            Plan::Chebyshev { cos } => (0..m)
                .map(|j| cos[j * n..(j + 1) * n].iter().zip(coeffs).map(|(c, v)| v * c).sum())
                .collect(),
        }))
    }

    /// Adjoint of [`Basis::forward`]: coefficient cotangent to grid cotangent.
    pub fn forward_adjoint(&self, cot: &[C64], m: usize) -> Result<Vec<C64>> {
        self.check_grid(m)?;
        self.check_coeffs(cot)?;
        let n = self.n_modes();
        let s = 1.0 / m as f64;
        Ok(self.with_plan(m, |plan| match plan {
            Plan::Fourier { inverse, .. } => {
                let mut buf = vec![C64::default(); m];
                for (i, c) in cot.iter().enumerate() {
                    buf[self.bin(i, m)] = *c * s;
                }
                inverse.process(&mut buf);
                buf
            }
            Plan::Chebyshev { cos } => {
                let mut scaled: Vec<C64> = cot.iter().map(|v| v * 2.0 * s).collect();
                scaled[0] *= 0.5;
                (0..m).map(|j| cos[j * n..(j + 1) * n].iter().zip(&scaled).map(|(c, v)| v * c).sum()).collect()
            }
        }))
    }

    /// Adjoint of [`Basis::backward`]: grid cotangent (size `m`) to coefficient cotangent.
    pub fn backward_adjoint(&self, cot: &[C64]) -> Result<Vec<C64>> {
        let m = cot.len();
        self.check_grid(m)?;
        let n = self.n_modes();
        Ok(self.with_plan(m, |plan| match plan {
            Plan::Fourier { forward, .. } => {
                let mut buf = cot.to_vec();
                forward.process(&mut buf);
                (0..n).map(|i| buf[self.bin(i, m)]).collect()
            }
            Plan::Chebyshev { cos } => {
                let mut out = vec![C64::default(); n];
                for (j, g) in cot.iter().enumerate() {
                    for (o, c) in out.iter_mut().zip(&cos[j * n..(j + 1) * n]) {
                        *o += g * c;
                    }
                }
                out
            }
        }))
    }

    fn check_coeffs(&self, c: &[C64]) -> Result<()> {
        if c.len() != self.n_modes() {
            return Err(Error::contract(format!("coefficient length {} != mode count {}", c.len(), self.n_modes())));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn gauss_angle(j: usize, m: usize) -> f64 {
    PI * (j as f64 + 0.5) / m as f64
}
