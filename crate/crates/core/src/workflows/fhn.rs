//! Phase reduction of the FitzHugh-Nagumo oscillator
//!
//! `du/dt = u - u^3/3 - v + I`, `dv/dt = eps (u + a - b v)`.
//!
//! The periodic orbit is solved as a boundary value problem in the phase
//! `theta = omega t` on a Fourier basis with `omega` unknown. The Floquet
//! problem about the orbit has a neutral eigenvalue whose adjoint vector,
//! normalized against the orbit velocity, is the phase sensitivity `Z`.

use serde::Serialize;

use crate::linalg::{dot, DenseMatrix, Matrix};
use crate::opgraph::Graph;
use crate::solvers::{left_vector_near, solve_evp, Evp, Nlbvp, RhsBlock, RhsMap, StateLayout};
use crate::spectral::{Basis, BasisKind, Field};
use crate::{c, Error, Result, C64};

use super::Config;

use std::f64::consts::PI;

#[derive(Clone, Debug, Serialize)]
pub struct FhnParams {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub current: f64,
    pub n_modes: usize,
    pub dealias: f64,
    /// Rough period used only to size the transient of the initial guess.
    pub nominal_period: f64,
    pub guess_periods: usize,
    pub guess_dt: f64,
    pub tolerance: f64,
    pub max_newton: usize,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            a: 0.7,
            b: 0.8,
            eps: 0.08,
            current: 0.8,
            n_modes: 512,
            dealias: 2.0,
            nominal_period: 40.0,
            guess_periods: 10,
            guess_dt: 0.01,
            tolerance: 1e-12,
            max_newton: 30,
        }
    }
}

impl FhnParams {
    pub const KEYS: &'static [&'static str] = &[
        "a",
        "b",
        "eps",
        "current",
        "n_modes",
        "dealias",
        "nominal_period",
        "guess_periods",
        "guess_dt",
        "tolerance",
        "max_newton",
    ];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(Self::KEYS)?;
        let d = Self::default();
        let p = Self {
            a: cfg.finite_f64("a", d.a)?,
            b: cfg.positive_f64("b", d.b)?,
            eps: cfg.positive_f64("eps", d.eps)?,
            current: cfg.finite_f64("current", d.current)?,
            n_modes: cfg.positive_usize("n_modes", d.n_modes)?,
            dealias: cfg.positive_f64("dealias", d.dealias)?,
            nominal_period: cfg.positive_f64("nominal_period", d.nominal_period)?,
            guess_periods: cfg.positive_usize("guess_periods", d.guess_periods)?,
            guess_dt: cfg.positive_f64("guess_dt", d.guess_dt)?,
            tolerance: cfg.positive_f64("tolerance", d.tolerance)?,
            max_newton: cfg.positive_usize("max_newton", d.max_newton)?,
        };
        if p.dealias < 1.0 {
            return Err(Error::Config("dealias must be at least 1".into()));
        }
        if p.n_modes < 8 {
            return Err(Error::Config("n_modes must be at least 8".into()));
        }
        Ok(p)
    }

    pub fn vector_field(&self, x: [f64; 2]) -> [f64; 2] {
        let [u, v] = x;
        [u - u * u * u / 3.0 - v + self.current, self.eps * (u + self.a - self.b * v)]
    }

    fn rk4(&self, x: [f64; 2], h: f64) -> [f64; 2] {
        let add = |x: [f64; 2], k: [f64; 2], s: f64| [x[0] + s * k[0], x[1] + s * k[1]];
        let k1 = self.vector_field(x);
        let k2 = self.vector_field(add(x, k1, h / 2.0));
        let k3 = self.vector_field(add(x, k2, h / 2.0));
        let k4 = self.vector_field(add(x, k3, h));
        [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

/// Orbit sampled over one period by time stepping, starting on the section
/// `u = 0`, `du/dt > 0`.
#[derive(Clone, Debug)]
pub struct SampledOrbit {
    pub period: f64,
    pub samples: Vec<[f64; 2]>,
}

/// Integrate past the transient, estimate the period from successive upward
/// crossings of `u = 0`, then resample one period on `m` equispaced times.
pub fn sample_orbit(p: &FhnParams, m: usize) -> Result<SampledOrbit> {
    let h = p.guess_dt;
    let steps = (p.nominal_period * p.guess_periods as f64 / h).ceil() as usize;
    let mut x = [0.0, 0.0];
    let mut t = 0.0;
    let mut crossings: Vec<(f64, [f64; 2])> = Vec::new();
    for _ in 0..steps {
        let y = p.rk4(x, h);
        if x[0] < 0.0 && y[0] >= 0.0 {
            // cubic Hermite in u over the step, root by Newton
            let (f0, f1) = (p.vector_field(x)[0] * h, p.vector_field(y)[0] * h);
            let (u0, u1) = (x[0], y[0]);
            let herm = |s: f64| {
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * u0 + (s3 - 2.0 * s2 + s) * f0 + (-2.0 * s3 + 3.0 * s2) * u1 + (s3 - s2) * f1
            };
            let dherm = |s: f64| {
                let s2 = s * s;
                (6.0 * s2 - 6.0 * s) * u0 + (3.0 * s2 - 4.0 * s + 1.0) * f0 + (-6.0 * s2 + 6.0 * s) * u1 + (3.0 * s2 - 2.0 * s) * f1
            };
            let mut s = u0 / (u0 - u1);
            for _ in 0..20 {
                s -= herm(s) / dherm(s);
            }
            let xc = p.rk4(x, s * h);
            crossings.push((t + s * h, xc));
        }
        x = y;
        t += h;
    }
    if crossings.len() < 3 {
        return Err(Error::Config(format!("no sustained oscillation after {t} time units")));
    }
    let k = crossings.len();
    let period = crossings[k - 1].0 - crossings[k - 2].0;
    let start = crossings[k - 1].1;
    let sub = ((period / m as f64) / h).ceil().max(1.0) as usize;
    let hs = period / (m * sub) as f64;
    let mut samples = Vec::with_capacity(m);
    let mut y = start;
    for _ in 0..m {
        samples.push(y);
        for _ in 0..sub {
            y = p.rk4(y, hs);
        }
    }
    Ok(SampledOrbit { period, samples })
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRow {
    pub t: f64,
    pub u0: f64,
    pub v0: f64,
    pub z_u: f64,
    pub z_v: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FhnResult {
    pub omega: f64,
    pub period: f64,
    /// Period of the time-stepped guess.
    pub guess_period: f64,
    pub newton_iterations: usize,
    pub residual_history: Vec<f64>,
    pub floquet_eigenvalue: (f64, f64),
    /// `max |Z . dx0/dt - 1|` over the grid.
    pub tendency_error: f64,
    #[serde(skip)]
    pub rows: Vec<PhaseRow>,
}

/// `(coefficients of u, v, omega)` from a sampled orbit.
fn project(basis: &Basis, orbit: &SampledOrbit) -> Result<(Vec<C64>, Vec<C64>, f64)> {
    let u: Vec<C64> = orbit.samples.iter().map(|s| c(s[0])).collect();
    let v: Vec<C64> = orbit.samples.iter().map(|s| c(s[1])).collect();
    Ok((basis.forward(&u)?, basis.forward(&v)?, 2.0 * PI / orbit.period))
}

pub fn run(p: &FhnParams) -> Result<FhnResult> {
    let n = p.n_modes;
    let basis = Basis::new(BasisKind::Fourier, n, (0.0, 2.0 * PI), p.dealias)?;
    let m = basis.grid_size();
    let orbit = sample_orbit(p, m)?;
    let (gu, gv, omega0) = project(&basis, &orbit)?;
    log::info!("initial guess: period {:.6}", orbit.period);

    let mut g = Graph::new();
    let u = g.field_leaf("u", &basis);
    let v = g.field_leaf("v", &basis);
    let om = g.scalar_leaf("omega");
    // u rows: -u + v = -omega u' - u^3 / 3 + I
    let du = g.differentiate(u, 1)?;
    let wdu = g.multiply(om, du)?;
    let u3 = g.power(u, 3)?;
    let u3 = g.scale(u3, c(1.0 / 3.0))?;
    let fu = g.add(wdu, u3)?;
    let fu = g.negate(fu)?;
    let cur = g.constant_field(Field::from_fn(&basis, |_| c(p.current)))?;
    let fu = g.add(fu, cur)?;
    // v rows: -eps u + eps b v = -omega v' + eps a
    let dv = g.differentiate(v, 1)?;
    let wdv = g.multiply(om, dv)?;
    let fv = g.negate(wdv)?;
    let ea = g.constant_field(Field::from_fn(&basis, |_| c(p.eps * p.a)))?;
    let fv = g.add(fv, ea)?;
    // phase row: <guess', u> = 0
    let zero = g.constant_scalar(c(0.0));
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(fu, n), RhsBlock::body(fv, n), RhsBlock::new(vec![zero], None, 1)])?;
    let state = StateLayout::new(&g, &[u, v, om])?;

    let size = 2 * n + 1;
    let mut lhs = DenseMatrix::zeros(size, size);
    for k in 0..n {
        lhs.set(k, k, c(-1.0));
        lhs.set(k, n + k, c(1.0));
        lhs.set(n + k, k, c(-p.eps));
        lhs.set(n + k, n + k, c(p.eps * p.b));
        let dg = C64::new(0.0, basis.angular_wavenumber(k)) * gu[k];
        lhs.set(2 * n, k, dg.conj());
    }
    let mut solver = Nlbvp::new(Matrix::Dense(lhs), g, rhs, state)?;
    solver.tolerance = p.tolerance;
    solver.max_iterations = p.max_newton;
    let mut guess = gu.clone();
    guess.extend_from_slice(&gv);
    guess.push(c(omega0));
    let x = solver.solve(&guess)?;
    let omega = x[2 * n].re;
    log::info!("orbit converged in {} newton steps, omega {omega:.12}", solver.iterations());

    // Floquet problem: (lambda I + omega D - J) q = 0, the state block of the Jacobian
    let h = solver.converged_jacobian()?;
    let mut l = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..2 * n {
        l.row_mut(i).copy_from_slice(&h.row(i)[..2 * n]);
    }
    let evp = Evp { mass: Matrix::identity(2 * n), stiffness: Matrix::Dense(l) };
    let sol = solve_evp(&evp, false)?;
    let idx = sol.nearest(C64::default()).ok_or(Error::NeutralModeNotFound { closest: f64::INFINITY })?;
    let lam = sol.values[idx];
    if lam.norm() > 1e-6 {
        return Err(Error::NeutralModeNotFound { closest: lam.norm() });
    }
    let mut y = left_vector_near(&evp, lam)?;

    // normalize <z, dx0/dt> = 1 with dx0/dt = omega d/dtheta x0
    let xdot: Vec<C64> = (0..2 * n).map(|i| C64::new(0.0, omega * basis.angular_wavenumber(i % n)) * x[i]).collect();
    let s = dot(&y, &xdot);
    y.iter_mut().for_each(|v| *v /= s.conj());

    let grid = |coeffs: &[C64]| basis.backward(coeffs, m);
    let (u0, v0) = (grid(&x[..n])?, grid(&x[n..2 * n])?);
    let (zu, zv) = (grid(&y[..n])?, grid(&y[n..])?);
    let ud = grid(&xdot[..n])?;
    let vd = grid(&xdot[n..])?;
    let mut tendency_error: f64 = 0.0;
    let theta = basis.grid_points();
    let mut rows = Vec::with_capacity(m);
    for j in 0..m {
        let t = zu[j].conj() * ud[j] + zv[j].conj() * vd[j];
        tendency_error = tendency_error.max((t - 1.0).norm());
        rows.push(PhaseRow { t: theta[j] / omega, u0: u0[j].re, v0: v0[j].re, z_u: zu[j].re, z_v: zv[j].re });
    }
    Ok(FhnResult {
        omega,
        period: 2.0 * PI / omega,
        guess_period: orbit.period,
        newton_iterations: solver.iterations(),
        residual_history: solver.history().to_vec(),
        floquet_eigenvalue: (lam.re, lam.im),
        tendency_error,
        rows,
    })
}
