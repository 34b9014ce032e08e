//! Resolvent of a 1D advection-diffusion operator.
//!
//! `(i omega + U(x) d/dx - nu d^2/dx^2) q = f` on `[-1, 1]`, `q(+-1) = 0`,
//! `U = u_max (1 - x^2)`. The transfer function `H: f -> q` is applied by a
//! linear boundary value solve and `H^H` by its adjoint. Singular values are
//! taken in the quadrature-weighted L2 norm on the collocation grid,
//! `H_M = W^1/2 B H T W^-1/2` with `T` the grid-to-coefficient transform and
//! `B` its inverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{dot, norm, BandedMatrix, Matrix};
use crate::opgraph::{Graph, NodeId};
use crate::solvers::{tau_matrix, Lbvp, RhsBlock, RhsMap};
use crate::spectral::{
    boundary_row, conversion_operator, differentiation_operator, multiplication_operator, quadrature_weights, Basis, BasisKind,
    Endpoint,
};
use crate::{c, Error, Result, C64};

use super::Config;

#[derive(Clone, Debug, Serialize)]
pub struct ResolventParams {
    pub n_modes: usize,
    pub nu: f64,
    pub u_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_count: usize,
    /// Relative residual of the power iteration eigen-equation.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ResolventParams {
    fn default() -> Self {
        Self {
            n_modes: 128,
            nu: 0.05,
            u_max: 1.0,
            omega_min: -2.0,
            omega_max: 2.0,
            omega_count: 21,
            tolerance: 1e-10,
            max_iterations: 500,
            seed: 7,
        }
    }
}

impl ResolventParams {
    pub const KEYS: &'static [&'static str] =
        &["n_modes", "nu", "u_max", "omega_min", "omega_max", "omega_count", "tolerance", "max_iterations", "seed"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(Self::KEYS)?;
        let d = Self::default();
        let p = Self {
            n_modes: cfg.positive_usize("n_modes", d.n_modes)?,
            nu: cfg.positive_f64("nu", d.nu)?,
            u_max: cfg.finite_f64("u_max", d.u_max)?,
            omega_min: cfg.finite_f64("omega_min", d.omega_min)?,
            omega_max: cfg.finite_f64("omega_max", d.omega_max)?,
            omega_count: cfg.positive_usize("omega_count", d.omega_count)?,
            tolerance: cfg.positive_f64("tolerance", d.tolerance)?,
            max_iterations: cfg.positive_usize("max_iterations", d.max_iterations)?,
            seed: cfg.parse_or("seed", d.seed)?,
        };
        if p.n_modes < 4 {
            return Err(Error::Config("n_modes must be at least 4".into()));
        }
        if p.omega_max < p.omega_min {
            return Err(Error::Config("omega_max must not be below omega_min".into()));
        }
        Ok(p)
    }

    pub fn omegas(&self) -> Vec<f64> {
        if self.omega_count == 1 {
            return vec![self.omega_min];
        }
        (0..self.omega_count)
            .map(|k| self.omega_min + (self.omega_max - self.omega_min) * k as f64 / (self.omega_count - 1) as f64)
            .collect()
    }
}

/// Weighted transfer function and its adjoint at one frequency.
#[derive(Debug)]
pub struct Resolvent {
    basis: Basis,
    lbvp: Lbvp,
    forcing: NodeId,
    sqrt_w: Vec<f64>,
    interior_static: BandedMatrix,
    conv: BandedMatrix,
    bc: Vec<Vec<C64>>,
    fault: bool,
}

impl Resolvent {
    pub fn new(p: &ResolventParams, omega: f64) -> Result<Self> {
        let basis = Basis::new(BasisKind::Chebyshev, p.n_modes, (-1.0, 1.0), 1.0)?;
        let d2 = differentiation_operator(&basis, 2).matrix;
        let d1 = conversion_operator(&basis, 1, 2)?.compose(&differentiation_operator(&basis, 1))?.matrix;
        // U = u_max (T0 - T2) / 2
        let um = multiplication_operator(&basis, 2, &[c(0.5 * p.u_max), c(0.0), c(-0.5 * p.u_max)])?.matrix;
        let adv = um.matmul(&d1)?;
        let interior_static = BandedMatrix::lincomb(c(1.0), &adv, c(-p.nu), &d2)?;
        let conv = conversion_operator(&basis, 0, 2)?.matrix;
        let bc = vec![boundary_row(&basis, Endpoint::Left, 0)?, boundary_row(&basis, Endpoint::Right, 0)?];

        let mut g = Graph::new();
        let forcing = g.field_leaf("forcing", &basis);
        g.bind_coeffs(forcing, &vec![C64::default(); p.n_modes])?;
        let body = g.convert(forcing, 2)?;
        let z0 = g.constant_scalar(c(0.0));
        let z1 = g.constant_scalar(c(0.0));
        let rhs = RhsMap::new(&g, vec![RhsBlock::new(vec![z0, z1], Some(body), p.n_modes)])?;
        let n = p.n_modes;
        let lbvp = Lbvp::new(Matrix::identity(n), g, rhs)?;
        let sqrt_w = quadrature_weights(&basis).into_iter().map(f64::sqrt).collect();
        let mut r = Self { basis, lbvp, forcing, sqrt_w, interior_static, conv, bc, fault: false };
        r.set_omega(omega)?;
        Ok(r)
    }

    /// Rebuild and refactor the operator for a new frequency.
    pub fn set_omega(&mut self, omega: f64) -> Result<()> {
        let interior = BandedMatrix::lincomb(C64::new(0.0, omega), &self.conv, c(1.0), &self.interior_static)?;
        self.lbvp.set_lhs(tau_matrix(&self.bc, &interior)?)?;
        // one solve records the (linear) tape used by every later adjoint
        let n = self.basis.n_modes();
        self.lbvp.graph.bind_coeffs(self.forcing, &vec![C64::default(); n])?;
        self.lbvp.solve()?;
        Ok(())
    }

    /// Test fixture: flip the sign of the adjoint grid transform.
    pub fn with_transform_fault(mut self) -> Self {
        self.fault = true;
        self
    }

    pub fn size(&self) -> usize {
        self.sqrt_w.len()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_w
    }

    /// Unweighted `H` on Chebyshev coefficients.
    pub fn apply_coeffs(&mut self, f: &[C64]) -> Result<Vec<C64>> {
        self.lbvp.graph.bind_coeffs(self.forcing, f)?;
        self.lbvp.solve()
    }

    /// `H_M g`.
    pub fn apply(&mut self, g: &[C64]) -> Result<Vec<C64>> {
        let m = self.size();
        let fg: Vec<C64> = g.iter().zip(&self.sqrt_w).map(|(v, s)| v / *s).collect();
        let q = self.apply_coeffs(&self.basis.forward(&fg)?)?;
        let qg = self.basis.backward(&q, m)?;
        Ok(qg.iter().zip(&self.sqrt_w).map(|(v, s)| v * *s).collect())
    }

    /// `H_M^H r`.
    pub fn apply_adjoint(&self, r: &[C64]) -> Result<Vec<C64>> {
        let m = self.size();
        let rw: Vec<C64> = r.iter().zip(&self.sqrt_w).map(|(v, s)| v * *s).collect();
        let cot = self.basis.backward_adjoint(&rw)?;
        let leaves = self.lbvp.vjp(&cot)?;
        let fc = leaves.coeffs(self.forcing).ok_or_else(|| Error::contract("resolvent: no forcing cotangent"))?;
        let mut fg = self.basis.forward_adjoint(fc, m)?;
        if self.fault {
            fg.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(fg.iter().zip(&self.sqrt_w).map(|(v, s)| v / *s).collect())
    }
}

/// Leading singular triplet by power iteration on `H_M^H H_M`, orthogonal to
/// the right vectors in `deflate`.
#[derive(Clone, Debug)]
pub struct SingularTriplet {
    pub sigma: f64,
    /// Unit right vector (weighted forcing on the grid).
    pub right: Vec<C64>,
    /// Unit left vector (weighted response on the grid).
    pub left: Vec<C64>,
    pub iterations: usize,
}

fn orthogonalize(v: &mut [C64], against: &[Vec<C64>]) {
    for a in against {
        let p = dot(a, v);
        v.iter_mut().zip(a).for_each(|(x, y)| *x -= p * y);
    }
}

pub fn power_iteration(
    h: &mut Resolvent,
    deflate: &[Vec<C64>],
    tolerance: f64,
    max_iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SingularTriplet> {
    let m = h.size();
    let mut v: Vec<C64> = (0..m).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    orthogonalize(&mut v, deflate);
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut resid = f64::INFINITY;
    for it in 1..=max_iterations {
        let hv = h.apply(&v)?;
        let mut w = h.apply_adjoint(&hv)?;
        orthogonalize(&mut w, deflate);
        let s2 = dot(&v, &w).re;
        resid = w.iter().zip(&v).map(|(a, b)| (a - b * s2).norm_sqr()).sum::<f64>().sqrt() / s2;
        let wn = norm(&w);
        v = w.into_iter().map(|x| x / wn).collect();
        if resid <= tolerance {
            let hv = h.apply(&v)?;
            let sigma = norm(&hv);
            return Ok(SingularTriplet { sigma, left: hv.iter().map(|x| x / sigma).collect(), right: v, iterations: it });
        }
    }
    Err(Error::ToleranceNotMet { what: "power iteration residual".into(), value: resid, tolerance })
}

#[derive(Clone, Debug, Serialize)]
pub struct GainRow {
    pub omega: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub iterations1: usize,
    pub iterations2: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub x: f64,
    pub forcing_re: f64,
    pub forcing_im: f64,
    pub response_re: f64,
    pub response_im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolventResult {
    pub gains: Vec<GainRow>,
    /// Frequency of the largest gain, whose optimal pair is in `profiles`.
    pub peak_omega: f64,
    #[serde(skip)]
    pub profiles: Vec<ProfileRow>,
}

pub fn run(p: &ResolventParams) -> Result<ResolventResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let omegas = p.omegas();
    let mut h = Resolvent::new(p, omegas[0])?;
    let mut gains = Vec::with_capacity(omegas.len());
    let mut best: Option<(f64, SingularTriplet)> = None;
    for &om in &omegas {
        h.set_omega(om)?;
        let t1 = power_iteration(&mut h, &[], p.tolerance, p.max_iterations, &mut rng)?;
        let t2 = power_iteration(&mut h, &[t1.right.clone()], p.tolerance, p.max_iterations, &mut rng)?;
        log::info!("omega {om:.4}: sigma1 {:.6e} ({} its), sigma2 {:.6e} ({} its)", t1.sigma, t1.iterations, t2.sigma, t2.iterations);
        gains.push(GainRow { omega: om, sigma1: t1.sigma, sigma2: t2.sigma, iterations1: t1.iterations, iterations2: t2.iterations });
        if best.as_ref().is_none_or(|(_, b)| t1.sigma > b.sigma) {
            best = Some((om, t1));
        }
    }
    let (peak_omega, t) = best.expect("at least one frequency");
    let x = h.basis().grid_points();
    let sw = h.sqrt_weights();
    let profiles = (0..x.len())
        .map(|j| {
            let f = t.right[j] / sw[j];
            let q = t.left[j] / sw[j];
            ProfileRow { x: x[j], forcing_re: f.re, forcing_im: f.im, response_re: q.re, response_im: q.im }
        })
        .collect();
    Ok(ResolventResult { gains, peak_omega, profiles })
}
