//! Gradient checks: Taylor remainders, inner-product tests and central differences.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{dot, norm};
use crate::{Error, Result, C64};

/// Accepted range for the fitted Taylor slope.
pub const TAYLOR_SLOPE_RANGE: (f64, f64) = (1.85, 2.15);

/// `1e-1 * 2^-j`, `j = 0..=9`.
pub fn default_epsilons() -> Vec<f64> {
    (0..10).map(|j| 0.1 * 0.5f64.powi(j)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorReport {
    pub epsilons: Vec<f64>,
    pub remainders: Vec<f64>,
    /// Points above the roundoff floor, used in the fit.
    pub used: Vec<bool>,
    pub slope: f64,
}

impl TaylorReport {
    pub fn passed(&self) -> bool {
        (TAYLOR_SLOPE_RANGE.0..=TAYLOR_SLOPE_RANGE.1).contains(&self.slope)
    }

    /// Rows `epsilon,remainder,used`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            epsilon: f64,
            remainder: f64,
            used: bool,
        }
        let mut wr = csv::Writer::from_writer(w);
        for i in 0..self.epsilons.len() {
            wr.serialize(Row { epsilon: self.epsilons[i], remainder: self.remainders[i], used: self.used[i] })?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `log r` against `log eps`.
pub fn fit_slope(eps: &[f64], r: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Remainders `|J(p + eps d) - J(p) - eps <Y, d>|` and their fitted decay
/// rate. Points within `1e2 * machine eps * |J|` of zero are left out of the fit.
pub fn taylor_test(
    mut eval: impl FnMut(&[C64]) -> Result<C64>,
    gradient: &[C64],
    p: &[C64],
    direction: &[C64],
    epsilons: &[f64],
) -> Result<TaylorReport> {
    if gradient.len() != p.len() || direction.len() != p.len() {
        return Err(Error::contract("taylor test: gradient, point and direction lengths differ"));
    }
    if norm(direction) == 0.0 {
        return Err(Error::contract("taylor test: zero direction"));
    }
    if epsilons.len() < 4 || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::contract("taylor test: need at least 4 positive step sizes"));
    }
    let (lo, hi) = epsilons.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if hi / lo < 100.0 {
        return Err(Error::contract("taylor test: step sizes must span two decades"));
    }
    let j0 = eval(p)?;
    let slope_term = dot(gradient, direction);
    let mut remainders = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        let q: Vec<C64> = p.iter().zip(direction).map(|(a, d)| a + d * e).collect();
        remainders.push((eval(&q)? - j0 - slope_term * e).norm());
    }
    let floor = 1e2 * f64::EPSILON * j0.norm().max(f64::MIN_POSITIVE);
    let used: Vec<bool> = remainders.iter().map(|&r| r > floor).collect();
    let (fe, fr): (Vec<f64>, Vec<f64>) = epsilons.iter().zip(&remainders).zip(&used).filter(|(_, &u)| u).map(|((e, r), _)| (*e, *r)).unzip();
    if fe.len() < 2 {
        return Err(Error::InconclusiveTaylorTest);
    }
    Ok(TaylorReport { epsilons: epsilons.to_vec(), remainders, used, slope: fit_slope(&fe, &fr) })
}

/// Central difference `(J(p + eps d) - J(p - eps d)) / (2 eps)`.
pub fn fd_gradient(mut eval: impl FnMut(&[C64]) -> Result<C64>, p: &[C64], direction: &[C64], eps: f64) -> Result<C64> {
    if !(eps > 0.0) {
        return Err(Error::contract("finite difference: eps must be positive"));
    }
    let shift = |s: f64| p.iter().zip(direction).map(|(a, d)| a + d * s).collect::<Vec<C64>>();
    Ok((eval(&shift(eps))? - eval(&shift(-eps))?) / (2.0 * eps))
}

/// Largest `|<y, A x> - <A^H y, x>| / (|y| |A x|)` over `trials` random
/// complex pairs.
pub fn dot_test(
    mut apply: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    mut apply_adjoint: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    n_in: usize,
    n_out: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect::<Vec<C64>>();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = draw(n_in);
        let y = draw(n_out);
        let ax = apply(&x)?;
        let aty = apply_adjoint(&y)?;
        if ax.len() != n_out || aty.len() != n_in {
            return Err(Error::contract("dot test: operator output has the wrong length"));
        }
        let scale = norm(&y) * norm(&ax);
        let err = (dot(&y, &ax) - dot(&aty, &x)).norm();
        worst = worst.max(if scale > 0.0 { err / scale } else { err });
    }
    Ok(worst)
}
