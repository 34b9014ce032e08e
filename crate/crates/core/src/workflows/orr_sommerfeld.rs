//! Neutral stability curve of plane Poiseuille flow from the Orr-Sommerfeld
//! equation, traced with adjoint eigenvalue sensitivities.
//!
//! For `v(y) exp(i alpha x + lambda t)` on `y in [-1, 1]` with `U = 1 - y^2`:
//! `lambda (D^2 - a^2) v = (1/Re)(D^2 - a^2)^2 v - i a U (D^2 - a^2) v + i a U'' v`,
//! `v = v' = 0` at both walls. In pencil form `(lambda M + L) v = 0`.

use serde::Serialize;

use crate::linalg::{BandedMatrix, Matrix};
use crate::solvers::{eigenvalue_sensitivity, left_vector_near, solve_evp, tau_matrix, Evp};
use crate::spectral::{boundary_row, conversion_operator, differentiation_operator, multiplication_operator, Basis, Endpoint};
use crate::{c, Error, Result, C64};

use super::Config;

/// Alpha-independent pieces, all mapping Chebyshev-T coefficients to `C^(4)`.
#[derive(Clone, Debug)]
pub struct OsOperators {
    pub n: usize,
    d4: BandedMatrix,
    d2: BandedMatrix,
    s04: BandedMatrix,
    u_mult: BandedMatrix,
    bc: Vec<Vec<C64>>,
}

fn lc(terms: &[(C64, &BandedMatrix)]) -> BandedMatrix {
    let mut acc = terms[0].1.scaled(terms[0].0);
    for (s, m) in &terms[1..] {
        acc = BandedMatrix::lincomb(c(1.0), &acc, *s, m).expect("same shape");
    }
    acc
}

impl OsOperators {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::Config("orr-sommerfeld needs at least 8 modes".into()));
        }
        let basis = Basis::chebyshev(n, (-1.0, 1.0))?;
        let d4 = differentiation_operator(&basis, 4).matrix;
        let d2 = conversion_operator(&basis, 2, 4)?.compose(&differentiation_operator(&basis, 2))?.matrix;
        let s04 = conversion_operator(&basis, 0, 4)?.matrix;
        // U = 1 - y^2 = T0/2 - T2/2
        let u_mult = multiplication_operator(&basis, 4, &[c(0.5), c(0.0), c(-0.5)])?.matrix;
        let mut bc = Vec::new();
        for order in [0, 1] {
            for end in [Endpoint::Left, Endpoint::Right] {
                bc.push(boundary_row(&basis, end, order)?);
            }
        }
        Ok(Self { n, d4, d2, s04, u_mult, bc })
    }

    fn tau(&self, interior: &BandedMatrix, with_bc: bool) -> Result<Matrix> {
        let rows: Vec<Vec<C64>> = if with_bc { self.bc.clone() } else { vec![vec![C64::default(); self.n]; 4] };
        tau_matrix(&rows, interior)
    }

    /// `D^2 - a^2`.
    fn helmholtz(&self, alpha: f64) -> BandedMatrix {
        lc(&[(c(1.0), &self.d2), (c(-alpha * alpha), &self.s04)])
    }

    /// `(D^2 - a^2)^2`.
    fn biharmonic(&self, alpha: f64) -> BandedMatrix {
        let a2 = alpha * alpha;
        lc(&[(c(1.0), &self.d4), (c(-2.0 * a2), &self.d2), (c(a2 * a2), &self.s04)])
    }

    pub fn pencil(&self, alpha: f64, re: f64) -> Result<Evp> {
        let h = self.helmholtz(alpha);
        let uh = self.u_mult.matmul(&h)?;
        let i = C64::new(0.0, 1.0);
        // U'' = -2
        let l = lc(&[(c(-1.0 / re), &self.biharmonic(alpha)), (i * alpha, &uh), (i * (2.0 * alpha), &self.s04)]);
        Ok(Evp { mass: self.tau(&h, false)?, stiffness: self.tau(&l, true)? })
    }

    /// `dL/dRe`.
    pub fn dl_dre(&self, alpha: f64, re: f64) -> Result<Matrix> {
        self.tau(&self.biharmonic(alpha).scaled(c(1.0 / (re * re))), false)
    }

    /// `(dM/dalpha, dL/dalpha)`.
    pub fn d_dalpha(&self, alpha: f64, re: f64) -> Result<(Matrix, Matrix)> {
        let a2 = alpha * alpha;
        let i = C64::new(0.0, 1.0);
        let dm = self.s04.scaled(c(-2.0 * alpha));
        let u3 = self.u_mult.matmul(&lc(&[(c(1.0), &self.d2), (c(-3.0 * a2), &self.s04)]))?;
        let dl = lc(&[
            (c(4.0 * alpha / re), &self.d2),
            (c(-4.0 * alpha * a2 / re), &self.s04),
            (i, &u3),
            (i * 2.0, &self.s04),
        ]);
        Ok((self.tau(&dm, false)?, self.tau(&dl, false)?))
    }
}

/// Leading eigenvalue (largest growth rate) and its right vector.
pub fn leading_mode(ops: &OsOperators, alpha: f64, re: f64) -> Result<(C64, Vec<C64>, Evp)> {
    let evp = ops.pencil(alpha, re)?;
    let sol = solve_evp(&evp, false)?;
    let lam = *sol.values.first().ok_or(Error::NeutralModeNotFound { closest: f64::INFINITY })?;
    let x = sol.right.into_iter().next().unwrap();
    Ok((lam, x, evp))
}

/// Growth rate `max Re(lambda)`; eigenvalues only.
pub fn growth_rate(ops: &OsOperators, alpha: f64, re: f64) -> Result<f64> {
    Ok(leading_mode(ops, alpha, re)?.0.re)
}

/// Growth rate and its gradient with respect to `(alpha, ln Re)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sensitivity {
    pub eigenvalue_re: f64,
    pub eigenvalue_im: f64,
    pub dgamma_dalpha: f64,
    pub dgamma_dlnre: f64,
}

impl Sensitivity {
    pub fn gamma(&self) -> f64 {
        self.eigenvalue_re
    }
}

pub fn sensitivity(ops: &OsOperators, alpha: f64, re: f64) -> Result<Sensitivity> {
    let (lam, x, evp) = leading_mode(ops, alpha, re)?;
    let y = left_vector_near(&evp, lam)?;
    let dre = eigenvalue_sensitivity(&evp, lam, &x, &y, None, Some(&ops.dl_dre(alpha, re)?))?;
    let (dm, dl) = ops.d_dalpha(alpha, re)?;
    let da = eigenvalue_sensitivity(&evp, lam, &x, &y, Some(&dm), Some(&dl))?;
    Ok(Sensitivity { eigenvalue_re: lam.re, eigenvalue_im: lam.im, dgamma_dalpha: da.re, dgamma_dlnre: re * dre.re })
}

#[derive(Clone, Debug, Serialize)]
pub struct NeutralCurveParams {
    pub n_modes: usize,
    pub alpha_start: f64,
    pub re_guess: f64,
    pub points: usize,
    /// Arc-length step in `(alpha, ln Re)`.
    pub step: f64,
    pub growth_tol: f64,
    pub max_newton: usize,
}

impl Default for NeutralCurveParams {
    fn default() -> Self {
        Self { n_modes: 128, alpha_start: 0.9, re_guess: 8000.0, points: 30, step: 0.04, growth_tol: 1e-10, max_newton: 20 }
    }
}

impl NeutralCurveParams {
    pub const KEYS: &'static [&'static str] = &["n_modes", "alpha_start", "re_guess", "points", "step", "growth_tol", "max_newton"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(Self::KEYS)?;
        let d = Self::default();
        let p = Self {
            n_modes: cfg.positive_usize("n_modes", d.n_modes)?,
            alpha_start: cfg.positive_f64("alpha_start", d.alpha_start)?,
            re_guess: cfg.positive_f64("re_guess", d.re_guess)?,
            points: cfg.positive_usize("points", d.points)?,
            step: cfg.positive_f64("step", d.step)?,
            growth_tol: cfg.positive_f64("growth_tol", d.growth_tol)?,
            max_newton: cfg.positive_usize("max_newton", d.max_newton)?,
        };
        if p.n_modes < 8 {
            return Err(Error::Config("n_modes must be at least 8".into()));
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NeutralPoint {
    pub alpha: f64,
    pub re: f64,
    pub growth_rate: f64,
    pub frequency: f64,
    /// Unit tangent of the curve in `(alpha, ln Re)`.
    pub tangent_alpha: f64,
    pub tangent_lnre: f64,
    /// Eigensolves spent by the corrector for this point.
    pub eigensolves: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeutralCurve {
    pub points: Vec<NeutralPoint>,
    /// Point of minimum Reynolds number, if the traced arc passes it.
    pub minimum: Option<NeutralPoint>,
    pub total_eigensolves: usize,
    /// Continuation steps rejected (corrector failure or a fold jump) and retried shorter.
    pub rejected_steps: usize,
}

/// Newton in Re at fixed alpha. Returns the converged point's sensitivity and
/// the eigensolves used.
pub fn newton_in_re(ops: &OsOperators, alpha: f64, re0: f64, tol: f64, max_iter: usize) -> Result<(f64, Sensitivity, usize)> {
    let mut lnre = re0.ln();
    let mut hist = Vec::new();
    for it in 0..=max_iter {
        let s = sensitivity(ops, alpha, lnre.exp())?;
        hist.push(s.gamma().abs());
        if s.gamma().abs() <= tol {
            return Ok((lnre.exp(), s, it + 1));
        }
        if s.dgamma_dlnre == 0.0 {
            break;
        }
        lnre -= s.gamma() / s.dgamma_dlnre;
    }
    Err(Error::NonConvergence { iterations: hist.len(), history: hist })
}

/// Minimum-norm Newton correction of `gamma(alpha, ln Re) = 0` from `(a, l)`.
fn project(ops: &OsOperators, mut a: f64, mut l: f64, tol: f64, max_iter: usize) -> Result<(f64, f64, Sensitivity, usize)> {
    let mut hist = Vec::new();
    for it in 0..=max_iter {
        let s = sensitivity(ops, a, l.exp())?;
        hist.push(s.gamma().abs());
        if s.gamma().abs() <= tol {
            return Ok((a, l, s, it + 1));
        }
        let g2 = s.dgamma_dalpha.powi(2) + s.dgamma_dlnre.powi(2);
        a -= s.gamma() * s.dgamma_dalpha / g2;
        l -= s.gamma() * s.dgamma_dlnre / g2;
    }
    Err(Error::NonConvergence { iterations: hist.len(), history: hist })
}

/// Cosine of the largest tangent turn accepted in one continuation step.
const MAX_TURN_COS: f64 = 0.95;

fn tangent(s: &Sensitivity) -> (f64, f64) {
    let g = (s.dgamma_dalpha.powi(2) + s.dgamma_dlnre.powi(2)).sqrt();
    (-s.dgamma_dlnre / g, s.dgamma_dalpha / g)
}

fn point(alpha: f64, re: f64, s: &Sensitivity, dir: (f64, f64), eigensolves: usize) -> NeutralPoint {
    NeutralPoint {
        alpha,
        re,
        growth_rate: s.gamma(),
        frequency: s.eigenvalue_im,
        tangent_alpha: dir.0,
        tangent_lnre: dir.1,
        eigensolves,
    }
}

/// Trace `points` neutral points starting on the lower branch at
/// `alpha_start`, heading towards lower Re, then locate the minimum Re point
/// by a secant iteration on `dgamma/dalpha`.
pub fn trace_neutral_curve(p: &NeutralCurveParams) -> Result<NeutralCurve> {
    let ops = OsOperators::new(p.n_modes)?;
    let (re, s, mut total) = newton_in_re(&ops, p.alpha_start, p.re_guess, p.growth_tol, p.max_newton)?;
    let mut dir = tangent(&s);
    if dir.1 > 0.0 {
        dir = (-dir.0, -dir.1);
    }
    let mut pts = vec![point(p.alpha_start, re, &s, dir, total)];
    let mut sens = vec![s];
    let (mut a, mut l) = (p.alpha_start, re.ln());
    let mut h = p.step;
    let mut rejected = 0;
    while pts.len() < p.points {
        let (pa, pl) = (a + h * dir.0, l + h * dir.1);
        let attempt = project(&ops, pa, pl, p.growth_tol, p.max_newton);
        let accepted = match attempt {
            Ok((na, nl, ns, used)) => {
                total += used;
                let mut nd = tangent(&ns);
                if nd.0 * dir.0 + nd.1 * dir.1 < 0.0 {
                    nd = (-nd.0, -nd.1);
                }
                // a sharp turn means the step jumped across a fold of the curve
                if nd.0 * dir.0 + nd.1 * dir.1 >= MAX_TURN_COS {
                    pts.push(point(na, nl.exp(), &ns, nd, used));
                    sens.push(ns);
                    a = na;
                    l = nl;
                    dir = nd;
                    true
                } else {
                    false
                }
            }
            Err(Error::NonConvergence { iterations, history }) => {
                log::warn!(
                    "corrector failed after {iterations} iterations (last |gamma| {:e}); halving step",
                    history.last().copied().unwrap_or(f64::NAN)
                );
                false
            }
            Err(e) => return Err(e),
        };
        if accepted {
            h = (h * 1.5).min(p.step);
        } else {
            rejected += 1;
            h *= 0.5;
            if h < p.step * 1e-4 {
                return Err(Error::NonConvergence { iterations: pts.len(), history: vec![h] });
            }
        }
    }
    // the Re minimum is where the tangent is parallel to the alpha axis,
    // i.e. dgamma/dalpha changes sign
    let mut minimum = None;
    for k in 1..pts.len() {
        let (g0, g1) = (sens[k - 1].dgamma_dalpha, sens[k].dgamma_dalpha);
        if g0 * g1 <= 0.0 {
            let (m, used) = minimum_re(&ops, (pts[k - 1].alpha, g0, pts[k - 1].re), (pts[k].alpha, g1, pts[k].re), p)?;
            total += used;
            minimum = Some(m);
            break;
        }
    }
    Ok(NeutralCurve { points: pts, minimum, total_eigensolves: total, rejected_steps: rejected })
}

/// Secant on `alpha -> dgamma/dalpha` along the curve, each iterate placed on
/// the curve by Newton in Re.
fn minimum_re(ops: &OsOperators, lo: (f64, f64, f64), hi: (f64, f64, f64), p: &NeutralCurveParams) -> Result<(NeutralPoint, usize)> {
    let (mut a0, mut g0, mut re0) = lo;
    let (mut a1, mut g1, mut re1) = hi;
    let mut used = 0;
    for _ in 0..30 {
        let a2 = if g1 != g0 { a1 - g1 * (a1 - a0) / (g1 - g0) } else { 0.5 * (a0 + a1) };
        let guess = if (a2 - a1).abs() < (a2 - a0).abs() { re1 } else { re0 };
        let (re2, s, k) = newton_in_re(ops, a2, guess, p.growth_tol, p.max_newton)?;
        used += k;
        if (a2 - a1).abs() <= 1e-10 || s.dgamma_dalpha.abs() <= 1e-12 {
            let dir = tangent(&s);
            return Ok((point(a2, re2, &s, dir, k), used));
        }
        (a0, g0, re0) = (a1, g1, re1);
        (a1, g1, re1) = (a2, s.dgamma_dalpha, re2);
    }
    Err(Error::NonConvergence { iterations: 30, history: vec![g1.abs()] })
}
