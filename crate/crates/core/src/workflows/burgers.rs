//! Initial-condition recovery for viscous Burgers by adjoint looping.
//!
//! `u_t + u u_x = nu u_xx` on `[0, 2 pi)`. The control is the initial
//! condition; the cost is `J = int (u(T) - u_target)^2 dx` with the target
//! produced by running a known initial condition forward. Descent uses
//! Barzilai-Borwein steps safeguarded by Armijo backtracking.

use std::f64::consts::PI;

use serde::Serialize;

use crate::adjoint::{gradient_ivp, solve_ivp, CheckpointSchedule, Diagnostics, GraphCost, ScheduleKind};
use crate::linalg::{dot, norm, BandedMatrix, Matrix};
use crate::opgraph::Graph;
use crate::solvers::{RhsBlock, RhsMap, StateLayout};
use crate::spectral::{Basis, Field};
use crate::timestep::{Integrator, Ivp, Scheme};
use crate::verify::{default_epsilons, taylor_test, TaylorReport};
use crate::{c, Error, Result, C64};

use super::Config;

#[derive(Clone, Debug, Serialize)]
pub struct BurgersParams {
    pub n_modes: usize,
    pub nu: f64,
    pub t_end: f64,
    pub steps: usize,
    pub scheme: String,
    pub schedule: String,
    /// Amplitude of the smooth perturbation applied to the true initial condition.
    pub perturbation: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub cost_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Run a Taylor test on the first gradient.
    pub taylor_check: bool,
}

impl Default for BurgersParams {
    fn default() -> Self {
        Self {
            n_modes: 64,
            nu: 0.05,
            t_end: 0.5,
            steps: 200,
            scheme: "SBDF2".into(),
            schedule: "binomial:8".into(),
            perturbation: 0.1,
            max_iters: 200,
            grad_tol: 1e-12,
            cost_tol: 1e-10,
            armijo: 1e-4,
            max_backtracks: 30,
            taylor_check: true,
        }
    }
}

impl BurgersParams {
    pub const KEYS: &'static [&'static str] = &[
        "n_modes",
        "nu",
        "t_end",
        "steps",
        "scheme",
        "schedule",
        "perturbation",
        "max_iters",
        "grad_tol",
        "cost_tol",
        "armijo",
        "max_backtracks",
        "taylor_check",
    ];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(Self::KEYS)?;
        let d = Self::default();
        let p = Self {
            n_modes: cfg.positive_usize("n_modes", d.n_modes)?,
            nu: cfg.positive_f64("nu", d.nu)?,
            t_end: cfg.positive_f64("t_end", d.t_end)?,
            steps: cfg.positive_usize("steps", d.steps)?,
            scheme: cfg.get("scheme").unwrap_or(&d.scheme).to_string(),
            schedule: cfg.get("schedule").unwrap_or(&d.schedule).to_string(),
            perturbation: cfg.parse_or("perturbation", d.perturbation)?,
            max_iters: cfg.parse_or("max_iters", d.max_iters)?,
            grad_tol: cfg.positive_f64("grad_tol", d.grad_tol)?,
            cost_tol: cfg.positive_f64("cost_tol", d.cost_tol)?,
            armijo: cfg.positive_f64("armijo", d.armijo)?,
            max_backtracks: cfg.positive_usize("max_backtracks", d.max_backtracks)?,
            taylor_check: cfg.parse_or("taylor_check", d.taylor_check)?,
        };
        if !p.perturbation.is_finite() || p.perturbation < 0.0 {
            return Err(Error::Config("perturbation must be finite and non-negative".into()));
        }
        if p.armijo >= 1.0 {
            return Err(Error::Config("armijo must be below 1".into()));
        }
        p.scheme()?;
        p.schedule_kind()?;
        Ok(p)
    }

    pub fn scheme(&self) -> Result<Scheme> {
        let s: Scheme = self.scheme.parse()?;
        if !matches!(s, Scheme::Sbdf2 | Scheme::Rk443) {
            return Err(Error::Config(format!("scheme must be SBDF2 or RK443, got {s}")));
        }
        Ok(s)
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        self.schedule.parse()
    }
}

/// Known initial condition used to generate the target.
pub fn true_initial(x: f64) -> f64 {
    x.sin() + 0.5 * (2.0 * x).cos()
}

/// Shape of the initial-condition perturbation.
pub fn perturbation_shape(x: f64) -> f64 {
    (x + 0.4).cos() + 0.5 * (3.0 * x).sin()
}

/// Burgers IVP with `M = I`, `L = -nu d_xx` diagonal and
/// `F = -(u^2 / 2)_x`.
pub fn burgers_ivp(basis: &Basis, nu: f64) -> Result<Ivp> {
    let n = basis.n_modes();
    let mut g = Graph::new();
    let u = g.field_leaf("u", basis);
    let u2 = g.power(u, 2)?;
    let du2 = g.differentiate(u2, 1)?;
    let f = g.scale(du2, c(-0.5))?;
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, n)])?;
    let state = StateLayout::new(&g, &[u])?;
    let k2: Vec<C64> = (0..n).map(|i| c(nu * basis.angular_wavenumber(i).powi(2))).collect();
    Ivp::new(Matrix::identity(n), Matrix::Banded(BandedMatrix::from_diagonal(&k2)), g, rhs, state, None)
}

/// Forward and gradient evaluations of the tracking cost.
pub struct BurgersProblem {
    pub basis: Basis,
    integ: Integrator,
    schedule: CheckpointSchedule,
    cost: GraphCost,
    pub target: Vec<C64>,
}

impl BurgersProblem {
    pub fn new(p: &BurgersParams) -> Result<Self> {
        let basis = Basis::fourier(p.n_modes, (0.0, 2.0 * PI))?;
        let scheme = p.scheme()?;
        let dts = vec![p.t_end / p.steps as f64; p.steps];
        let mut integ = Integrator::new(burgers_ivp(&basis, p.nu)?, scheme, dts)?;
        let schedule = CheckpointSchedule::build(p.schedule_kind()?, p.steps)?;
        let u_true = Field::from_fn(&basis, |x| c(true_initial(x))).to_coefficients()?.into_data();
        let target = solve_ivp(&mut integ, u_true, 0.0, &schedule)?.final_state.x().to_vec();
        let cost = tracking_cost(&basis, &target)?;
        Ok(Self { basis, integ, schedule, cost, target })
    }

    pub fn true_initial(&self) -> Result<Vec<C64>> {
        Ok(Field::from_fn(&self.basis, |x| c(true_initial(x))).to_coefficients()?.into_data())
    }

    pub fn perturbed_initial(&self, amplitude: f64) -> Result<Vec<C64>> {
        Ok(Field::from_fn(&self.basis, |x| c(true_initial(x) + amplitude * perturbation_shape(x))).to_coefficients()?.into_data())
    }

    pub fn cost(&mut self, u0: &[C64]) -> Result<f64> {
        let x = solve_ivp(&mut self.integ, u0.to_vec(), 0.0, &self.schedule)?.final_state.x().to_vec();
        use crate::adjoint::Cost;
        Ok(self.cost.evaluate(&x)?.0.re)
    }

    pub fn cost_and_gradient(&mut self, u0: &[C64]) -> Result<(f64, Vec<C64>, Diagnostics)> {
        let g = gradient_ivp(&mut self.integ, u0.to_vec(), 0.0, &self.schedule, &mut self.cost)?;
        Ok((g.value.re, g.initial, g.diagnostics))
    }
}

fn tracking_cost(basis: &Basis, target: &[C64]) -> Result<GraphCost> {
    let mut g = Graph::new();
    let u = g.field_leaf("u", basis);
    let t = g.constant_field(Field::from_coeffs(basis, target.to_vec())?)?;
    let d = g.sub(u, t)?;
    let d2 = g.power(d, 2)?;
    let j = g.integrate(d2)?;
    let layout = StateLayout::new(&g, &[u])?;
    GraphCost::new(g, layout, j)
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldRow {
    pub x: f64,
    pub u0: f64,
    pub u0_true: f64,
    pub u_final: f64,
    pub u_target: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BurgersResult {
    pub outcome: Outcome,
    pub iterations: usize,
    pub final_cost: f64,
    pub trace: Vec<TraceEntry>,
    pub first_taylor: Option<TaylorReport>,
    /// Checkpointing counters summed over every gradient evaluation.
    pub forward_steps: usize,
    pub recomputed_steps: usize,
    pub adjoint_steps: usize,
    pub factorizations: usize,
    pub max_live: usize,
    #[serde(skip)]
    pub control: Vec<C64>,
    #[serde(skip)]
    pub fields: Vec<FieldRow>,
}

impl BurgersResult {
    /// The stall as an error, for callers that have already saved the iterate.
    pub fn stall_error(&self) -> Option<Error> {
        (self.outcome == Outcome::Stalled).then_some(Error::LineSearchStall { cost: self.final_cost })
    }
}

/// Nearest coefficient vector of a real field: conjugate pairs averaged, the
/// mean made real and the Nyquist slot dropped. The descent must stay in this
/// subspace, since the analytic continuation of `J` decreases along imaginary
/// directions and rounding would otherwise seed them.
pub fn real_projection(v: &mut [C64]) {
    let n = v.len();
    v[0] = C64::new(v[0].re, 0.0);
    let mut i = 1;
    while i + 1 < n {
        let m = 0.5 * (v[i] + v[i + 1].conj());
        v[i] = m;
        v[i + 1] = m.conj();
        i += 2;
    }
    if n % 2 == 0 {
        v[n - 1] = C64::default();
    }
}

fn re_dot(a: &[C64], b: &[C64]) -> f64 {
    dot(a, b).re
}

pub fn run(p: &BurgersParams) -> Result<BurgersResult> {
    let mut prob = BurgersProblem::new(p)?;
    let mut x = prob.perturbed_initial(p.perturbation)?;
    real_projection(&mut x);
    let mut totals = Diagnostics::default();
    let mut add = |d: &Diagnostics| {
        totals.forward_steps += d.forward_steps;
        totals.recomputed_steps += d.recomputed_steps;
        totals.adjoint_steps += d.adjoint_steps;
        totals.factorizations += d.factorizations;
        totals.max_live = totals.max_live.max(d.max_live);
    };
    let (mut j, mut g, d) = prob.cost_and_gradient(&x)?;
    real_projection(&mut g);
    add(&d);
    let first_taylor = if p.taylor_check && norm(&g) > 0.0 {
        let dir = Field::from_fn(&prob.basis, |s| c((2.0 * s).sin() + 0.3 * s.cos())).to_coefficients()?.into_data();
        let x0 = x.clone();
        let rep = taylor_test(|q| Ok(c(prob.cost(q)?)), &g, &x0, &dir, &default_epsilons());
        match rep {
            Ok(r) => Some(r),
            Err(Error::InconclusiveTaylorTest) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let mut trace = vec![TraceEntry { iteration: 0, cost: j, grad_norm: norm(&g), step: 0.0, backtracks: 0 }];
    let mut step = 1.0;
    let mut prev: Option<(Vec<C64>, Vec<C64>)> = None;
    let mut outcome = Outcome::MaxIterations;
    let mut it = 0;
    loop {
        let gn = norm(&g);
        if gn <= p.grad_tol || j <= p.cost_tol {
            outcome = Outcome::Converged;
            break;
        }
        if it == p.max_iters {
            break;
        }
        if let Some((px, pg)) = &prev {
            let s: Vec<C64> = x.iter().zip(px).map(|(a, b)| a - b).collect();
            let y: Vec<C64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = re_dot(&s, &y);
            if sy > 0.0 {
                step = re_dot(&s, &s) / sy;
            }
        }
        let mut accepted = None;
        let mut alpha = step;
        for bt in 0..=p.max_backtracks {
            let trial: Vec<C64> = x.iter().zip(&g).map(|(a, b)| a - b * alpha).collect();
            let jt = prob.cost(&trial)?;
            if jt <= j - p.armijo * alpha * gn * gn {
                accepted = Some((trial, bt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, backtracks)) = accepted else {
            log::warn!("line search stalled at iteration {it}, J = {j:e}");
            outcome = Outcome::Stalled;
            break;
        };
        it += 1;
        let (jn, mut gnew, d) = prob.cost_and_gradient(&trial)?;
        real_projection(&mut gnew);
        add(&d);
        prev = Some((std::mem::replace(&mut x, trial), std::mem::replace(&mut g, gnew)));
        j = jn;
        step = alpha;
        log::info!("iteration {it}: J = {j:.6e}, step {alpha:.3e}, {backtracks} backtracks");
        trace.push(TraceEntry { iteration: it, cost: j, grad_norm: norm(&g), step: alpha, backtracks });
    }

    let m = prob.basis.grid_size();
    let xs = prob.basis.grid_points();
    let fin = solve_ivp(&mut prob.integ, x.clone(), 0.0, &prob.schedule)?.final_state.x().to_vec();
    let (u0, ut, uf, tg) = (
        prob.basis.backward(&x, m)?,
        prob.basis.backward(&prob.true_initial()?, m)?,
        prob.basis.backward(&fin, m)?,
        prob.basis.backward(&prob.target, m)?,
    );
    let fields = (0..m)
        .map(|k| FieldRow { x: xs[k], u0: u0[k].re, u0_true: ut[k].re, u_final: uf[k].re, u_target: tg[k].re })
        .collect();
    Ok(BurgersResult {
        outcome,
        iterations: it,
        final_cost: j,
        trace,
        first_taylor,
        forward_steps: totals.forward_steps,
        recomputed_steps: totals.recomputed_steps,
        adjoint_steps: totals.adjoint_steps,
        factorizations: totals.factorizations,
        max_live: totals.max_live,
        control: x,
        fields,
    })
}
