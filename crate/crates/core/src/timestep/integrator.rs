use std::collections::VecDeque;

use super::{multistep_coefficients, FactorCache, Ivp, MultistepCoefficients, ParamCotangents, RkTableau, Scheme};
use crate::linalg::Mode;
use crate::opgraph::{Graph, Tape};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
struct Past {
    t: f64,
    x: Vec<C64>,
    f: Option<Vec<C64>>,
}

/// Everything needed to take the next step: the current state plus, for
/// multistep schemes, the window of earlier states and their right-hand sides.
#[derive(Clone, Debug, PartialEq)]
pub struct StepState {
    n: usize,
    history: Vec<Past>,
}

impl StepState {
    /// Step index of the current state.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> f64 {
        self.history[0].t
    }

    pub fn x(&self) -> &[C64] {
        &self.history[0].x
    }
}

/// Reverse-pass state. After processing state `n`, `xbar` is the complete
/// cotangent of `X_n`; at `n = 0` it is the gradient with respect to `X_0`.
#[derive(Clone, Debug)]
pub struct AdjointState {
    n: usize,
    xbar: Vec<C64>,
    /// Multistep adjoint variables `Y_{n+1}, Y_{n+2}, ...`.
    y: VecDeque<Vec<C64>>,
    pub params: ParamCotangents,
}

impl AdjointState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xbar(&self) -> &[C64] {
        &self.xbar
    }
}

fn axpy(acc: &mut [C64], s: f64, x: &[C64]) {
    if s != 0.0 {
        acc.iter_mut().zip(x).for_each(|(a, b)| *a += b * s);
    }
}

fn sub_assign(acc: &mut [C64], x: &[C64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a -= b);
}

fn is_zero(v: &[C64]) -> bool {
    v.iter().all(|z| *z == C64::default())
}

/// Fixed-schedule integrator over a prescribed timestep sequence.
#[derive(Debug)]
pub struct Integrator {
    pub ivp: Ivp,
    scheme: Scheme,
    dts: Vec<f64>,
    rows: Vec<MultistepCoefficients>,
    tableau: Option<RkTableau>,
    cache: FactorCache,
    /// One graph copy per Runge-Kutta stage so stage tapes stay valid
    /// through the reverse step; refreshed by `adjoint_seed`.
    stage_graphs: Vec<Graph>,
}

impl Integrator {
    pub fn new(ivp: Ivp, scheme: Scheme, dts: Vec<f64>) -> Result<Self> {
        if dts.is_empty() {
            return Err(Error::contract("integrator: need at least one step"));
        }
        if dts.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::contract("integrator: timesteps must be positive"));
        }
        let rows = if scheme.is_multistep() {
            (1..=dts.len()).map(|n| multistep_coefficients(scheme, &dts[..n])).collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { ivp, scheme, dts, rows, tableau: scheme.tableau(), cache: FactorCache::new(), stage_graphs: Vec::new() })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn steps(&self) -> usize {
        self.dts.len()
    }

    pub fn dts(&self) -> &[f64] {
        &self.dts
    }

    /// Coefficients of multistep step `n` (1-based).
    pub fn row(&self, n: usize) -> Option<&MultistepCoefficients> {
        n.checked_sub(1).and_then(|k| self.rows.get(k))
    }

    /// Factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.cache.builds()
    }

    pub fn start(&self, x0: Vec<C64>, t0: f64) -> Result<StepState> {
        if x0.len() != self.ivp.size() {
            return Err(Error::contract("integrator: initial state has the wrong length"));
        }
        Ok(StepState { n: 0, history: vec![Past { t: t0, x: x0, f: None }] })
    }

    /// Advance `s` by one step.
    pub fn step(&mut self, s: &mut StepState) -> Result<()> {
        if s.n >= self.dts.len() {
            return Err(Error::contract("integrator: no timesteps left"));
        }
        let dt = self.dts[s.n];
        let t = s.t();
        let x = if self.scheme.is_multistep() {
            self.multistep_forward(s)?
        } else {
            let mut xs = self.rk_stages(&s.history[0].x, t, dt)?;
            xs.pop().unwrap()
        };
        s.history.insert(0, Past { t: t + dt, x, f: None });
        s.history.truncate(self.scheme.steps());
        s.n += 1;
        Ok(())
    }

    /// Step until `s.n() == n`.
    pub fn advance_to(&mut self, s: &mut StepState, n: usize) -> Result<()> {
        while s.n < n {
            self.step(s)?;
        }
        Ok(())
    }

    fn multistep_forward(&mut self, s: &mut StepState) -> Result<Vec<C64>> {
        let row = self.rows[s.n].clone();
        let k = row.order();
        let len = self.ivp.size();
        let (mut mx, mut lx, mut fx) = (vec![C64::default(); len], vec![C64::default(); len], vec![C64::default(); len]);
        for i in 1..=k {
            let p = &mut s.history[i - 1];
            if row.c(i) != 0.0 {
                if p.f.is_none() {
                    p.f = Some(self.ivp.rhs_at(&p.x, p.t)?);
                }
                axpy(&mut fx, row.c(i), p.f.as_ref().unwrap());
            }
            axpy(&mut mx, row.a(i), &p.x);
            axpy(&mut lx, row.b(i), &p.x);
        }
        sub_assign(&mut fx, &self.ivp.mass.matvec(&mx, Mode::Normal));
        sub_assign(&mut fx, &self.ivp.lhs.matvec(&lx, Mode::Normal));
        let lu = self.cache.get(&self.ivp.mass, &self.ivp.lhs, row.a(0), row.b(0))?;
        lu.solve(&fx, Mode::Normal)
    }

    /// Stage states `X_{n,0..=s}` of one Runge-Kutta step from `x0`.
    fn rk_stages(&mut self, x0: &[C64], t: f64, dt: f64) -> Result<Vec<Vec<C64>>> {
        Ok(self.rk_stages_impl(x0, t, dt, false)?.0)
    }

    /// Stage states and, with `record`, the tape of every stage whose right-hand
    /// side was evaluated (taken on `stage_graphs[j]`).
    fn rk_stages_impl(&mut self, x0: &[C64], t: f64, dt: f64, record: bool) -> Result<(Vec<Vec<C64>>, Vec<Option<Tape>>)> {
        let tab = self.tableau.clone().expect("runge-kutta scheme");
        let s = tab.stages();
        let len = x0.len();
        let mut xs: Vec<Vec<C64>> = vec![x0.to_vec()];
        let mut fs: Vec<Option<Vec<C64>>> = vec![None; s + 1];
        let mut tapes: Vec<Option<Tape>> = vec![None; s + 1];
        let m0 = self.ivp.mass.matvec(x0, Mode::Normal);
        for i in 1..=s {
            let (mut fsum, mut lsum) = (vec![C64::default(); len], vec![C64::default(); len]);
            for j in 0..i {
                if tab.a[i][j] != 0.0 {
                    if fs[j].is_none() {
                        let tj = t + tab.c[j] * dt;
                        fs[j] = Some(if record {
                            let (f, tape) = self.ivp.rhs_taped(&mut self.stage_graphs[j], &xs[j], tj)?;
                            tapes[j] = Some(tape);
                            f
                        } else {
                            self.ivp.rhs_at(&xs[j], tj)?
                        });
                    }
                    axpy(&mut fsum, dt * tab.a[i][j], fs[j].as_ref().unwrap());
                }
                axpy(&mut lsum, dt * tab.h[i][j], &xs[j]);
            }
            let mut rhs = m0.clone();
            rhs.iter_mut().zip(&fsum).for_each(|(a, b)| *a += b);
            sub_assign(&mut rhs, &self.ivp.lhs.matvec(&lsum, Mode::Normal));
            let lu = self.cache.get(&self.ivp.mass, &self.ivp.lhs, 1.0, dt * tab.h[i][i])?;
            xs.push(lu.solve(&rhs, Mode::Normal)?);
        }
        Ok((xs, tapes))
    }

    /// Begin the reverse pass with `seed = dJ/dX_N`.
    pub fn adjoint_seed(&mut self, seed: &[C64]) -> Result<AdjointState> {
        let n = self.dts.len();
        if seed.len() != self.ivp.size() {
            return Err(Error::contract("adjoint seed has the wrong length"));
        }
        let mut y = VecDeque::new();
        if let Some(tab) = &self.tableau {
            self.stage_graphs = vec![self.ivp.graph.clone(); tab.stages() + 1];
        }
        if self.scheme.is_multistep() {
            let row = &self.rows[n - 1];
            let lu = self.cache.get(&self.ivp.mass, &self.ivp.lhs, row.a(0), row.b(0))?;
            y.push_front(lu.solve(seed, Mode::Adjoint)?);
        }
        Ok(AdjointState { n, xbar: seed.to_vec(), y, params: ParamCotangents::default() })
    }

    /// Process state `X_m`, `m = adj.n() - 1`, completing its cotangent.
    /// `direct` is an extra explicit cotangent on `X_m`.
    pub fn adjoint_step(&mut self, adj: &mut AdjointState, state: &StepState, direct: Option<&[C64]>) -> Result<()> {
        if adj.n == 0 {
            return Err(Error::contract("adjoint pass already reached the initial state"));
        }
        let m = adj.n - 1;
        if state.n != m {
            return Err(Error::CheckpointMiss { step: m });
        }
        if self.scheme.is_multistep() {
            self.multistep_adjoint(adj, state, direct)
        } else {
            self.rk_adjoint(adj, state, direct)
        }
    }

    fn multistep_adjoint(&mut self, adj: &mut AdjointState, state: &StepState, direct: Option<&[C64]>) -> Result<()> {
        let m = state.n;
        let big_n = self.dts.len();
        let len = self.ivp.size();
        let mut g = vec![C64::default(); len];
        let (mut ma, mut lb) = (vec![C64::default(); len], vec![C64::default(); len]);
        for (k, y) in adj.y.iter().enumerate() {
            let i = k + 1;
            if m + i > big_n {
                break;
            }
            let row = &self.rows[m + i - 1];
            axpy(&mut g, row.c(i), y);
            axpy(&mut ma, row.a(i), y);
            axpy(&mut lb, row.b(i), y);
        }
        let mut xbar = match direct {
            Some(d) => d.to_vec(),
            None => vec![C64::default(); len],
        };
        if !is_zero(&g) {
            let (vs, pc) = self.ivp.rhs_vjp_at(state.x(), state.t(), &g)?;
            xbar.iter_mut().zip(&vs).for_each(|(a, b)| *a += b);
            adj.params.add(&pc);
        }
        sub_assign(&mut xbar, &self.ivp.mass.matvec(&ma, Mode::Adjoint));
        sub_assign(&mut xbar, &self.ivp.lhs.matvec(&lb, Mode::Adjoint));
        if m >= 1 {
            let row = &self.rows[m - 1];
            let lu = self.cache.get(&self.ivp.mass, &self.ivp.lhs, row.a(0), row.b(0))?;
            adj.y.push_front(lu.solve(&xbar, Mode::Adjoint)?);
            adj.y.truncate(self.scheme.steps());
        }
        adj.xbar = xbar;
        adj.n = m;
        Ok(())
    }

    fn rk_adjoint(&mut self, adj: &mut AdjointState, state: &StepState, direct: Option<&[C64]>) -> Result<()> {
        let tab = self.tableau.clone().expect("runge-kutta scheme");
        let s = tab.stages();
        let m = state.n;
        let (t, dt) = (state.t(), self.dts[m]);
        let len = self.ivp.size();
        if self.stage_graphs.len() != s + 1 {
            return Err(Error::contract("adjoint step before adjoint_seed"));
        }
        let (_, tapes) = self.rk_stages_impl(state.x(), t, dt, true)?;
        let mut ys: Vec<Vec<C64>> = vec![Vec::new(); s + 1];
        let mut xbar_out = match direct {
            Some(d) => d.to_vec(),
            None => vec![C64::default(); len],
        };
        for i in (0..=s).rev() {
            let (mut fcot, mut lcot) = (vec![C64::default(); len], vec![C64::default(); len]);
            for j in (i + 1)..=s {
                axpy(&mut fcot, dt * tab.a[j][i], &ys[j]);
                axpy(&mut lcot, dt * tab.h[j][i], &ys[j]);
            }
            let mut xb = if i == s { adj.xbar.clone() } else { vec![C64::default(); len] };
            if !is_zero(&fcot) {
                let tape = tapes[i].as_ref().expect("stage with explicit weight was evaluated");
                let (vs, pc) = self.ivp.rhs_vjp_taped(&self.stage_graphs[i], tape, &fcot)?;
                xb.iter_mut().zip(&vs).for_each(|(a, b)| *a += b);
                adj.params.add(&pc);
            }
            sub_assign(&mut xb, &self.ivp.lhs.matvec(&lcot, Mode::Adjoint));
            if i == 0 {
                let mut ysum = vec![C64::default(); len];
                for y in &ys[1..] {
                    axpy(&mut ysum, 1.0, y);
                }
                xb.iter_mut().zip(self.ivp.mass.matvec(&ysum, Mode::Adjoint)).for_each(|(a, b)| *a += b);
                xbar_out.iter_mut().zip(&xb).for_each(|(a, b)| *a += b);
            } else {
                let lu = self.cache.get(&self.ivp.mass, &self.ivp.lhs, 1.0, dt * tab.h[i][i])?;
                ys[i] = lu.solve(&xb, Mode::Adjoint)?;
            }
        }
        adj.xbar = xbar_out;
        adj.n = m;
        Ok(())
    }
}
