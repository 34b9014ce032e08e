//! Aggregate verification run: dot tests, Taylor tests and dense oracles over
//! the whole stack. Each check is a named row; any failed row fails the run.

use std::cell::RefCell;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{gradient_ivp, solve_ivp, CheckpointSchedule, ScheduleKind, SeedCost};
use crate::linalg::{factorization_count, BandedMatrix, DenseMatrix, Matrix};
use crate::opgraph::{Graph, NodeId};
use crate::solvers::{RhsBlock, RhsMap, StateLayout};
use crate::spectral::{Basis, BasisKind, Field};
use crate::timestep::{Integrator, Ivp, Scheme};
use crate::verify::{default_epsilons, dot_test, taylor_test, TAYLOR_SLOPE_RANGE};
use crate::{c, Result, C64};

use super::burgers::{self, BurgersParams, BurgersProblem};
use super::fhn::{self, FhnParams};
use super::orr_sommerfeld::{growth_rate, sensitivity, OsOperators};
use super::resolvent::{power_iteration, Resolvent, ResolventParams};
use super::Config;

pub const DOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteParams {
    pub graphs: usize,
    pub seed: u64,
    pub burgers_steps: usize,
    /// Include the limit-cycle phase check (a few seconds).
    pub fhn: bool,
    /// Flip the sign of the adjoint grid transforms to show the suite catches it.
    pub inject_fault: bool,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self { graphs: 100, seed: 2024, burgers_steps: 200, fhn: true, inject_fault: false }
    }
}

impl SuiteParams {
    pub const KEYS: &'static [&'static str] = &["graphs", "seed", "burgers_steps", "fhn", "inject_fault"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(Self::KEYS)?;
        let d = Self::default();
        Ok(Self {
            graphs: cfg.positive_usize("graphs", d.graphs)?,
            seed: cfg.parse_or("seed", d.seed)?,
            burgers_steps: cfg.positive_usize("burgers_steps", d.burgers_steps)?,
            fhn: cfg.parse_or("fhn", d.fhn)?,
            inject_fault: cfg.parse_or("inject_fault", d.inject_fault)?,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<CheckRow>,
    /// Factorizations observed during adjoint passes; must be zero.
    pub adjoint_factorizations: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect()
    }
}

struct Rows(Vec<CheckRow>);

impl Rows {
    fn push(&mut self, name: &str, value: Result<f64>, lower: f64, upper: f64) {
        let row = match value {
            Ok(v) => CheckRow { name: name.into(), value: v, lower, upper, passed: v >= lower && v <= upper, detail: String::new() },
            Err(e) => CheckRow { name: name.into(), value: f64::NAN, lower, upper, passed: false, detail: e.to_string() },
        };
        if row.passed {
            log::info!("pass {name}: {}", row.value);
        } else {
            log::warn!("FAIL {name}: {} not in [{lower:e}, {upper:e}] {}", row.value, row.detail);
        }
        self.0.push(row);
    }
}

pub fn run(p: &SuiteParams) -> Result<SuiteReport> {
    let mut rows = Rows(Vec::new());
    rows.push("graph_jvp_vjp", random_graph_dot_tests(p.graphs, p.seed), 0.0, DOT_TOLERANCE);
    for kind in [BasisKind::Fourier, BasisKind::Chebyshev] {
        let (f, b) = transform_dot_tests(kind, p.inject_fault, p.seed);
        let k = format!("{kind:?}").to_lowercase();
        rows.push(&format!("transform_forward_{k}"), f, 0.0, DOT_TOLERANCE);
        rows.push(&format!("transform_backward_{k}"), b, 0.0, DOT_TOLERANCE);
    }

    let mut adjoint_factorizations = 0;
    let rp = ResolventParams::default();
    let res = (|| -> Result<(f64, f64, usize)> {
        let mut h = Resolvent::new(&rp, 0.5)?;
        if p.inject_fault {
            h = h.with_transform_fault();
        }
        let m = h.size();
        let before = factorization_count();
        let cell = RefCell::new(h);
        let err = dot_test(|x| cell.borrow_mut().apply(x), |y| cell.borrow().apply_adjoint(y), m, m, 3, p.seed)?;
        let mut h = cell.into_inner();
        let facts = factorization_count() - before;
        // dense oracle: assemble H_M column by column
        let mut cols = Vec::with_capacity(m);
        for j in 0..m {
            let mut e = vec![C64::default(); m];
            e[j] = c(1.0);
            cols.push(h.apply(&e)?);
        }
        let dense = DenseMatrix::from_columns(m, &cols)?;
        let s_dense = dense.singular_values()?[0];
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let t = power_iteration(&mut h, &[], rp.tolerance, rp.max_iterations, &mut rng)?;
        Ok((err, (t.sigma - s_dense).abs() / s_dense, facts))
    })();
    match res {
        Ok((err, svd, facts)) => {
            rows.push("resolvent_dot", Ok(err), 0.0, DOT_TOLERANCE);
            rows.push("resolvent_sigma1_vs_dense_svd", Ok(svd), 0.0, 1e-8);
            adjoint_factorizations += facts;
        }
        Err(e) => {
            let msg = e.to_string();
            rows.push("resolvent_dot", Err(crate::Error::Contract(msg.clone())), 0.0, DOT_TOLERANCE);
            rows.push("resolvent_sigma1_vs_dense_svd", Err(crate::Error::Contract(msg)), 0.0, 1e-8);
        }
    }

    for scheme in Scheme::ALL {
        let r = timestep_dot_test(scheme, p.seed).map(|(err, facts)| {
            adjoint_factorizations += facts;
            err
        });
        rows.push(&format!("timestep_adjoint_{}", scheme.to_string().to_lowercase()), r, 0.0, DOT_TOLERANCE);
    }

    rows.push("checkpoint_schedule_independence", schedule_independence(), 0.0, 0.0);

    let (lo, hi) = TAYLOR_SLOPE_RANGE;
    for (scheme, schedule) in [("SBDF2", "store_all"), ("RK443", "binomial:8")] {
        let r = burgers_taylor(scheme, schedule, p.burgers_steps).map(|(slope, facts)| {
            adjoint_factorizations += facts;
            slope
        });
        let name = format!("taylor_burgers_{}_{}", scheme.to_lowercase(), schedule.replace(':', "_"));
        rows.push(&name, r, lo, hi);
    }

    let (ea, er) = match eigen_sensitivity_fd() {
        Ok((a, r)) => (Ok(a), Ok(r)),
        Err(e) => (Err(crate::Error::Contract(e.to_string())), Err(e)),
    };
    rows.push("eigen_sensitivity_alpha_fd", ea, 0.0, 1e-5);
    rows.push("eigen_sensitivity_re_fd", er, 0.0, 1e-5);

    if p.fhn {
        match fhn::run(&FhnParams::default()) {
            Ok(r) => {
                rows.push("fhn_phase_tendency", Ok(r.tendency_error), 0.0, 1e-8);
                let (lr, li) = r.floquet_eigenvalue;
                rows.push("fhn_neutral_floquet", Ok(lr.hypot(li)), 0.0, 1e-8);
            }
            Err(e) => rows.push("fhn_phase_tendency", Err(e), 0.0, 1e-8),
        }
    }

    rows.push("adjoint_factorizations", Ok(adjoint_factorizations as f64), 0.0, 0.0);
    Ok(SuiteReport { rows: rows.0, adjoint_factorizations })
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

/// A random expression graph over two field leaves and one scalar leaf.
fn random_graph(rng: &mut ChaCha8Rng) -> Result<(Graph, Vec<NodeId>, Vec<NodeId>)> {
    let kind = if rng.gen_bool(0.5) { BasisKind::Fourier } else { BasisKind::Chebyshev };
    let n = rng.gen_range(6..14);
    let basis = Basis::new(kind, n, (0.0, 2.0), 1.5)?;
    let mut g = Graph::new();
    let u = g.field_leaf("u", &basis);
    let w = g.field_leaf("w", &basis);
    let s = g.scalar_leaf("s");
    let leaves = vec![u, w, s];
    let mut fields = vec![u, w];
    for _ in 0..rng.gen_range(3..9) {
        let a = fields[rng.gen_range(0..fields.len())];
        let b = fields[rng.gen_range(0..fields.len())];
        let node = match rng.gen_range(0..7) {
            0 => g.add(a, b),
            1 => g.multiply(a, b),
            2 => g.multiply(s, a),
            3 => g.power(a, rng.gen_range(2..4)),
            4 => g.differentiate(a, 1),
            5 => g.scale(a, C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))),
            _ => g.sub(a, b),
        };
        // space mismatches are expected for some draws
        if let Ok(id) = node {
            fields.push(id);
        }
    }
    let mut roots = vec![*fields.last().unwrap()];
    if let Ok(i) = g.integrate(fields[rng.gen_range(0..fields.len())]) {
        roots.push(i);
    }
    for &l in &leaves[..2] {
        g.bind_coeffs(l, &rand_vec(rng, n))?;
    }
    g.bind_scalar(s, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))?;
    Ok((g, leaves, roots))
}

fn random_graph_dot_tests(count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        // outputs that vanish identically (x - x, the integral of a periodic
        // derivative) make the relative dot-test error pure roundoff; redraw
        let (g, leaves, roots, tape) = loop {
            let (g, leaves, roots) = random_graph(&mut rng)?;
            let tape = g.record(&roots)?;
            let live = roots.iter().any(|&r| tape.coeffs(r).is_some_and(|v| v.iter().any(|z| z.norm() > 1e-8)));
            if live {
                break (g, leaves, roots, tape);
            }
        };
        let in_sizes: Vec<usize> = leaves.iter().map(|&l| g.shape(l).map(|s| s.len())).collect::<Result<_>>()?;
        let out_sizes: Vec<usize> = roots.iter().map(|&r| g.shape(r).map(|s| s.len())).collect::<Result<_>>()?;
        let split = |v: &[C64], sizes: &[usize]| -> Vec<Vec<C64>> {
            let mut off = 0;
            sizes
                .iter()
                .map(|&n| {
                    off += n;
                    v[off - n..off].to_vec()
                })
                .collect()
        };
        let err = dot_test(
            |x| {
                let parts = split(x, &in_sizes);
                let tangents: Vec<(NodeId, &[C64])> = leaves.iter().zip(&parts).map(|(&l, p)| (l, &p[..])).collect();
                Ok(g.jvp_coeffs(&tape, &tangents)?.concat())
            },
            |y| {
                let parts = split(y, &out_sizes);
                let refs: Vec<&[C64]> = parts.iter().map(|p| &p[..]).collect();
                let cot = g.vjp_coeffs(&tape, &refs)?;
                Ok(leaves
                    .iter()
                    .zip(&in_sizes)
                    .flat_map(|(&l, &n)| cot.coeffs(l).map(|c| c.to_vec()).unwrap_or_else(|| vec![C64::default(); n]))
                    .collect())
            },
            in_sizes.iter().sum(),
            out_sizes.iter().sum(),
            2,
            seed.wrapping_add(k as u64),
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn transform_dot_tests(kind: BasisKind, fault: bool, seed: u64) -> (Result<f64>, Result<f64>) {
    let basis = match Basis::new(kind, 24, (0.0, 3.0), 1.5) {
        Ok(b) => b,
        Err(e) => return (Err(crate::Error::Contract(e.to_string())), Err(e)),
    };
    let (n, m) = (basis.n_modes(), basis.grid_size());
    let sign = if fault { -1.0 } else { 1.0 };
    let fwd = dot_test(
        |x| basis.forward(x),
        |y| Ok(basis.forward_adjoint(y, m)?.into_iter().map(|v| v * sign).collect()),
        m,
        n,
        3,
        seed,
    );
    let bwd = dot_test(|x| basis.backward(x, m), |y| basis.backward_adjoint(y), n, m, 3, seed);
    (fwd, bwd)
}

/// Linear IVP with non-identity mass and a variable step sequence.
fn linear_ivp() -> Result<Ivp> {
    let basis = Basis::fourier(16, (0.0, 2.0 * PI))?;
    let n = basis.n_modes();
    let mut g = Graph::new();
    let u = g.field_leaf("u", &basis);
    let a = g.constant_field(Field::from_fn(&basis, |x| c(0.5 * x.cos())))?;
    let au = g.multiply(a, u)?;
    let du = g.differentiate(u, 1)?;
    let du = g.scale(du, c(0.3))?;
    let f = g.add(au, du)?;
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, n)])?;
    let state = StateLayout::new(&g, &[u])?;
    let k2: Vec<f64> = (0..n).map(|i| basis.angular_wavenumber(i).powi(2)).collect();
    let mass = BandedMatrix::from_diagonal(&k2.iter().map(|k| c(1.0 + 0.05 * k)).collect::<Vec<_>>());
    let lhs = BandedMatrix::from_diagonal(&k2.iter().map(|k| c(0.1 * k)).collect::<Vec<_>>());
    Ivp::new(Matrix::Banded(mass), Matrix::Banded(lhs), g, rhs, state, None)
}

const VARIABLE_DTS: [f64; 8] = [0.02, 0.013, 0.017, 0.01, 0.025, 0.015, 0.02, 0.011];

/// Dot test of the discrete propagator against the adjoint sweep; also
/// returns the factorizations seen during adjoint sweeps.
fn timestep_dot_test(scheme: Scheme, seed: u64) -> Result<(f64, usize)> {
    let ivp = linear_ivp()?;
    let n = ivp.size();
    let steps = VARIABLE_DTS.len();
    let sched = CheckpointSchedule::build(ScheduleKind::StoreAll, steps)?;
    let mut fwd = Integrator::new(linear_ivp()?, scheme, VARIABLE_DTS.to_vec())?;
    let mut adj = Integrator::new(ivp, scheme, VARIABLE_DTS.to_vec())?;
    // warm the factor cache so later counts isolate the adjoint side
    solve_ivp(&mut fwd, vec![C64::default(); n], 0.0, &sched)?;
    solve_ivp(&mut adj, vec![C64::default(); n], 0.0, &sched)?;
    let before = factorization_count();
    let err = dot_test(
        |x| Ok(solve_ivp(&mut fwd, x.to_vec(), 0.0, &sched)?.final_state.x().to_vec()),
        |y| Ok(gradient_ivp(&mut adj, vec![C64::default(); n], 0.0, &sched, &mut SeedCost(y.to_vec()))?.initial),
        n,
        n,
        3,
        seed,
    )?;
    Ok((err, factorization_count() - before))
}

/// Largest difference between Burgers gradients under different schedules.
fn schedule_independence() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for scheme in ["SBDF2", "RK443"] {
        let mut reference: Option<Vec<C64>> = None;
        for schedule in ["store_all", "periodic:7", "binomial:3", "binomial:8"] {
            let p = BurgersParams { n_modes: 32, steps: 60, scheme: scheme.into(), schedule: schedule.into(), ..Default::default() };
            let mut prob = BurgersProblem::new(&p)?;
            let x = prob.perturbed_initial(0.2)?;
            let (_, g, _) = prob.cost_and_gradient(&x)?;
            match &reference {
                None => reference = Some(g),
                Some(r) => worst = worst.max(r.iter().zip(&g).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)),
            }
        }
    }
    Ok(worst)
}

fn burgers_taylor(scheme: &str, schedule: &str, steps: usize) -> Result<(f64, usize)> {
    let p = BurgersParams { steps, scheme: scheme.into(), schedule: schedule.into(), ..Default::default() };
    let mut prob = BurgersProblem::new(&p)?;
    let mut x = prob.perturbed_initial(p.perturbation)?;
    burgers::real_projection(&mut x);
    prob.cost(&x)?;
    let before = factorization_count();
    let (_, g, _) = prob.cost_and_gradient(&x)?;
    let facts = factorization_count() - before;
    let dir = Field::from_fn(&prob.basis, |s| c((2.0 * s).sin() + 0.3 * s.cos())).to_coefficients()?.into_data();
    let rep = taylor_test(|q| Ok(c(prob.cost(q)?)), &g, &x, &dir, &default_epsilons())?;
    Ok((rep.slope, facts))
}

/// Five-point central difference.
pub fn five_point(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((8.0 * (f(h)? - f(-h)?) - (f(2.0 * h)? - f(-2.0 * h)?)) / (12.0 * h))
}

/// Relative errors of the adjoint growth-rate sensitivities against finite
/// differences at one Orr-Sommerfeld point.
fn eigen_sensitivity_fd() -> Result<(f64, f64)> {
    let ops = OsOperators::new(96)?;
    let (a, re) = (1.0, 6000.0);
    let s = sensitivity(&ops, a, re)?;
    let fa = five_point(|d| growth_rate(&ops, a + d, re), 4e-3)?;
    let fr = five_point(|d| growth_rate(&ops, a, re * (1.0 + d)), 4e-3)?;
    Ok(((fa - s.dgamma_dalpha).abs() / s.dgamma_dalpha.abs(), (fr - s.dgamma_dlnre).abs() / s.dgamma_dlnre.abs()))
}
