use std::collections::HashSet;
use std::f64::consts::PI;

use adspec_core::linalg::{dot, factorization_count, norm, BandedMatrix, DenseMatrix, Matrix, Mode};
use adspec_core::opgraph::{Graph, NodeId};
use adspec_core::solvers::{RhsBlock, RhsMap, StateLayout};
use adspec_core::spectral::{Basis, Field};
use adspec_core::timestep::*;
use adspec_core::{c, Error, C64};
use faer::linalg::solvers::Solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

#[test]
fn sbdf1_coefficients() {
    let r = multistep_coefficients(Scheme::Sbdf1, &[0.5]).unwrap();
    assert_eq!(r.a, vec![2.0, -2.0]);
    assert_eq!(r.b, vec![1.0, 0.0]);
    assert_eq!(r.c, vec![0.0, 1.0]);
}

#[test]
fn sbdf2_constant_step_coefficients() {
    let dt = 0.1;
    let r = multistep_coefficients(Scheme::Sbdf2, &[dt, dt]).unwrap();
    let expect = [3.0 / (2.0 * dt), -2.0 / dt, 1.0 / (2.0 * dt)];
    for i in 0..3 {
        assert!((r.a[i] - expect[i]).abs() < 1e-12);
    }
    assert_eq!(r.b[0], 1.0);
    assert!((r.c[1] - 2.0).abs() < 1e-15 && (r.c[2] + 1.0).abs() < 1e-15);
    // startup uses the first-order member
    assert_eq!(multistep_coefficients(Scheme::Sbdf2, &[dt]).unwrap().order(), 1);
}

#[test]
fn variable_step_polynomial_exactness() {
    // a-weights differentiate quadratics exactly; c-weights extrapolate linear functions
    for hist in [vec![0.1, 0.05], vec![0.03, 0.2], vec![0.7, 0.7, 0.1]] {
        let r = multistep_coefficients(Scheme::Sbdf2, &hist).unwrap();
        let k = hist.len();
        let tn = 1.3;
        let times = [tn, tn - hist[k - 1], tn - hist[k - 1] - hist[k - 2]];
        let q = |t: f64| 2.0 + 3.0 * t - 1.5 * t * t;
        let dq = 3.0 - 3.0 * tn;
        let lhs: f64 = (0..3).map(|i| r.a[i] * q(times[i])).sum();
        assert!((lhs - dq).abs() < 1e-10, "{lhs} vs {dq}");
        let lin = |t: f64| 0.4 - 2.0 * t;
        let ext: f64 = (1..3).map(|i| r.c[i] * lin(times[i])).sum();
        assert!((ext - lin(tn)).abs() < 1e-12);

        // CNAB2: implicit average and explicit extrapolation both centred at t_n - dt/2
        let r = multistep_coefficients(Scheme::Cnab2, &hist).unwrap();
        let mid = tn - 0.5 * hist[k - 1];
        let ext: f64 = (1..3).map(|i| r.c[i] * lin(times[i])).sum();
        assert!((ext - lin(mid)).abs() < 1e-12);
        let avg: f64 = (0..3).map(|i| r.b[i] * lin(times[i])).sum();
        assert!((avg - lin(mid)).abs() < 1e-12);
        let slope: f64 = (0..3).map(|i| r.a[i] * lin(times[i])).sum();
        assert!((slope + 2.0).abs() < 1e-10);
    }
}

#[test]
fn coefficient_errors_and_parsing() {
    assert!(matches!(multistep_coefficients(Scheme::Sbdf2, &[0.1, -0.1]), Err(Error::Contract(_))));
    assert!(matches!(multistep_coefficients(Scheme::Sbdf2, &[]), Err(Error::Contract(_))));
    assert!(multistep_coefficients(Scheme::Rk222, &[0.1]).is_err());
    for s in Scheme::ALL {
        assert_eq!(s.to_string().to_lowercase().parse::<Scheme>().unwrap(), s);
    }
    assert!("rk999".parse::<Scheme>().is_err());
}

#[test]
fn tableau_row_sums_match_abscissae() {
    for s in [Scheme::Rk111, Scheme::Rk222, Scheme::Rk443] {
        let t = s.tableau().unwrap();
        for i in 0..=t.stages() {
            let sa: f64 = t.a[i].iter().sum();
            let sh: f64 = t.h[i].iter().sum();
            assert!((sa - t.c[i]).abs() < 1e-15 && (sh - t.c[i]).abs() < 1e-15, "{s} row {i}");
            assert!(t.a[i][i..].iter().all(|&v| v == 0.0));
            assert!(t.h[i][i + 1..].iter().all(|&v| v == 0.0));
        }
    }
}

/// Scalar `du/dt + lam u = F`, where `F = src` (a constant) plus `-k u^3`.
fn scalar_ivp(lam: f64, src: f64, cubic: f64) -> (Ivp, NodeId) {
    let mut g = Graph::new();
    let u = g.scalar_leaf("u");
    let s = g.constant_scalar(c(src));
    let u3 = g.power(u, 3).unwrap();
    let u3 = g.scale(u3, c(-cubic)).unwrap();
    let f = g.add(s, u3).unwrap();
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, 1)]).unwrap();
    let state = StateLayout::new(&g, &[u]).unwrap();
    let lhs = Matrix::Banded(BandedMatrix::from_diagonal(&[c(lam)]));
    (Ivp::new(Matrix::identity(1), lhs, g, rhs, state, None).unwrap(), u)
}

fn run(integ: &mut Integrator, x0: Vec<C64>) -> Vec<C64> {
    let mut s = integ.start(x0, 0.0).unwrap();
    let n = integ.steps();
    integ.advance_to(&mut s, n).unwrap();
    s.x().to_vec()
}

/// Forward pass storing every state, then the full reverse pass.
fn gradient(integ: &mut Integrator, x0: Vec<C64>, seed: impl Fn(&[C64]) -> Vec<C64>) -> (Vec<C64>, AdjointState) {
    let mut s = integ.start(x0, 0.0).unwrap();
    let mut states = vec![s.clone()];
    for _ in 0..integ.steps() {
        integ.step(&mut s).unwrap();
        states.push(s.clone());
    }
    let xn = s.x().to_vec();
    let mut adj = integ.adjoint_seed(&seed(&xn)).unwrap();
    for st in states[..integ.steps()].iter().rev() {
        integ.adjoint_step(&mut adj, st, None).unwrap();
    }
    assert_eq!(adj.n(), 0);
    (xn, adj)
}

#[test]
fn scalar_decay_examples() {
    let (ivp, _) = scalar_ivp(1.0, 0.0, 0.0);
    let mut integ = Integrator::new(ivp, Scheme::Sbdf1, vec![0.5]).unwrap();
    assert!((run(&mut integ, vec![c(1.0)])[0] - c(2.0 / 3.0)).norm() < 1e-15);

    let (ivp, _) = scalar_ivp(0.0, 1.0, 0.0);
    let mut integ = Integrator::new(ivp, Scheme::Sbdf1, vec![0.1]).unwrap();
    assert!((run(&mut integ, vec![c(0.0)])[0] - c(0.1)).norm() < 1e-15);

    // adjoint: d u_N / d u_0 = (1 + dt)^-N
    let (ivp, _) = scalar_ivp(1.0, 0.0, 0.0);
    let dt = 0.2;
    let mut integ = Integrator::new(ivp, Scheme::Sbdf1, vec![dt; 7]).unwrap();
    let (_, adj) = gradient(&mut integ, vec![c(1.0)], |_| vec![c(1.0)]);
    assert!((adj.xbar()[0] - c((1.0 + dt).powi(-7))).norm() < 1e-15);
}

#[test]
fn rk111_matches_sbdf1_and_rk222_stability_function() {
    for dt in [0.1, 0.5, 2.0] {
        let (ivp, _) = scalar_ivp(1.0, 0.0, 0.0);
        let mut a = Integrator::new(ivp, Scheme::Rk111, vec![dt]).unwrap();
        let (ivp, _) = scalar_ivp(1.0, 0.0, 0.0);
        let mut b = Integrator::new(ivp, Scheme::Sbdf1, vec![dt]).unwrap();
        assert!((run(&mut a, vec![c(1.0)])[0] - run(&mut b, vec![c(1.0)])[0]).norm() < 1e-15);

        let (ivp, _) = scalar_ivp(1.0, 0.0, 0.0);
        let mut r = Integrator::new(ivp, Scheme::Rk222, vec![dt]).unwrap();
        let g = (2.0 - 2f64.sqrt()) / 2.0;
        let expect = (1.0 + (2.0 * g - 1.0) * dt) / (1.0 + g * dt).powi(2);
        assert!((run(&mut r, vec![c(1.0)])[0] - c(expect)).norm() <= 1e-14);
    }
}

/// Fourier `du/dt = -a du/dx` (explicit) or `du/dt = nu d2u/dx2` (implicit).
fn fourier_ivp(n: usize, advect: f64, diffuse: f64) -> (Ivp, Basis) {
    let b = Basis::fourier(n, (0.0, 2.0 * PI)).unwrap();
    let mut g = Graph::new();
    let u = g.field_leaf("u", &b);
    let du = g.differentiate(u, 1).unwrap();
    let f = g.scale(du, c(-advect)).unwrap();
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, n)]).unwrap();
    let state = StateLayout::new(&g, &[u]).unwrap();
    let k2: Vec<C64> = (0..n).map(|i| c(diffuse * (b.wavenumber(i) as f64).powi(2))).collect();
    let lhs = Matrix::Banded(BandedMatrix::from_diagonal(&k2));
    (Ivp::new(Matrix::identity(n), lhs, g, rhs, state, None).unwrap(), b)
}

#[test]
fn rk443_is_third_order_on_advection() {
    let t_end = 1.0;
    let mut errs = Vec::new();
    for steps in [10, 20, 40] {
        let (ivp, b) = fourier_ivp(8, 1.0, 0.0);
        let u0 = Field::from_fn(&b, |x| c(x.sin())).to_coefficients().unwrap().into_data();
        let exact = Field::from_fn(&b, |x| c((x - t_end).sin())).to_coefficients().unwrap().into_data();
        let mut integ = Integrator::new(ivp, Scheme::Rk443, vec![t_end / steps as f64; steps]).unwrap();
        errs.push(rel_diff(&run(&mut integ, u0), &exact));
    }
    for w in errs.windows(2) {
        // fitted orders carry an O(dt) pre-asymptotic deficit; 3rd order, not 4th
        let order = (w[0] / w[1]).log2();
        assert!((2.95..3.5).contains(&order), "{errs:?}");
    }
}

#[test]
fn sbdf2_local_error_against_exact_decay() {
    // heat equation: exact propagator is diagonal exp(-k^2 t)
    let n = 8;
    let mut errs = Vec::new();
    for dt in [0.02, 0.01, 0.005] {
        let (ivp, b) = fourier_ivp(n, 0.0, 1.0);
        let u0 = Field::from_fn(&b, |x| c(x.sin() + 0.5 * (2.0 * x).cos() + 0.1 * (3.0 * x).sin())).to_coefficients().unwrap().into_data();
        // a tiny startup step makes the first-order startup error negligible
        let tiny = dt * 1e-4;
        let mut integ = Integrator::new(ivp, Scheme::Sbdf2, vec![tiny, dt]).unwrap();
        let out = run(&mut integ, u0.clone());
        let t = tiny + dt;
        let exact: Vec<C64> = (0..n).map(|i| u0[i] * (-(b.wavenumber(i) as f64).powi(2) * t).exp()).collect();
        errs.push(rel_diff(&out, &exact));
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 2.7, "{errs:?}");
    }
}

/// Linear IVP with nontrivial `M`, `L`, a time-dependent forcing and a
/// parameter: `F = a(x) u + 0.3 du/dx + p g(x) + t h(x)`.
fn linear_ivp(n: usize, seed: u64) -> (Ivp, NodeId) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = Basis::fourier(n, (0.0, 2.0 * PI)).unwrap();
    let mut g = Graph::new();
    let u = g.field_leaf("u", &b);
    let p = g.scalar_leaf("p");
    let t = g.scalar_leaf("t");
    g.bind_scalar(p, c(0.4)).unwrap();
    let a = g.constant_field(Field::from_fn(&b, |x| C64::new(0.5 * x.cos(), 0.2))).unwrap();
    let au = g.multiply(a, u).unwrap();
    let du = g.differentiate(u, 1).unwrap();
    let du = g.scale(du, c(0.3)).unwrap();
    let gf = g.constant_field(Field::from_fn(&b, |x| C64::new((2.0 * x).sin(), 0.0))).unwrap();
    let pg = g.multiply(p, gf).unwrap();
    let hf = g.constant_field(Field::from_fn(&b, |x| C64::new(0.0, x.cos()))).unwrap();
    let th = g.multiply(t, hf).unwrap();
    let f = g.add(au, du).unwrap();
    let f = g.add(f, pg).unwrap();
    let f = g.add(f, th).unwrap();
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, n)]).unwrap();
    let state = StateLayout::new(&g, &[u]).unwrap();
    let mut m = BandedMatrix::zeros(n, n, 1, 1);
    let mut l = BandedMatrix::zeros(n, n, 1, 2);
    for i in 0..n {
        for j in m.row_span(i) {
            m.set(i, j, C64::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)));
        }
        m.add_to(i, i, c(1.0));
        for j in l.row_span(i) {
            l.set(i, j, C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
        }
        l.add_to(i, i, c(1.0 + (b.wavenumber(i) as f64).powi(2)));
    }
    (Ivp::new(Matrix::Banded(m), Matrix::Banded(l), g, rhs, state, Some(t)).unwrap(), p)
}

/// Columns of the affine forward map's linear part, by unit-vector runs.
fn propagator(scheme: Scheme, dts: &[f64], n: usize) -> DenseMatrix {
    let (ivp, _) = linear_ivp(n, 1);
    let mut integ = Integrator::new(ivp, scheme, dts.to_vec()).unwrap();
    let base = run(&mut integ, vec![C64::default(); n]);
    let cols: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::default(); n];
            e[j] = c(1.0);
            run(&mut integ, e).iter().zip(&base).map(|(a, b)| a - b).collect()
        })
        .collect();
    DenseMatrix::from_columns(n, &cols).unwrap()
}

#[test]
fn adjoint_equals_dense_conjugate_transpose_all_schemes() {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for dts in [vec![0.1, 0.05, 0.2], vec![0.05; 5], vec![0.1, 0.05, 0.2, 0.2, 0.03, 0.1]] {
        for scheme in Scheme::ALL {
            let phi = propagator(scheme, &dts, n);
            let gv = rand_vec(&mut rng, n);
            let x0 = rand_vec(&mut rng, n);
            let (ivp, p) = linear_ivp(n, 1);
            let mut integ = Integrator::new(ivp, scheme, dts.clone()).unwrap();
            let (_, adj) = gradient(&mut integ, x0.clone(), |_| gv.clone());
            let expect = phi.matvec(&gv, Mode::Adjoint);
            let e = rel_diff(adj.xbar(), &expect);
            assert!(e <= 1e-12, "{scheme} {dts:?}: {e:e}");

            // parameter gradient: the map is affine in p, so a finite step is exact
            let gp = adj.params.get(p).unwrap()[0];
            let dp = C64::new(0.3, -0.7);
            let xp = {
                integ.ivp.graph.bind_scalar(p, c(0.4) + dp).unwrap();
                run(&mut integ, x0.clone())
            };
            integ.ivp.graph.bind_scalar(p, c(0.4)).unwrap();
            let x = run(&mut integ, x0.clone());
            let diff: Vec<C64> = xp.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lhs = dot(&gv, &diff);
            let rhs = gp.conj() * dp;
            assert!((lhs - rhs).norm() <= 1e-11 * lhs.norm(), "{scheme}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn adjoint_pass_performs_no_factorizations() {
    let n = 8;
    let dts = vec![0.1, 0.05, 0.2, 0.05, 0.1];
    for scheme in Scheme::ALL {
        let (ivp, _) = linear_ivp(n, 3);
        let mut integ = Integrator::new(ivp, scheme, dts.clone()).unwrap();
        let mut s = integ.start(vec![c(1.0); n], 0.0).unwrap();
        let mut states = vec![s.clone()];
        for _ in 0..dts.len() {
            integ.step(&mut s).unwrap();
            states.push(s.clone());
        }
        let before = factorization_count();
        let fwd = integ.factorizations();
        let mut adj = integ.adjoint_seed(&vec![c(1.0); n]).unwrap();
        for st in states[..dts.len()].iter().rev() {
            integ.adjoint_step(&mut adj, st, None).unwrap();
        }
        assert_eq!(factorization_count(), before, "{scheme}");
        assert_eq!(integ.factorizations(), fwd);
    }
}

#[test]
fn factor_builds_equal_distinct_coefficient_pairs() {
    let n = 8;
    let dts = vec![0.1, 0.1, 0.05, 0.1, 0.05, 0.05, 0.1];
    for scheme in Scheme::ALL {
        let (ivp, _) = linear_ivp(n, 4);
        let mut integ = Integrator::new(ivp, scheme, dts.clone()).unwrap();
        run(&mut integ, vec![c(1.0); n]);
        let mut keys = HashSet::new();
        for (k, &dt) in dts.iter().enumerate() {
            if scheme.is_multistep() {
                let r = integ.row(k + 1).unwrap();
                keys.insert((r.a[0].to_bits(), r.b[0].to_bits()));
            } else {
                let t = scheme.tableau().unwrap();
                for i in 1..=t.stages() {
                    keys.insert((1f64.to_bits(), (dt * t.h[i][i]).to_bits()));
                }
            }
        }
        assert_eq!(integ.factorizations(), keys.len(), "{scheme}");
    }
}

#[test]
fn sbdf2_startup_matches_hand_composed_maps() {
    let n = 6;
    let dts = [0.1, 0.07, 0.12];
    let (ivp, _) = linear_ivp(n, 5);
    // F linear part K and affine part at time t via forward evaluations
    let mut probe = ivp.clone();
    let f0 = |probe: &mut Ivp, t: f64| probe.rhs_at(&vec![C64::default(); n], t).unwrap();
    let kcols: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::default(); n];
            e[j] = c(1.0);
            let fe = probe.rhs_at(&e, 0.0).unwrap();
            let z = f0(&mut probe, 0.0);
            fe.iter().zip(&z).map(|(a, b)| a - b).collect()
        })
        .collect();
    let k = DenseMatrix::from_columns(n, &kcols).unwrap();
    let (m, l) = (ivp.mass.to_dense(), ivp.lhs.to_dense());
    let dense = |d: &DenseMatrix| faer::Mat::from_fn(n, n, |i, j| d.get(i, j));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x0 = rand_vec(&mut rng, n);
    let mut xs = vec![x0.clone()];
    let mut ts = vec![0.0];
    for step in 1..=dts.len() {
        let r = multistep_coefficients(Scheme::Sbdf2, &dts[..step]).unwrap();
        let mut rhs = vec![C64::default(); n];
        for i in 1..=r.order() {
            let xi = &xs[step - i];
            let fx: Vec<C64> = k.matvec(xi, Mode::Normal).iter().zip(f0(&mut probe, ts[step - i])).map(|(a, b)| a + b).collect();
            let mx = m.matvec(xi, Mode::Normal);
            let lx = l.matvec(xi, Mode::Normal);
            for q in 0..n {
                rhs[q] += r.c[i] * fx[q] - r.a[i] * mx[q] - r.b[i] * lx[q];
            }
        }
        let a = DenseMatrix::lincomb(c(r.a[0]), &m, c(r.b[0]), &l).unwrap();
        let sol = dense(&a).partial_piv_lu().solve(&faer::Mat::from_fn(n, 1, |i, _| rhs[i]));
        xs.push((0..n).map(|i| sol[(i, 0)]).collect());
        ts.push(ts[step - 1] + dts[step - 1]);
    }
    let mut integ = Integrator::new(ivp, Scheme::Sbdf2, dts.to_vec()).unwrap();
    let mut s = integ.start(x0, 0.0).unwrap();
    for step in 1..=dts.len() {
        integ.step(&mut s).unwrap();
        assert!(rel_diff(s.x(), &xs[step]) < 1e-13, "step {step}");
    }
}

#[test]
fn cubic_decay_taylor_test_is_second_order() {
    // du/dt = -u^3, J = u(T)^2
    for scheme in [Scheme::Rk222, Scheme::Sbdf2] {
        let (ivp, _) = scalar_ivp(0.0, 0.0, 1.0);
        let mut integ = Integrator::new(ivp, scheme, vec![0.05; 20]).unwrap();
        let u0 = C64::new(0.8, 0.1);
        let (un, adj) = gradient(&mut integ, vec![u0], |x| vec![(2.0 * x[0]).conj()]);
        let j0 = un[0] * un[0];
        let grad = adj.xbar()[0];
        let d = C64::new(0.6, -0.4);
        let mut eps = 1e-2;
        let mut rs = Vec::new();
        for _ in 0..5 {
            let u = run(&mut integ, vec![u0 + d * eps]);
            rs.push((u[0] * u[0] - j0 - eps * grad.conj() * d).norm());
            eps /= 2.0;
        }
        let orders: Vec<f64> = rs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let mean = orders.iter().sum::<f64>() / orders.len() as f64;
        assert!((mean - 2.0).abs() <= 0.1, "{scheme}: {orders:?}");
    }
}

#[test]
fn adjoint_step_requires_the_matching_state() {
    let (ivp, _) = scalar_ivp(1.0, 0.0, 0.0);
    let mut integ = Integrator::new(ivp, Scheme::Sbdf2, vec![0.1; 3]).unwrap();
    let s0 = integ.start(vec![c(1.0)], 0.0).unwrap();
    let mut adj = integ.adjoint_seed(&[c(1.0)]).unwrap();
    assert!(matches!(integ.adjoint_step(&mut adj, &s0, None), Err(Error::CheckpointMiss { step: 2 })));
}
