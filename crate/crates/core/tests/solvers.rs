use std::f64::consts::PI;

use adspec_core::linalg::{dot, factorization_count, norm, BandedMatrix, DenseMatrix, LuFactors, Matrix, Mode};
use adspec_core::opgraph::{Graph, NodeId};
use adspec_core::solvers::*;
use adspec_core::spectral::{boundary_row, conversion_operator, differentiation_operator, Basis, Endpoint, Field};
use adspec_core::{c, Error, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rand_dense(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    DenseMatrix::from_rows(n, n, rand_vec(rng, n * n)).unwrap()
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

fn dirichlet_rows(b: &Basis) -> Vec<Vec<C64>> {
    vec![boundary_row(b, Endpoint::Left, 0).unwrap(), boundary_row(b, Endpoint::Right, 0).unwrap()]
}

/// `u'' = amp * f` with homogeneous Dirichlet conditions; returns the problem and the `amp` leaf.
fn poisson(b: &Basis, f: impl Fn(f64) -> f64) -> (Lbvp, NodeId) {
    let n = b.n_modes();
    let lhs = tau_matrix(&dirichlet_rows(b), &differentiation_operator(b, 2).matrix).unwrap();
    let mut g = Graph::new();
    let amp = g.scalar_leaf("amp");
    g.bind_scalar(amp, c(1.0)).unwrap();
    let src = g.constant_field(Field::from_fn(b, |x| c(f(x)))).unwrap();
    let body = g.multiply(amp, src).unwrap();
    let body = g.convert(body, 2).unwrap();
    let z0 = g.constant_scalar(c(0.0));
    let z1 = g.constant_scalar(c(0.0));
    let rhs = RhsMap::new(&g, vec![RhsBlock::new(vec![z0, z1], Some(body), n)]).unwrap();
    (Lbvp::new(lhs, g, rhs).unwrap(), amp)
}

fn field_values(b: &Basis, coeffs: &[C64], xs: &[f64]) -> Vec<C64> {
    // Clenshaw-free direct evaluation of a Chebyshev series
    let (a, bb) = b.interval();
    xs.iter()
        .map(|&x| {
            let t = ((2.0 * x - a - bb) / (bb - a)).clamp(-1.0, 1.0).acos();
            coeffs.iter().enumerate().map(|(k, ck)| ck * (k as f64 * t).cos()).sum()
        })
        .collect()
}

#[test]
fn lbvp_sine_solution() {
    let b = Basis::chebyshev(32, (0.0, PI)).unwrap();
    let (mut p, _) = poisson(&b, |x| -x.sin());
    let x = p.solve().unwrap();
    let xs: Vec<f64> = (0..=200).map(|i| PI * i as f64 / 200.0).collect();
    let u = field_values(&b, &x, &xs);
    let err = u.iter().zip(&xs).map(|(v, x)| (v - c(x.sin())).norm()).fold(0.0, f64::max);
    assert!(err <= 1e-10, "{err:e}");
}

#[test]
fn lbvp_zero_rhs_gives_zero() {
    let b = Basis::chebyshev(16, (-1.0, 1.0)).unwrap();
    let (mut p, amp) = poisson(&b, |x| x.exp());
    p.graph.bind_scalar(amp, c(0.0)).unwrap();
    assert!(p.solve().unwrap().iter().all(|v| v.norm() == 0.0));
}

/// Random banded system with a field leaf `f` as right-hand side.
fn random_lbvp(rng: &mut ChaCha8Rng, n: usize) -> (Lbvp, NodeId, BandedMatrix) {
    let mut a = BandedMatrix::zeros(n, n, 2, 3);
    for i in 0..n {
        for j in a.row_span(i) {
            a.set(i, j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        a.add_to(i, i, c(3.0));
    }
    let b = Basis::fourier(n, (0.0, 2.0 * PI)).unwrap();
    let mut g = Graph::new();
    let f = g.field_leaf("f", &b);
    g.bind_coeffs(f, &rand_vec(rng, n)).unwrap();
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, n)]).unwrap();
    (Lbvp::new(Matrix::Banded(a.clone()), g, rhs).unwrap(), f, a)
}

#[test]
fn lbvp_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut p, f, a) = random_lbvp(&mut rng, 30);
    let x = p.solve().unwrap();
    let fv = p.graph.bound_coeffs(f).unwrap().to_vec();
    let m = faer::Mat::from_fn(30, 30, |i, j| a.get(i, j));
    let rhs = faer::Mat::from_fn(30, 1, |i, _| fv[i]);
    use faer::linalg::solvers::Solve;
    let xd = m.partial_piv_lu().solve(&rhs);
    let xd: Vec<C64> = (0..30).map(|i| xd[(i, 0)]).collect();
    assert!(rel_diff(&x, &xd) <= 1e-12);
}

#[test]
fn lbvp_identity_gradient_is_cotangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 12;
    let b = Basis::fourier(n, (0.0, 1.0)).unwrap();
    let mut g = Graph::new();
    let p = g.field_leaf("p", &b);
    g.bind_coeffs(p, &rand_vec(&mut rng, n)).unwrap();
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(p, n)]).unwrap();
    let mut s = Lbvp::new(Matrix::identity(n), g, rhs).unwrap();
    s.solve().unwrap();
    let gvec = rand_vec(&mut rng, n);
    let cot = s.vjp(&gvec).unwrap();
    assert!(rel_diff(cot.coeffs(p).unwrap(), &gvec) < 1e-15);
}

#[test]
fn lbvp_gradient_matches_central_difference() {
    let b = Basis::chebyshev(24, (-1.0, 2.0)).unwrap();
    let (mut s, amp) = poisson(&b, |x| (3.0 * x).cos() + x * x);
    let objective = |s: &mut Lbvp, a: f64| {
        s.graph.bind_scalar(amp, c(a)).unwrap();
        let x = s.solve().unwrap();
        dot(&x, &x).re
    };
    let a0 = 0.7;
    let x = {
        s.graph.bind_scalar(amp, c(a0)).unwrap();
        s.solve().unwrap()
    };
    // J = <X, X>, real parameter: dJ/da = 2 Re(vjp(X))
    let grad = 2.0 * s.vjp(&x).unwrap().coeffs(amp).unwrap()[0].re;
    let eps = 1e-4;
    let fd = (objective(&mut s, a0 + eps) - objective(&mut s, a0 - eps)) / (2.0 * eps);
    assert!(((grad - fd) / fd).abs() <= 1e-6, "{grad} vs {fd}");
}

#[test]
fn lbvp_adjoint_reuses_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut p, f, _) = random_lbvp(&mut rng, 40);
    let before = factorization_count();
    p.solve().unwrap();
    assert_eq!(factorization_count() - before, 1);
    let gv = rand_vec(&mut rng, 40);
    let cot = p.vjp(&gv).unwrap();
    let t = rand_vec(&mut rng, 40);
    let jv = p.jvp(&[(f, &t)]).unwrap();
    assert_eq!(factorization_count() - before, 1);
    let (lhs, rhs) = (dot(&gv, &jv), dot(cot.coeffs(f).unwrap(), &t));
    assert!((lhs - rhs).norm() <= 1e-11 * lhs.norm());
}

#[test]
fn lbvp_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (p, _, _) = random_lbvp(&mut rng, 8);
    assert!(matches!(p.vjp(&[c(1.0); 8]), Err(Error::Contract(_))));
    let (mut p, _, _) = random_lbvp(&mut rng, 8);
    p.set_lhs(Matrix::Banded(BandedMatrix::zeros(8, 8, 0, 0))).unwrap();
    assert!(matches!(p.solve(), Err(Error::Singular { pivot: 0, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn lbvp_dot_test(seed in any::<u64>(), n in 4usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut p, f, _) = random_lbvp(&mut rng, n);
        p.solve().unwrap();
        let gv = rand_vec(&mut rng, n);
        let t = rand_vec(&mut rng, n);
        let lhs = dot(&gv, &p.jvp(&[(f, &t)]).unwrap());
        let rhs = dot(p.vjp(&gv).unwrap().coeffs(f).unwrap(), &t);
        prop_assert!((lhs - rhs).norm() <= 1e-11 * lhs.norm().max(1e-300));
    }
}

/// `x = p - x^2` written as `1 * x = F(x, p)`.
fn scalar_quadratic() -> (Nlbvp, NodeId, NodeId) {
    let mut g = Graph::new();
    let x = g.scalar_leaf("x");
    let p = g.scalar_leaf("p");
    g.bind_scalar(p, c(1.0)).unwrap();
    let x2 = g.power(x, 2).unwrap();
    let f = g.sub(p, x2).unwrap();
    let rhs = RhsMap::new(&g, vec![RhsBlock::body(f, 1)]).unwrap();
    let state = StateLayout::new(&g, &[x]).unwrap();
    (Nlbvp::new(Matrix::identity(1), g, rhs, state).unwrap(), x, p)
}

#[test]
fn nlbvp_scalar_quadratic_and_gradient() {
    let (mut s, _, p) = scalar_quadratic();
    s.tolerance = 1e-14;
    let x = s.solve(&[c(1.0)]).unwrap();
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    assert!((x[0] - c(golden)).norm() < 1e-14);
    let before = factorization_count();
    let cot = s.vjp(&[c(1.0)]).unwrap();
    assert_eq!(factorization_count(), before);
    let grad = cot.coeffs(p).unwrap()[0];
    assert!((grad - c(1.0 / (1.0 + 2.0 * golden))).norm() < 1e-13);
    assert!(cot.iter().count() == 1, "state leaves are not reported");
}

#[test]
fn nlbvp_quadratic_convergence() {
    let (mut s, _, _) = scalar_quadratic();
    s.tolerance = 1e-15;
    s.solve(&[c(3.0)]).unwrap();
    let h = s.history();
    assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    let n = h.len();
    assert!(n >= 4);
    for k in n - 3..n - 1 {
        assert!(h[k + 1] <= (1e3 * h[k] * h[k]).max(1e-15), "{h:?}");
    }
}

#[test]
fn nlbvp_reports_nonconvergence() {
    let (mut s, _, _) = scalar_quadratic();
    s.tolerance = 1e-15;
    s.max_iterations = 2;
    match s.solve(&[c(10.0)]) {
        Err(Error::NonConvergence { iterations, history }) => {
            assert_eq!(iterations, 2);
            assert_eq!(history.len(), 3);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn nlbvp_linear_problem_matches_lbvp() {
    let b = Basis::chebyshev(20, (0.0, 1.0)).unwrap();
    let (mut lin, amp_l) = poisson(&b, |x| x.exp());
    let xl = lin.solve().unwrap();
    // same system with the unknown as a graph leaf that F ignores
    let n = 20;
    let lhs = lin.lhs().clone();
    let mut g = Graph::new();
    let u = g.field_leaf("u", &b);
    let amp = g.scalar_leaf("amp");
    g.bind_scalar(amp, c(1.0)).unwrap();
    let src = g.constant_field(Field::from_fn(&b, |x| c(x.exp()))).unwrap();
    let body = g.multiply(amp, src).unwrap();
    let body = g.convert(body, 2).unwrap();
    let z0 = g.constant_scalar(c(0.0));
    let z1 = g.constant_scalar(c(0.0));
    let rhs = RhsMap::new(&g, vec![RhsBlock::new(vec![z0, z1], Some(body), n)]).unwrap();
    let state = StateLayout::new(&g, &[u]).unwrap();
    let mut s = Nlbvp::new(lhs, g, rhs, state).unwrap();
    s.tolerance = 1e-12;
    let x = s.solve(&vec![c(0.0); n]).unwrap();
    assert_eq!(s.iterations(), 1);
    assert!(rel_diff(&x, &xl) < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gv = rand_vec(&mut rng, n);
    let gn = s.vjp(&gv).unwrap().coeffs(amp).unwrap()[0];
    let gl = lin.vjp(&gv).unwrap().coeffs(amp_l).unwrap()[0];
    assert!((gn - gl).norm() <= 1e-12 * gl.norm());
}

/// `u'' = u^3 / 2 + amp * (1 + x)`, `u(-1) = 0`, `u(1) = bc`.
fn nonlinear_bvp(n: usize) -> (Nlbvp, NodeId, NodeId) {
    let b = Basis::chebyshev(n, (-1.0, 1.0)).unwrap();
    let lhs = tau_matrix(&dirichlet_rows(&b), &differentiation_operator(&b, 2).matrix).unwrap();
    let mut g = Graph::new();
    let u = g.field_leaf("u", &b);
    let amp = g.scalar_leaf("amp");
    let bc = g.scalar_leaf("bc");
    g.bind_scalar(amp, c(0.8)).unwrap();
    g.bind_scalar(bc, c(0.3)).unwrap();
    let u3 = g.power(u, 3).unwrap();
    let u3 = g.scale(u3, c(0.5)).unwrap();
    let src = g.constant_field(Field::from_fn(&b, |x| c(1.0 + x))).unwrap();
    let forcing = g.multiply(amp, src).unwrap();
    let f = g.add(u3, forcing).unwrap();
    let f = g.convert(f, 2).unwrap();
    let z = g.constant_scalar(c(0.0));
    let rhs = RhsMap::new(&g, vec![RhsBlock::new(vec![z, bc], Some(f), n)]).unwrap();
    let state = StateLayout::new(&g, &[u]).unwrap();
    let mut s = Nlbvp::new(lhs, g, rhs, state).unwrap();
    s.tolerance = 1e-12;
    (s, amp, bc)
}

#[test]
fn nlbvp_gradient_matches_central_difference() {
    let n = 24;
    let (mut s, amp, bc) = nonlinear_bvp(n);
    let x0 = s.solve(&vec![c(0.0); n]).unwrap();
    let cot = s.vjp(&x0).unwrap();
    for (leaf, p0) in [(amp, 0.8), (bc, 0.3)] {
        let grad = 2.0 * cot.coeffs(leaf).unwrap()[0].re;
        let eps = 1e-5;
        let mut j = |p: f64| {
            s.graph.bind_scalar(leaf, c(p)).unwrap();
            let x = s.solve(&x0).unwrap();
            dot(&x, &x).re
        };
        let fd = (j(p0 + eps) - j(p0 - eps)) / (2.0 * eps);
        j(p0);
        assert!(((grad - fd) / fd).abs() <= 1e-6, "{grad} vs {fd}");
    }
}

#[test]
fn nlbvp_dot_test() {
    let n = 16;
    let (mut s, amp, bc) = nonlinear_bvp(n);
    s.solve(&vec![c(0.0); n]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gv = rand_vec(&mut rng, n);
    let (ta, tb) = (rand_vec(&mut rng, 1), rand_vec(&mut rng, 1));
    let before = factorization_count();
    let jv = s.jvp(&[(amp, &ta), (bc, &tb)]).unwrap();
    let cot = s.vjp(&gv).unwrap();
    assert_eq!(factorization_count(), before);
    let lhs = dot(&gv, &jv);
    let rhs = dot(cot.coeffs(amp).unwrap(), &ta) + dot(cot.coeffs(bc).unwrap(), &tb);
    assert!((lhs - rhs).norm() <= 1e-11 * lhs.norm());
}

/// `u'' = lambda u` with Dirichlet conditions as `(lambda M + L) u = 0`.
fn dirichlet_laplacian(n: usize, interval: (f64, f64)) -> Evp {
    let b = Basis::chebyshev(n, interval).unwrap();
    let zero = vec![vec![C64::default(); n]; 2];
    let mass = tau_matrix(&zero, &conversion_operator(&b, 0, 2).unwrap().matrix).unwrap();
    let d2 = differentiation_operator(&b, 2).matrix.scaled(c(-1.0));
    let stiffness = tau_matrix(&dirichlet_rows(&b), &d2).unwrap();
    Evp { mass, stiffness }
}

#[test]
fn evp_dirichlet_spectrum() {
    let evp = dirichlet_laplacian(64, (0.0, PI));
    let sol = solve_evp(&evp, false).unwrap();
    for k in 1..=5 {
        let target = -((k * k) as f64);
        assert!((sol.values[k - 1] - c(target)).norm() <= 1e-9, "{} vs {target}", sol.values[k - 1]);
        assert!(sol.relative_residual(&evp, k - 1) <= 1e-10);
    }
}

#[test]
fn evp_with_zero_mass_rows_finds_every_finite_pair() {
    // det(lambda M + L) has degree n - k for generic M with k zero rows, so
    // n - k distinct pairs with small residuals are the whole finite spectrum
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 14;
    let mut m = rand_dense(&mut rng, n);
    for r in [0, 5, 13] {
        m.row_mut(r).iter_mut().for_each(|v| *v = C64::default());
    }
    let evp = Evp { mass: Matrix::Dense(m), stiffness: Matrix::Dense(rand_dense(&mut rng, n)) };
    let sol = solve_evp(&evp, true).unwrap();
    assert_eq!(sol.values.len(), n - 3);
    let left = sol.left.as_ref().unwrap();
    for i in 0..sol.values.len() {
        assert!(sol.relative_residual(&evp, i) <= 1e-10, "{i}: {:e}", sol.relative_residual(&evp, i));
        assert!((norm(&sol.right[i]) - 1.0).abs() < 1e-12);
        let lam = sol.values[i].conj();
        let r: Vec<C64> = evp
            .mass
            .matvec(&left[i], Mode::Adjoint)
            .iter()
            .zip(evp.stiffness.matvec(&left[i], Mode::Adjoint))
            .map(|(m, l)| lam * m + l)
            .collect();
        assert!(norm(&r) <= 1e-10 * (evp.stiffness.max_abs() + lam.norm() * evp.mass.max_abs()), "{i}: {:e}", norm(&r));
        for j in 0..i {
            assert!((sol.values[i] - sol.values[j]).norm() > 1e-6);
        }
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let a = rand_dense(rng, n);
    DenseMatrix::lincomb(c(0.5), &a, c(0.5), &a.conj_transpose()).unwrap()
}

#[test]
fn evp_hermitian_left_equals_right() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 16;
    let evp = Evp { mass: Matrix::identity(n), stiffness: Matrix::Dense(random_hermitian(&mut rng, n)) };
    let sol = solve_evp(&evp, true).unwrap();
    let left = sol.left.as_ref().unwrap();
    assert_eq!(sol.values.len(), n);
    for i in 0..n {
        assert!(sol.values[i].im.abs() < 1e-12);
        let overlap = dot(&left[i], &sol.right[i]).norm() / (norm(&left[i]) * norm(&sol.right[i]));
        assert!(overlap >= 1.0 - 1e-10, "{overlap}");
        assert!(sol.relative_residual(&evp, i) <= 1e-10);
    }
}

#[test]
fn evp_biorthogonality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 20;
    let evp = Evp { mass: Matrix::Dense(rand_dense(&mut rng, n)), stiffness: Matrix::Dense(rand_dense(&mut rng, n)) };
    let sol = solve_evp(&evp, true).unwrap();
    let left = sol.left.as_ref().unwrap();
    assert_eq!(sol.values.len(), n);
    for i in 0..n {
        // left vectors satisfy the adjoint pencil
        let lam = sol.values[i].conj();
        let r: Vec<C64> = evp
            .mass
            .matvec(&left[i], Mode::Adjoint)
            .iter()
            .zip(evp.stiffness.matvec(&left[i], Mode::Adjoint))
            .map(|(m, l)| lam * m + l)
            .collect();
        assert!(norm(&r) <= 1e-10 * (evp.stiffness.max_abs() + lam.norm() * evp.mass.max_abs()));
        for j in 0..n {
            if i != j {
                let mx = evp.mass.matvec(&sol.right[j], Mode::Normal);
                let v = dot(&left[i], &mx).norm() / (norm(&left[i]) * norm(&mx));
                assert!(v <= 1e-9, "({i},{j}) {v:e}");
            }
        }
    }
}

#[test]
fn evp_repeated_eigenvalue_is_ambiguous() {
    let d = BandedMatrix::from_diagonal(&[c(1.0), c(1.0), c(2.0)]);
    let evp = Evp { mass: Matrix::identity(3), stiffness: Matrix::Banded(d) };
    assert!(solve_evp(&evp, false).is_ok());
    match solve_evp(&evp, true) {
        Err(Error::AmbiguousPairing { candidates, .. }) => assert_eq!(candidates.len(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn evp_rejects_non_finite_entries() {
    let d = BandedMatrix::from_diagonal(&[c(1.0), c(f64::NAN)]);
    let evp = Evp { mass: Matrix::identity(2), stiffness: Matrix::Banded(d) };
    assert!(matches!(solve_evp(&evp, false), Err(Error::Contract(_))));
}

#[test]
fn eigenvalue_sensitivity_scalar_pencil() {
    let p = 2.5;
    let evp = Evp { mass: Matrix::identity(1), stiffness: Matrix::Dense(DenseMatrix::from_rows(1, 1, vec![c(-p)]).unwrap()) };
    let sol = solve_evp(&evp, true).unwrap();
    assert!((sol.values[0] - c(p)).norm() < 1e-14);
    let dl = Matrix::Dense(DenseMatrix::from_rows(1, 1, vec![c(-1.0)]).unwrap());
    let y = &sol.left.as_ref().unwrap()[0];
    let d = eigenvalue_sensitivity(&evp, sol.values[0], &sol.right[0], y, None, Some(&dl)).unwrap();
    assert!((d - c(1.0)).norm() < 1e-14);
}

#[test]
fn spectrum_shift_sensitivities() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10;
    let evp = Evp { mass: Matrix::Dense(rand_dense(&mut rng, n)), stiffness: Matrix::Dense(rand_dense(&mut rng, n)) };
    // L(p) = L0 + p M shifts every eigenvalue by -1
    let sol = solve_evp(&evp, true).unwrap();
    let left = sol.left.as_ref().unwrap();
    for i in 0..n {
        let d = eigenvalue_sensitivity(&evp, sol.values[i], &sol.right[i], &left[i], None, Some(&evp.mass)).unwrap();
        assert!((d + c(1.0)).norm() < 1e-9, "{d}");
        let dx = eigenvector_sensitivity(&evp, sol.values[i], &sol.right[i], &left[i], d, None, Some(&evp.mass)).unwrap();
        assert!(norm(&dx) < 1e-8, "{}", norm(&dx));
    }
    // and with M = I, L(p) = L0 + p I
    let evp = Evp { mass: Matrix::identity(n), stiffness: Matrix::Dense(rand_dense(&mut rng, n)) };
    let sol = solve_evp(&evp, true).unwrap();
    let left = sol.left.as_ref().unwrap();
    let ident = Matrix::identity(n);
    for i in 0..n {
        let d = eigenvalue_sensitivity(&evp, sol.values[i], &sol.right[i], &left[i], None, Some(&ident)).unwrap();
        assert!((d + c(1.0)).norm() < 1e-10);
    }
}

#[test]
fn two_by_two_symbolic_sensitivity() {
    // -L = [[0, p], [1, 0]]: lambda = sqrt(p), X = (sqrt(p), 1) / sqrt(1 + p)
    let p: f64 = 2.0;
    let stiff = DenseMatrix::from_rows(2, 2, vec![c(0.0), c(-p), c(-1.0), c(0.0)]).unwrap();
    let evp = Evp { mass: Matrix::identity(2), stiffness: Matrix::Dense(stiff) };
    let sol = solve_evp(&evp, true).unwrap();
    let s = p.sqrt();
    assert!((sol.values[0] - c(s)).norm() < 1e-14);
    let x = &sol.right[0];
    assert!(rel_diff(x, &[c(s / (1.0 + p).sqrt()), c(1.0 / (1.0 + p).sqrt())]) < 1e-14);
    let dl = Matrix::Dense(DenseMatrix::from_rows(2, 2, vec![c(0.0), c(-1.0), c(0.0), c(0.0)]).unwrap());
    let y = &sol.left.as_ref().unwrap()[0];
    let dlam = eigenvalue_sensitivity(&evp, sol.values[0], x, y, None, Some(&dl)).unwrap();
    assert!((dlam - c(1.0 / (2.0 * s))).norm() < 1e-14);
    let dx = eigenvector_sensitivity(&evp, sol.values[0], x, y, dlam, None, Some(&dl)).unwrap();
    let q = (1.0 + p).powf(1.5);
    let expect = [c(1.0 / (2.0 * s * q)), c(-1.0 / (2.0 * q))];
    assert!(rel_diff(&dx, &expect) < 1e-13, "{dx:?} vs {expect:?}");
}

/// Pencil `(M0 + p M1, L0 + p L1)` with random dense parts.
struct Family {
    m: [DenseMatrix; 2],
    l: [DenseMatrix; 2],
}

impl Family {
    fn at(&self, p: f64) -> Evp {
        Evp {
            mass: Matrix::Dense(DenseMatrix::lincomb(c(1.0), &self.m[0], c(p), &self.m[1]).unwrap()),
            stiffness: Matrix::Dense(DenseMatrix::lincomb(c(1.0), &self.l[0], c(p), &self.l[1]).unwrap()),
        }
    }
}

#[test]
fn sensitivities_match_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 12;
    let mut m0 = rand_dense(&mut rng, n);
    for i in 0..n {
        m0.add_to(i, i, c(4.0));
    }
    let fam = Family { m: [m0, rand_dense(&mut rng, n)], l: [rand_dense(&mut rng, n), rand_dense(&mut rng, n)] };
    let p0 = 0.3;
    let evp = fam.at(p0);
    let sol = solve_evp(&evp, true).unwrap();
    let left = sol.left.as_ref().unwrap();
    let (dm, dl) = (Matrix::Dense(fam.m[1].clone()), Matrix::Dense(fam.l[1].clone()));
    let eps = 1e-5;
    let (sp, sm) = (solve_evp(&fam.at(p0 + eps), false).unwrap(), solve_evp(&fam.at(p0 - eps), false).unwrap());
    for i in 0..n {
        let lam = sol.values[i];
        let x0 = &sol.right[i];
        let dlam = eigenvalue_sensitivity(&evp, lam, x0, &left[i], Some(&dm), Some(&dl)).unwrap();
        let (ip, im) = (sp.nearest(lam).unwrap(), sm.nearest(lam).unwrap());
        let fd = (sp.values[ip] - sm.values[im]) / (2.0 * eps);
        assert!((dlam - fd).norm() <= 1e-5 * dlam.norm(), "eigenvalue {i}: {dlam} vs {fd}");

        let dx = eigenvector_sensitivity(&evp, lam, x0, &left[i], dlam, Some(&dm), Some(&dl)).unwrap();
        // Fredholm: the bordered solution satisfies the singular system
        let a = Matrix::lincomb(lam, &evp.mass, c(1.0), &evp.stiffness).unwrap();
        let lhs = a.matvec(&dx, Mode::Normal);
        let mx = evp.mass.matvec(x0, Mode::Normal);
        let rhs: Vec<C64> = mx
            .iter()
            .zip(dm.matvec(x0, Mode::Normal))
            .zip(dl.matvec(x0, Mode::Normal))
            .map(|((m, a), b)| -(dlam * m + lam * a + b))
            .collect();
        assert!(rel_diff(&lhs, &rhs) <= 1e-9);
        assert!(dot(x0, &dx).norm() <= 1e-12 * norm(&dx));
        // phase-aligned finite difference
        let align = |v: &[C64]| -> Vec<C64> {
            let s = dot(x0, x0) / dot(x0, v);
            v.iter().map(|z| z * s).collect()
        };
        let (xp, xm) = (align(&sp.right[ip]), align(&sm.right[im]));
        let fdx: Vec<C64> = xp.iter().zip(&xm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        assert!(rel_diff(&dx, &fdx) <= 1e-5, "eigenvector {i}: {:e}", rel_diff(&dx, &fdx));
    }
}

#[test]
fn sensitivity_input_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 6;
    let evp = Evp { mass: Matrix::identity(n), stiffness: Matrix::Dense(rand_dense(&mut rng, n)) };
    let sol = solve_evp(&evp, true).unwrap();
    let (x, y) = (&sol.right[0], &sol.left.as_ref().unwrap()[0]);
    let dl = Matrix::Dense(rand_dense(&mut rng, n));
    let dlam = eigenvalue_sensitivity(&evp, sol.values[0], x, y, None, Some(&dl)).unwrap();
    let wrong = dlam + c(0.1);
    assert!(matches!(
        eigenvector_sensitivity(&evp, sol.values[0], x, y, wrong, None, Some(&dl)),
        Err(Error::InconsistentInputs { .. })
    ));
    // a left vector orthogonal to M X
    let mut z = rand_vec(&mut rng, n);
    let s = dot(x, &z) / dot(x, x);
    z.iter_mut().zip(x).for_each(|(a, b)| *a -= s * b);
    assert!(matches!(
        eigenvalue_sensitivity(&evp, sol.values[0], x, &z, None, Some(&dl)),
        Err(Error::DegenerateEigenvalue { .. })
    ));
}

#[test]
fn tau_matrix_places_rows_on_top() {
    let b = Basis::chebyshev(8, (-1.0, 1.0)).unwrap();
    let m = tau_matrix(&dirichlet_rows(&b), &differentiation_operator(&b, 2).matrix).unwrap();
    let d = m.to_dense();
    let rows = dirichlet_rows(&b);
    for j in 0..8 {
        assert_eq!(d.get(0, j), rows[0][j]);
        assert_eq!(d.get(1, j), rows[1][j]);
        assert_eq!(d.get(2, j), differentiation_operator(&b, 2).matrix.get(0, j));
    }
    let _ = LuFactors::factor(&m).unwrap();
}
