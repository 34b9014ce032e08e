use adspec_core::linalg::*;
use adspec_core::{Error, C64};
use faer::linalg::solvers::Solve;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    d / norm(b).max(1e-300)
}

/// Independent dense solve of `A x = b` or `A^H x = b`.
fn dense_oracle(a: &DenseMatrix, b: &[C64], mode: Mode) -> Vec<C64> {
    let n = a.rows();
    let m = faer::Mat::from_fn(n, n, |i, j| match mode {
        Mode::Normal => a.get(i, j),
        Mode::Adjoint => a.get(j, i).conj(),
    });
    let rhs = faer::Mat::from_fn(n, 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    (0..n).map(|i| x[(i, 0)]).collect()
}

fn random_banded(rng: &mut ChaCha8Rng, n: usize, kl: usize, ku: usize, diag_boost: f64) -> BandedMatrix {
    let mut a = BandedMatrix::zeros(n, n, kl, ku);
    for i in 0..n {
        for j in a.row_span(i) {
            let mut v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if i == j {
                v += diag_boost;
            }
            a.set(i, j, v);
        }
    }
    a
}

#[test]
fn identity_factors_solve_trivially() {
    let a = Matrix::identity(6);
    let f = LuFactors::factor(&a).unwrap();
    let b: Vec<C64> = (0..6).map(|i| C64::new(i as f64, -1.0)).collect();
    assert_eq!(f.solve(&b, Mode::Normal).unwrap(), b);
    assert_eq!(f.solve(&b, Mode::Adjoint).unwrap(), b);
}

#[test]
fn diagonal_adjoint_solve() {
    let a = Matrix::Banded(BandedMatrix::from_diagonal(&[C64::new(2.0, 0.0); 4]));
    let f = LuFactors::factor(&a).unwrap();
    let x = f.solve(&[C64::new(1.0, 0.0); 4], Mode::Adjoint).unwrap();
    assert!(x.iter().all(|v| (v - 0.5).norm() < 1e-16));
}

#[test]
fn tridiagonal_matches_dense_oracle() {
    let n = 8;
    let mut a = BandedMatrix::zeros(n, n, 1, 1);
    for i in 0..n {
        a.set(i, i, C64::new(2.0, 0.0));
        if i > 0 {
            a.set(i, i - 1, C64::new(-1.0, 0.0));
            a.set(i - 1, i, C64::new(-1.0, 0.0));
        }
    }
    let b: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64, 0.5)).collect();
    let f = LuFactors::factor(&Matrix::Banded(a.clone())).unwrap();
    let x = f.solve(&b, Mode::Normal).unwrap();
    assert!(rel_err(&x, &dense_oracle(&a.to_dense(), &b, Mode::Normal)) <= 1e-13);
}

#[test]
fn complex_banded_adjoint_matches_dense_conjugate_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (kl, ku) in [(0, 0), (1, 2), (3, 1), (2, 5)] {
        let a = random_banded(&mut rng, 30, kl, ku, 0.0);
        let f = LuFactors::factor(&Matrix::Banded(a.clone())).unwrap();
        let b = rand_vec(&mut rng, 30);
        for mode in [Mode::Normal, Mode::Adjoint] {
            let x = f.solve(&b, mode).unwrap();
            assert!(rel_err(&x, &dense_oracle(&a.to_dense(), &b, mode)) <= 1e-12, "kl={kl} ku={ku} {mode:?}");
        }
    }
}

#[test]
fn pivoting_handles_zero_diagonal() {
    // Banded with a zero on the diagonal forces a row interchange.
    let mut a = BandedMatrix::zeros(4, 4, 1, 1);
    a.set(0, 1, C64::new(1.0, 0.0));
    a.set(1, 0, C64::new(1.0, 0.0));
    a.set(1, 2, C64::new(2.0, 0.0));
    a.set(2, 1, C64::new(3.0, 1.0));
    a.set(2, 3, C64::new(1.0, 0.0));
    a.set(3, 2, C64::new(-1.0, 0.0));
    a.set(3, 3, C64::new(0.5, 0.0));
    let f = LuFactors::factor(&Matrix::Banded(a.clone())).unwrap();
    let b = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(2.0, 0.0), C64::new(-1.0, 0.0)];
    for mode in [Mode::Normal, Mode::Adjoint] {
        let x = f.solve(&b, mode).unwrap();
        assert!(rel_err(&x, &dense_oracle(&a.to_dense(), &b, mode)) <= 1e-13);
    }
}

#[test]
fn singular_matrix_reports_pivot() {
    let mut a = BandedMatrix::zeros(3, 3, 0, 1);
    a.set(0, 0, C64::new(1.0, 0.0));
    a.set(0, 1, C64::new(1.0, 0.0));
    a.set(2, 2, C64::new(1.0, 0.0));
    match LuFactors::factor(&Matrix::Banded(a)) {
        Err(Error::Singular { pivot, .. }) => assert_eq!(pivot, 1),
        other => panic!("expected singular error, got {other:?}"),
    }
}

#[test]
fn bordered_system_matches_dense_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = 20;
    let t = 2;
    let core = random_banded(&mut rng, m, 2, 3, 4.0);
    let cols = DenseMatrix::from_rows(m, t, rand_vec(&mut rng, m * t)).unwrap();
    let rows = DenseMatrix::from_rows(t, m, rand_vec(&mut rng, m * t)).unwrap();
    let corner = DenseMatrix::from_rows(t, t, rand_vec(&mut rng, t * t)).unwrap();
    let bm = BorderedMatrix::new(core, cols, rows, corner).unwrap();
    let dense = bm.to_dense();
    let a = Matrix::Bordered(bm);
    let f = LuFactors::factor(&a).unwrap();
    let b = rand_vec(&mut rng, m + t);
    for mode in [Mode::Normal, Mode::Adjoint] {
        let x = f.solve(&b, mode).unwrap();
        assert!(rel_err(&x, &dense_oracle(&dense, &b, mode)) <= 1e-12, "{mode:?}");
        let mx = a.matvec(&x, mode);
        assert!(rel_err(&mx, &b) <= 1e-11);
    }
}

#[test]
fn tau_layout_bordered_matches_dense() {
    // Square matrix whose first two rows are dense boundary rows.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 16;
    let t = 2;
    let top = DenseMatrix::from_rows(t, n, rand_vec(&mut rng, t * n)).unwrap();
    let mut rest = BandedMatrix::zeros(n - t, n, 0, 4);
    for i in 0..n - t {
        for j in rest.row_span(i) {
            rest.set(i, j, C64::new(rng.gen_range(-1.0..1.0), 0.3));
        }
        rest.set(i, i + t, C64::new(3.0, 0.0));
    }
    let bm = BorderedMatrix::from_tau_rows(&top, &rest).unwrap();
    let mut dense = DenseMatrix::zeros(n, n);
    for i in 0..t {
        for j in 0..n {
            dense.set(i, j, top.get(i, j));
        }
    }
    for (i, j, v) in rest.entries() {
        dense.set(i + t, j, v);
    }
    assert_eq!(bm.to_dense(), dense);
    let a = Matrix::Bordered(bm);
    let x = rand_vec(&mut rng, n);
    for mode in [Mode::Normal, Mode::Adjoint] {
        assert!(rel_err(&a.matvec(&x, mode), &dense.matvec(&x, mode)) <= 1e-14);
    }
    let f = LuFactors::factor(&a).unwrap();
    for mode in [Mode::Normal, Mode::Adjoint] {
        let sol = f.solve(&x, mode).unwrap();
        assert!(rel_err(&sol, &dense_oracle(&dense, &x, mode)) <= 1e-12);
    }
}

#[test]
fn dense_lu_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 40;
    let a = DenseMatrix::from_rows(n, n, rand_vec(&mut rng, n * n)).unwrap();
    let f = LuFactors::factor(&Matrix::Dense(a.clone())).unwrap();
    let b = rand_vec(&mut rng, n);
    for mode in [Mode::Normal, Mode::Adjoint] {
        let x = f.solve(&b, mode).unwrap();
        assert!(rel_err(&x, &dense_oracle(&a, &b, mode)) <= 1e-11, "{mode:?}");
    }
}

#[test]
fn one_factorization_serves_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_banded(&mut rng, 25, 2, 2, 3.0);
    let before = factorization_count();
    let f = LuFactors::factor(&Matrix::Banded(a.clone())).unwrap();
    let b = rand_vec(&mut rng, 25);
    let x_adj = f.solve(&b, Mode::Adjoint).unwrap();
    let _ = f.solve(&b, Mode::Normal).unwrap();
    assert_eq!(factorization_count() - before, 1);
    // factoring A^H separately gives the same answer
    let ah = a.to_dense().conj_transpose();
    let fh = LuFactors::factor(&Matrix::Dense(ah)).unwrap();
    let x_sep = fh.solve(&b, Mode::Normal).unwrap();
    assert!(rel_err(&x_adj, &x_sep) <= 1e-12);
}

#[test]
fn banded_residual_for_moderately_conditioned_system() {
    // Diagonally scaled tridiagonal with condition number around 1e8.
    let n = 60;
    let mut a = BandedMatrix::zeros(n, n, 1, 1);
    for i in 0..n {
        let s = 10f64.powf(8.0 * i as f64 / (n - 1) as f64);
        a.set(i, i, C64::new(2.0 * s, 0.0));
        if i > 0 {
            a.set(i, i - 1, C64::new(-0.5 * s, 0.1 * s));
        }
        if i + 1 < n {
            a.set(i, i + 1, C64::new(-0.5 * s, 0.0));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b = rand_vec(&mut rng, n);
    let m = Matrix::Banded(a);
    let f = LuFactors::factor(&m).unwrap();
    for mode in [Mode::Normal, Mode::Adjoint] {
        let x = f.solve(&b, mode).unwrap();
        assert!(rel_err(&m.matvec(&x, mode), &b) <= 1e-11, "{mode:?}");
    }
}

#[test]
fn matvec_examples() {
    let x = vec![C64::new(1.0, 2.0), C64::new(-3.0, 0.5)];
    assert_eq!(Matrix::identity(2).matvec(&x, Mode::Normal), x);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn banded_matvec_matches_dense(seed in any::<u64>(), n in 1usize..25, kl in 0usize..4, ku in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_banded(&mut rng, n, kl, ku, 0.0);
        let d = a.to_dense();
        let x = rand_vec(&mut rng, n);
        for mode in [Mode::Normal, Mode::Adjoint] {
            prop_assert!(rel_err(&a.matvec(&x, mode), &d.matvec(&x, mode)) <= 1e-14);
        }
        let y = rand_vec(&mut rng, n);
        let lhs = dot(&y, &a.matvec(&x, Mode::Normal));
        let rhs = dot(&a.matvec(&y, Mode::Adjoint), &x);
        prop_assert!((lhs - rhs).norm() <= 1e-14 * lhs.norm().max(1.0));
    }

    #[test]
    fn adjoint_solve_dot_test(seed in any::<u64>(), n in 2usize..40, kl in 0usize..4, ku in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_banded(&mut rng, n, kl, ku, 3.0);
        let f = LuFactors::factor(&Matrix::Banded(a)).unwrap();
        let b = rand_vec(&mut rng, n);
        let y = rand_vec(&mut rng, n);
        let lhs = dot(&y, &f.solve(&b, Mode::Normal).unwrap());
        let rhs = dot(&f.solve(&y, Mode::Adjoint).unwrap(), &b);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }
}
