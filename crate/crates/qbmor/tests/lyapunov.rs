mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use qbmor::lowrank::{factorize_psd, truncate_factor, LowRankFactor};
use qbmor::lyapunov::{decay_bound, decay_violation, solve_lyapunov, spectral_abscissa, DecayMethod, LyapunovSolver};
use qbmor::QbError;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

#[test]
fn scalar_examples() {
    let x = solve_lyapunov(&scalar(-1.0), &scalar(2.0)).unwrap();
    assert!((x.x[(0, 0)] - 1.0).abs() < 1e-15);
    let x = solve_lyapunov(&scalar(-2.0), &scalar(4.0)).unwrap();
    assert!((x.x[(0, 0)] - 1.0).abs() < 1e-15);
    assert!(x.residual < 1e-15);
}

#[test]
fn matches_kronecker_oracle_for_random_stable_matrices() {
    let mut rng = rng(11);
    for n in 1..=10 {
        let a = stable_matrix(&mut rng, n, 0.3);
        let g = randn(&mut rng, n, 2);
        let w = &g * g.transpose();
        let sol = solve_lyapunov(&a, &w).unwrap();
        let oracle = kron_lyapunov(&a, &w);
        assert!(rel_err(&sol.x, &oracle) < 1e-10, "n = {n}");
        assert!(sol.residual <= 1e-10);
        assert!((&sol.x - sol.x.transpose()).norm() <= 1e-12 * sol.x.norm());
        let eig = sol.x.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-12 * eig.max());
    }
}

#[test]
fn complex_pairs_and_transposed_solve() {
    // rotation blocks give complex conjugate eigenvalues
    let a = DMatrix::from_row_slice(4, 4, &[
        -0.5, 3.0, 0.2, 0.0, //
        -3.0, -0.5, 0.0, 1.0, //
        0.0, 0.0, -1.0, 5.0, //
        0.0, 0.0, -5.0, -1.0,
    ]);
    let mut rng = rng(3);
    let g = randn(&mut rng, 4, 4);
    let w = &g + g.transpose();
    let solver = LyapunovSolver::new(&a).unwrap();
    assert!(solver.eigenvalues().iter().all(|l| l.im != 0.0));
    let x = solver.solve(&w).unwrap();
    assert!(rel_err(&x.x, &kron_lyapunov(&a, &w)) < 1e-10);
    let xt = solver.solve_transposed(&w).unwrap();
    assert!(rel_err(&xt.x, &kron_lyapunov(&a.transpose(), &w)) < 1e-10);
}

#[test]
fn factored_solves_agree_with_dense() {
    let mut rng = rng(5);
    let a = stable_matrix(&mut rng, 7, 0.2);
    let f = randn(&mut rng, 7, 3);
    let solver = LyapunovSolver::new(&a).unwrap();
    let dense = solver.solve(&(&f * f.transpose())).unwrap();
    let factored = solver.solve_factored(&f).unwrap();
    assert!(rel_err(&factored.x, &dense.x) < 1e-12);
    assert!(rel_err(&factored.factor.to_dense(), &dense.x) < 1e-10);
    let dual = solver.solve_transposed_factored(&f).unwrap();
    assert!(rel_err(&dual.x, &kron_lyapunov(&a.transpose(), &(&f * f.transpose()))) < 1e-10);
}

#[test]
fn zero_rhs_is_well_defined() {
    let sol = solve_lyapunov(&(-DMatrix::identity(3, 3)), &DMatrix::zeros(3, 3)).unwrap();
    assert_eq!(sol.x.norm(), 0.0);
    assert_eq!(sol.residual, 0.0);
    assert_eq!(sol.factor.to_dense().norm(), 0.0);
}

#[test]
fn unstable_matrix_reports_eigenvalue() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5]));
    match solve_lyapunov(&a, &DMatrix::identity(2, 2)).unwrap_err() {
        QbError::Unstable { re, .. } => assert!((re - 0.5).abs() < 1e-14),
        other => panic!("unexpected error {other}"),
    }
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    assert!(matches!(solve_lyapunov(&rot, &DMatrix::identity(2, 2)), Err(QbError::Unstable { .. })));
}

#[test]
fn asymmetric_rhs_is_rejected() {
    let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    let err = solve_lyapunov(&(-DMatrix::identity(2, 2)), &w).unwrap_err();
    assert!(matches!(err, QbError::NotSymmetric(_)), "{err}");
}

#[test]
fn spectral_abscissa_examples() {
    assert_eq!(spectral_abscissa(&(-DMatrix::identity(3, 3))).unwrap(), -1.0);
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    assert!(spectral_abscissa(&rot).unwrap().abs() < 1e-15);
    // companion matrix of s² + 4s + 3
    let comp = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -4.0]);
    assert!((spectral_abscissa(&comp).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn decay_bound_examples() {
    let d = decay_bound(&DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]))).unwrap();
    assert_eq!(d.method, DecayMethod::NormalExact);
    assert_eq!(d.beta, 1.0);
    assert!((d.alpha - 0.999).abs() < 1e-12);

    let d = decay_bound(&scalar(-2.0)).unwrap();
    assert!((d.alpha - 1.998).abs() < 1e-12);
    assert_eq!(d.beta, 1.0);

    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 100.0, 0.0, -1.01]);
    let d = decay_bound(&a).unwrap();
    assert!(d.beta > 10.0, "beta = {}", d.beta);
    assert!(decay_violation(&a, &d) <= 1e-8 * d.beta);

    assert!(decay_bound(&scalar(0.1)).is_err());
}

#[test]
fn decay_certificate_holds_for_random_matrices() {
    let mut rng = rng(8);
    for n in [2, 4, 6] {
        let a = stable_matrix(&mut rng, n, 0.4);
        let d = decay_bound(&a).unwrap();
        assert!(d.beta >= 1.0);
        assert!(decay_violation(&a, &d) <= 1e-8 * d.beta, "n = {n}");
    }
}

#[test]
fn factorize_psd_examples() {
    let id = factorize_psd(&DMatrix::identity(3, 3), 1e-12).unwrap();
    assert!(rel_err(&id.factor.to_dense(), &DMatrix::identity(3, 3)) < 1e-15);

    let x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-16]));
    assert_eq!(factorize_psd(&x, 1e-12).unwrap().factor.rank(), 1);

    let mut rng = rng(2);
    let g = randn(&mut rng, 8, 3);
    let x = &g * g.transpose();
    let f = factorize_psd(&x, 1e-12).unwrap();
    assert_eq!(f.factor.rank(), 3);
    assert!(rel_err(&f.factor.to_dense(), &x) < 1e-12);

    let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -0.5]));
    let f = factorize_psd(&indefinite, 1e-12).unwrap();
    assert_eq!(f.factor.rank(), 1);
    assert!((f.negative_mass - 0.5).abs() < 1e-15);
}

#[test]
fn truncate_factor_examples() {
    let mut rng = rng(4);
    let z = randn(&mut rng, 10, 6);
    let full = LowRankFactor::new(z.clone());
    let exact = truncate_factor(&full, 0.0).unwrap();
    assert_eq!(exact.rank(), 6);
    assert!(rel_err(&exact.to_dense(), &full.to_dense()) < 1e-12);

    let mut dup = DMatrix::zeros(10, 4);
    dup.columns_mut(0, 3).copy_from(&z.columns(0, 3));
    dup.column_mut(3).copy_from(&z.column(0));
    let t = truncate_factor(&LowRankFactor::new(dup), 1e-14).unwrap();
    assert_eq!(t.rank(), 3);

    let d = DVector::from_fn(6, |i, _| 0.3f64.powi(i as i32));
    let weighted = LowRankFactor::weighted(z, d).unwrap();
    let target = weighted.to_dense();
    let t = truncate_factor(&weighted, 1e-2).unwrap();
    assert!(t.rank() < 6);
    assert!((&t.to_dense() - &target).norm() <= 1e-2 * target.norm());
    // the kept part is the leading eigenspace of the target
    let eig = target.clone().symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let tail: f64 = ev[t.rank()..].iter().map(|l| l * l).sum::<f64>().sqrt();
    assert!(((&t.to_dense() - &target).norm() - tail).abs() < 1e-10 * target.norm());
    let cols = t.scaled();
    let gram = cols.transpose() * &cols;
    let off = &gram - DMatrix::from_diagonal(&gram.diagonal());
    assert!(off.norm() < 1e-10 * gram.norm());
}

#[test]
fn truncate_rejects_bad_tau() {
    let f = LowRankFactor::new(DMatrix::identity(2, 2));
    assert!(truncate_factor(&f, 1.0).is_err());
    assert!(truncate_factor(&f, -0.1).is_err());
}
