mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use qbmor::balancing::{balance_and_reduce, balancing_transform, hankel_values, normalized_hankel_values};
use qbmor::gramians::{iterate_gramians, truncated_gramians, GramianKind, GramianPair, IterOptions};
use qbmor::lowrank::LowRankFactor;
use qbmor::lyapunov::DEFAULT_CLIP_TOL;
use qbmor::models::{scalar_system, ScalarExample};
use qbmor::simulate::{compare_outputs, lyapunov_certificate, Method};
use qbmor::{integrate, QbError, QbSystem};

fn pair_from(p: &DMatrix<f64>, q: &DMatrix<f64>) -> GramianPair {
    let n = p.nrows();
    GramianPair {
        r: LowRankFactor::new(psd_sqrt(p)),
        s: LowRankFactor::new(psd_sqrt(q)),
        kind: GramianKind::Iterated,
        iterations: 1,
        residuals: (0.0, 0.0),
        shift: 0.0,
        linear: (LowRankFactor::zeros(n), LowRankFactor::zeros(n)),
        traces: vec![],
    }
}

fn random_spd(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = randn(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n) * 0.1
}

#[test]
fn scalar_values_and_transform() {
    let sys = scalar_system(ScalarExample::STANDARD).unwrap();
    let pair = truncated_gramians(&sys, DEFAULT_CLIP_TOL).unwrap();
    let hsv = hankel_values(&pair);
    assert!((hsv[0] - 1.25).abs() < 1e-14);
    assert_eq!(normalized_hankel_values(&pair)[0], 1.0);
    let bt = balancing_transform(&sys, &pair).unwrap();
    // T = √(P/σ) = 1
    assert!((bt.t[(0, 0)] - (1.25f64 / 1.25).sqrt()).abs() < 1e-14);
    let t = bt.t[(0, 0)];
    let (p, q) = (pair.p()[(0, 0)], pair.q()[(0, 0)]);
    assert!((p / (t * t) - 1.25).abs() < 1e-14);
    assert!((q * t * t - 1.25).abs() < 1e-14);
}

#[test]
fn linear_values_match_classical_square_root_bt() {
    let mut rng = rng(41);
    let sys = random_linear(&mut rng, 8, 2, 2);
    let pair = truncated_gramians(&sys, 0.0).unwrap();
    let oracle = classical_bt(sys.a(), sys.b(), sys.c(), 4);
    let hsv = hankel_values(&pair);
    let k = hsv.len().min(oracle.hsv.len());
    let diff = (hsv.rows(0, k) - oracle.hsv.rows(0, k)).norm() / oracle.hsv.norm();
    assert!(diff < 1e-10, "{diff}");

    let model = balance_and_reduce(&sys, &pair, 4).unwrap();
    assert_eq!(model.radius, Some(f64::INFINITY));
    let classical = QbSystem::linear(oracle.a.clone(), oracle.b.clone(), oracle.c.clone()).unwrap();
    let u = random_input(&mut rng, 2, 4.0, 0.25, 1.0);
    let x0 = DVector::zeros(4);
    let ours = integrate(&model.sys_hat, &u, (0.0, 4.0), 1e-3, Method::Rk4, &x0).unwrap();
    let theirs = integrate(&classical, &u, (0.0, 4.0), 1e-3, Method::Rk4, &x0).unwrap();
    let cmp = compare_outputs(&theirs, &ours).unwrap();
    assert!(cmp.rel_l2 < 1e-10, "{}", cmp.rel_l2);
}

#[test]
fn full_order_reduction_preserves_input_output_map() {
    let mut rng = rng(42);
    let sys = random_qb(&mut rng, 6, 1, 2, Scales { h: 0.5, n: 0.5, margin: 0.5 });
    let pair = truncated_gramians(&sys, 0.0).unwrap();
    let model = balance_and_reduce(&sys, &pair, 6).unwrap();
    for _ in 0..3 {
        let u = random_input(&mut rng, 1, 3.0, 0.3, 1.0);
        let full = integrate(&sys, &u, (0.0, 3.0), 1e-3, Method::Rk4, &DVector::zeros(6)).unwrap();
        let red = integrate(&model.sys_hat, &u, (0.0, 3.0), 1e-3, Method::Rk4, &DVector::zeros(6)).unwrap();
        let cmp = compare_outputs(&full, &red).unwrap();
        assert!(cmp.rel_l2 < 1e-8, "{}", cmp.rel_l2);
    }
}

#[test]
fn projectors_are_biorthogonal() {
    let mut rng = rng(43);
    for n_hat in [1, 3, 5] {
        let sys = random_qb(&mut rng, 9, 2, 1, Scales { h: 1.0, n: 0.5, margin: 0.3 });
        let pair = truncated_gramians(&sys, DEFAULT_CLIP_TOL).unwrap();
        let model = balance_and_reduce(&sys, &pair, n_hat).unwrap();
        let defect = (model.w.transpose() * &model.v - DMatrix::identity(n_hat, n_hat)).norm();
        assert!(defect <= 1e-10, "{defect}");
        assert!(model.meta.warning.is_none());
        assert_eq!(model.sys_hat.n(), n_hat);
        assert!(model.sys_hat.h().is_symmetric());
        assert!(model.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert!(model.sigma.iter().all(|s| *s >= 0.0));
    }
}

#[test]
fn transform_balances_random_gramians() {
    let mut rng = rng(44);
    let sys = random_qb(&mut rng, 4, 1, 1, Scales { h: 1.0, n: 1.0, margin: 0.5 });
    let p = random_spd(&mut rng, 4);
    let q = random_spd(&mut rng, 4);
    let bt = balancing_transform(&sys, &pair_from(&p, &q)).unwrap();
    assert!((&bt.t * &bt.t_inv - DMatrix::<f64>::identity(4, 4)).norm() <= 1e-8);
    let sigma = DMatrix::from_diagonal(&bt.sigma);
    let pt = &bt.t_inv * &p * bt.t_inv.transpose();
    let qt = bt.t.transpose() * &q * &bt.t;
    assert!(rel_err(&pt, &sigma) < 1e-8);
    assert!(rel_err(&qt, &sigma) < 1e-8);
    let balanced = bt.apply(&sys).unwrap();
    assert!(rel_err(balanced.a(), &(&bt.t_inv * sys.a() * &bt.t)) < 1e-12);

    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0, 0.5]));
    let bt = balancing_transform(&sys, &pair_from(&diag, &diag)).unwrap();
    assert!((bt.sigma.clone() - diag.diagonal()).norm() < 1e-14);
}

#[test]
fn rank_errors() {
    let mut rng = rng(45);
    // only the first state is reachable, so SᵀR has rank one
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -3.0]));
    let mut b = DMatrix::zeros(3, 1);
    b[(0, 0)] = 1.0;
    let c = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
    let sys = QbSystem::linear(a, b, c).unwrap();
    let pair = truncated_gramians(&sys, DEFAULT_CLIP_TOL).unwrap();
    match balance_and_reduce(&sys, &pair, 2).unwrap_err() {
        QbError::Rank { requested, rank } => assert_eq!((requested, rank), (2, 1)),
        other => panic!("{other}"),
    }
    assert!(matches!(balance_and_reduce(&sys, &pair, 0), Err(QbError::Rank { .. })));
    let err = balancing_transform(&sys, &pair).unwrap_err();
    assert!(err.to_string().contains("balance_and_reduce"));

    let other = random_qb(&mut rng, 4, 1, 1, Scales { h: 1.0, n: 1.0, margin: 0.5 });
    let pair = truncated_gramians(&other, DEFAULT_CLIP_TOL).unwrap();
    assert!(balance_and_reduce(&sys, &pair, 1).is_err());
}

#[test]
fn cluster_truncation_warns() {
    let sys = QbSystem::linear(-DMatrix::identity(3, 3), DMatrix::identity(3, 3), DMatrix::identity(3, 3)).unwrap();
    let id = DMatrix::identity(3, 3);
    let model = balance_and_reduce(&sys, &pair_from(&id, &id), 1).unwrap();
    assert!(model.meta.warning.unwrap().contains("cluster"));
    assert_eq!(model.radius, None);
}

#[test]
fn values_invariant_under_coordinate_change() {
    let mut rng = rng(46);
    let sys = random_qb(&mut rng, 5, 1, 1, Scales { h: 0.5, n: 0.5, margin: 0.5 });
    let t = randn(&mut rng, 5, 5) + DMatrix::identity(5, 5) * 3.0;
    let t_inv = t.clone().try_inverse().unwrap();
    let moved = sys.project(&t_inv.transpose(), &t).unwrap();
    for iterated in [false, true] {
        let (p1, p2) = if iterated {
            let opts = IterOptions { tau: 0.0, rel_tol: 1e-13, ..IterOptions::default() };
            (iterate_gramians(&sys, &opts).unwrap(), iterate_gramians(&moved, &opts).unwrap())
        } else {
            (truncated_gramians(&sys, 0.0).unwrap(), truncated_gramians(&moved, 0.0).unwrap())
        };
        let (s1, s2) = (hankel_values(&p1), hankel_values(&p2));
        let k = s1.len().min(s2.len());
        let top = s1[0];
        for i in 0..k {
            if s1[i] > 1e-6 * top {
                assert!((s1[i] - s2[i]).abs() <= 1e-8 * s1[i], "{i}: {} vs {}", s1[i], s2[i]);
            }
        }
    }
}

#[test]
fn scalar_radius_certificate() {
    let sys = scalar_system(ScalarExample::STANDARD).unwrap();
    let pair = truncated_gramians(&sys, DEFAULT_CLIP_TOL).unwrap();
    let model = balance_and_reduce(&sys, &pair, 1).unwrap();
    // G = h²P̂₁Q̂₁ + c² = 5, Σ₁ = 1.25, |Ĥ| = 1
    let r = model.radius.unwrap();
    assert!((r - 5.0 / (2.0 * 1.25 * model.sys_hat.h().spectral_norm(1).unwrap())).abs() < 1e-12);
    for sign in [1.0, -1.0] {
        let x0 = DVector::from_element(1, sign * 0.9 * r);
        let cert = lyapunov_certificate(&model, &x0, (0.0, 5.0), 1e-3).unwrap();
        assert!(cert.decreasing);
    }
    let outside = DVector::from_element(1, 1.01 * r);
    let err = lyapunov_certificate(&model, &outside, (0.0, 1.0), 1e-3).unwrap_err();
    assert!(err.to_string().contains(&format!("{r:e}")));
}

#[test]
fn iterated_pair_reduces_without_radius() {
    let mut rng = rng(47);
    let sys = random_qb(&mut rng, 6, 1, 1, Scales { h: 0.3, n: 0.3, margin: 1.0 });
    let pair = iterate_gramians(&sys, &IterOptions::default()).unwrap();
    let model = balance_and_reduce(&sys, &pair, 3).unwrap();
    assert_eq!(model.meta.kind, GramianKind::Iterated);
    assert!(model.radius.is_none());
}
