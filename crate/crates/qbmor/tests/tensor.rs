mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qbmor::tensor::{gamma_product, HessianTensor, TensorEntry};
use qbmor::QbError;

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn spec_single_entry_lands_in_each_unfolding() {
    let h = HessianTensor::from_entries([2; 3], vec![TensorEntry { i: 0, j: 0, k: 1, value: 5.0 }]).unwrap();
    let h1 = h.mode_unfold(1).unwrap();
    let h2 = h.mode_unfold(2).unwrap();
    let h3 = h.mode_unfold(3).unwrap();
    assert_eq!(h1[(0, 1)], 5.0);
    assert_eq!(h2[(1, 0)], 5.0);
    assert_eq!(h3[(0, 2)], 5.0);
    for m in [&h1, &h2, &h3] {
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
    }
}

#[test]
fn invalid_mode_is_rejected() {
    let h = HessianTensor::zeros(2);
    assert_eq!(h.mode_unfold(4).unwrap_err(), QbError::InvalidMode(4));
    assert!(h.gamma(0, &DMatrix::zeros(2, 1), &DMatrix::zeros(2, 1)).is_err());
}

#[test]
fn apply_quadratic_matches_kronecker_oracle() {
    let mut rng = rng(1);
    let h = randn(&mut rng, 5, 25);
    let t = HessianTensor::from_mode1(h.clone()).unwrap();
    let x = randn_vec(&mut rng, 5);
    let oracle = &h * x.kronecker(&x);
    let got = t.apply_quadratic(&x).unwrap();
    assert!((got - &oracle).norm() <= 1e-13 * oracle.norm());
    assert_eq!(t.apply_quadratic(&DVector::zeros(5)).unwrap(), DVector::zeros(5));
}

#[test]
fn symmetrization_preserves_dynamics_and_commutes() {
    let mut rng = rng(2);
    let h = HessianTensor::from_mode1(randn(&mut rng, 3, 9)).unwrap();
    let hs = h.symmetrize().unwrap();
    assert!(hs.is_symmetric());
    assert_eq!(hs.mode_unfold(2).unwrap(), hs.mode_unfold(3).unwrap());
    for _ in 0..10 {
        let x = randn_vec(&mut rng, 3);
        let (a, b) = (h.apply_quadratic(&x).unwrap(), hs.apply_quadratic(&x).unwrap());
        assert!((&a - &b).norm() <= 1e-13 * a.norm());
        let (u, v) = (randn_vec(&mut rng, 3), randn_vec(&mut rng, 3));
        let uv = hs.apply_bilinear(&u, &v).unwrap();
        let vu = hs.apply_bilinear(&v, &u).unwrap();
        assert!((&uv - &vu).norm() <= 1e-13 * uv.norm());
    }
}

#[test]
fn symmetrize_scalar_and_single_pair() {
    let h = HessianTensor::from_mode1(DMatrix::from_element(1, 1, 3.0)).unwrap();
    assert_eq!(h.symmetrize().unwrap().mode_unfold(1).unwrap()[(0, 0)], 3.0);
    let mut m = DMatrix::zeros(2, 4);
    m[(0, 1)] = 1.0;
    let hs = HessianTensor::from_mode1(m).unwrap().symmetrize().unwrap();
    let u = hs.mode_unfold(1).unwrap();
    assert_eq!((u[(0, 1)], u[(0, 2)]), (0.5, 0.5));
}

#[test]
fn gamma_product_edge_cases() {
    let mut rng = rng(3);
    let h = randn(&mut rng, 4, 16);
    let e1 = DMatrix::from_fn(4, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let g = gamma_product(&h, &e1, &e1).unwrap();
    assert_eq!(g.column(0), h.column(0));
    let empty = gamma_product(&h, &DMatrix::zeros(4, 0), &e1).unwrap();
    assert_eq!(empty.shape(), (4, 0));
    assert!(gamma_product(&h, &DMatrix::zeros(3, 1), &e1).is_err());
}

#[test]
fn identity_contraction_and_rank_one() {
    let mut rng = rng(4);
    let h = HessianTensor::from_mode1(randn(&mut rng, 3, 9)).unwrap();
    let eye = DMatrix::identity(3, 3);
    let f = h.mode_products(&eye, &eye, &eye).unwrap();
    assert!(rel(&f.mode_unfold(1).unwrap(), &h.mode_unfold(1).unwrap()) < 1e-15);

    let (a, b, c) = (randn(&mut rng, 3, 1), randn(&mut rng, 3, 1), randn(&mut rng, 3, 1));
    let h1 = &a * b.kronecker(&c).transpose();
    let t = HessianTensor::from_mode1(h1).unwrap();
    let (xt, yt, zt) = (randn(&mut rng, 2, 3), randn(&mut rng, 2, 3), randn(&mut rng, 2, 3));
    let f = t.mode_products(&xt, &yt, &zt).unwrap().mode_unfold(1).unwrap();
    let oracle = (&xt * &a) * (&yt * &b).kronecker(&(&zt * &c)).transpose();
    assert!(rel(&f, &oracle) < 1e-13);
}

#[test]
fn sparse_and_dense_storage_agree() {
    let mut rng = rng(5);
    let n = 4;
    let mut entries = Vec::new();
    for i in 0..n {
        entries.push(TensorEntry { i, j: (i + 1) % n, k: (i + 2) % n, value: rng_value(&mut rng) });
        entries.push(TensorEntry { i, j: i, k: i, value: rng_value(&mut rng) });
    }
    let sparse = HessianTensor::from_entries([n; 3], entries).unwrap();
    let dense = HessianTensor::from_mode1(sparse.mode_unfold(1).unwrap()).unwrap();
    let (z, x) = (randn(&mut rng, n, 2), randn(&mut rng, n, 3));
    for mode in 1..=3 {
        let (gs, gd) = (sparse.gamma(mode, &z, &x).unwrap(), dense.gamma(mode, &z, &x).unwrap());
        assert!(rel(&gs, &gd) < 1e-14);
        assert!(rel(&sparse.unfolding_gram(mode).unwrap(), &dense.unfolding_gram(mode).unwrap()) < 1e-14);
    }
}

fn rng_value(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    randn(rng, 1, 1)[(0, 0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matricization_identities(seed in any::<u64>(), n in 1usize..5, q in (1usize..4, 1usize..4, 1usize..4)) {
        let mut rng = rng(seed);
        let h = HessianTensor::from_mode1(randn(&mut rng, n, n * n)).unwrap();
        let (x, y, z) = (randn(&mut rng, n, q.0), randn(&mut rng, n, q.1), randn(&mut rng, n, q.2));
        let f = h.mode_products(&x.transpose(), &y.transpose(), &z.transpose()).unwrap();
        let f1 = x.transpose() * h.mode_unfold(1).unwrap() * y.kronecker(&z);
        let f2 = z.transpose() * h.mode_unfold(2).unwrap() * y.kronecker(&x);
        let f3 = y.transpose() * h.mode_unfold(3).unwrap() * z.kronecker(&x);
        prop_assert!(rel(&f.mode_unfold(1).unwrap(), &f1) <= 1e-13);
        prop_assert!(rel(&f.mode_unfold(2).unwrap(), &f2) <= 1e-13);
        prop_assert!(rel(&f.mode_unfold(3).unwrap(), &f3) <= 1e-13);
    }

    #[test]
    fn gamma_matches_explicit_kronecker(seed in any::<u64>(), n in 1usize..=8, r in 0usize..4, s in 1usize..4, mode in 1usize..=3) {
        let mut rng = rng(seed);
        let h = HessianTensor::from_mode1(randn(&mut rng, n, n * n)).unwrap();
        let (z, x) = (randn(&mut rng, n, r), randn(&mut rng, n, s));
        let hm = h.mode_unfold(mode).unwrap();
        let oracle = &hm * z.kronecker(&x);
        let got = h.gamma(mode, &z, &x).unwrap();
        prop_assert_eq!(got.shape(), oracle.shape());
        prop_assert!((&got - &oracle).norm() <= 1e-12 * oracle.norm().max(1e-300));
    }

    #[test]
    fn unfold_refold_round_trips(seed in any::<u64>(), dims in (1usize..5, 1usize..5, 1usize..5), mode in 1usize..=3) {
        let mut rng = rng(seed);
        let [d1, d2, d3] = [dims.0, dims.1, dims.2];
        let h = HessianTensor::from_unfolding([d1, d2, d3], 1, &randn(&mut rng, d1, d2 * d3)).unwrap();
        let m = h.mode_unfold(mode).unwrap();
        let back = HessianTensor::from_unfolding([d1, d2, d3], mode, &m).unwrap();
        prop_assert_eq!(back.mode_unfold(1).unwrap(), h.mode_unfold(1).unwrap());
        prop_assert_eq!(back.mode_unfold(mode).unwrap(), m);
    }
}
