#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qbmor::lyapunov::spectral_abscissa;
use qbmor::simulate::{Channel, InputSignal, SampledSignal};
use qbmor::tensor::HessianTensor;
use qbmor::QbSystem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random matrix with spectral abscissa exactly `-margin`.
pub fn stable_matrix(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> DMatrix<f64> {
    let m = randn(rng, n, n) / (n as f64).sqrt();
    let abscissa = spectral_abscissa(&m).unwrap();
    m - DMatrix::identity(n, n) * (abscissa + margin)
}

pub struct Scales {
    pub h: f64,
    pub n: f64,
    pub margin: f64,
}

pub fn random_qb(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, s: Scales) -> QbSystem {
    let a = stable_matrix(rng, n, s.margin);
    let h = randn(rng, n, n * n) * (s.h / n as f64);
    let bilinear = (0..m).map(|_| randn(rng, n, n) * (s.n / n as f64)).collect();
    let b = randn(rng, n, m);
    let c = randn(rng, p, n);
    QbSystem::new(a, HessianTensor::from_mode1(h).unwrap(), bilinear, b, c).unwrap()
}

pub fn random_linear(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> QbSystem {
    let a = stable_matrix(rng, n, 0.5);
    QbSystem::linear(a, randn(rng, n, m), randn(rng, p, n)).unwrap()
}

/// Piecewise-linear random input on `[0, t_end]` with knots every `spacing`.
pub fn random_input(rng: &mut ChaCha8Rng, m: usize, t_end: f64, spacing: f64, amplitude: f64) -> InputSignal {
    let knots = (t_end / spacing).ceil() as usize + 1;
    let t: Vec<f64> = (0..knots).map(|i| i as f64 * spacing).collect();
    let channels = (0..m)
        .map(|_| {
            let v = (0..knots).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect();
            Channel::Sampled(SampledSignal::new(t.clone(), v).unwrap())
        })
        .collect();
    InputSignal { channels }
}

/// Solves `AX + XAᵀ + W = 0` through the `n² × n²` Kronecker system.
pub fn kron_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_column_slice(w.as_slice()) * -1.0;
    let x = k.lu().solve(&rhs).expect("nonsingular Kronecker operator");
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    (&x + x.transpose()) * 0.5
}

/// `L` with `LLᵀ = X`, negative rounding eigenvalues dropped.
pub fn psd_sqrt(x: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = x.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Classical square-root balanced truncation of `(A, B, C)` from dense Gramians.
pub struct ClassicalBt {
    pub hsv: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

pub fn classical_bt(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, r: usize) -> ClassicalBt {
    let p = kron_lyapunov(a, &(b * b.transpose()));
    let q = kron_lyapunov(&a.transpose(), &(c.transpose() * c));
    let lp = psd_sqrt(&p);
    let lq = psd_sqrt(&q);
    let svd = (lq.transpose() * &lp).svd(true, true);
    // nalgebra sorts singular values in descending order
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let s = &svd.singular_values;
    let inv_sqrt = DMatrix::from_diagonal(&s.rows(0, r).map(|x| 1.0 / x.sqrt()));
    let t = &lp * vt.rows(0, r).transpose() * &inv_sqrt;
    let ti = &inv_sqrt * u.columns(0, r).transpose() * lq.transpose();
    ClassicalBt {
        hsv: s.clone(),
        a: &ti * a * &t,
        b: &ti * b,
        c: c * &t,
    }
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
