//! Dense Lyapunov solves on the real Schur form, stability diagnostics and decay bounds.

use nalgebra::{Complex, DMatrix, Schur};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::lowrank::{factorize_psd, LowRankFactor};

/// Relative eigenvalue cutoff used when factoring Lyapunov solutions.
pub const DEFAULT_CLIP_TOL: f64 = 1e-13;

const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub x: DMatrix<f64>,
    /// `‖AX + XAᵀ + W‖_F / max(‖W‖_F, ε)` for the equation that was solved.
    pub residual: f64,
    pub factor: LowRankFactor,
}

/// Diagonal blocks `(start, size)` of an upper quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, blocks: &[(usize, usize)]) -> Vec<Complex<f64>> {
    let mut out = Vec::with_capacity(t.nrows());
    for &(s, size) in blocks {
        if size == 1 {
            out.push(Complex::new(t[(s, s)], 0.0));
        } else {
            let (a, b, c, d) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
            let mean = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                out.push(Complex::new(mean + disc.sqrt(), 0.0));
                out.push(Complex::new(mean - disc.sqrt(), 0.0));
            } else {
                out.push(Complex::new(mean, (-disc).sqrt()));
                out.push(Complex::new(mean, -(-disc).sqrt()));
            }
        }
    }
    out
}

fn real_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let (q, mut t) = crate::schur::real_schur(a).ok_or(QbError::SchurFailed)?;
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
    Ok((q, t))
}

/// Solves `T_II Y + Y Sᵀ = R` for a small diagonal block and `k ≤ 2` right-hand columns.
fn small_sylvester(tii: &DMatrix<f64>, s: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, k) = (tii.nrows(), s.nrows());
    let size = p * k;
    let mut m = DMatrix::zeros(size, size);
    for c in 0..k {
        for i in 0..p {
            for j in 0..p {
                m[(c * p + i, c * p + j)] += tii[(i, j)];
            }
        }
        for c2 in 0..k {
            for i in 0..p {
                m[(c * p + i, c2 * p + i)] += s[(c, c2)];
            }
        }
    }
    let rhs = DMatrix::from_column_slice(size, 1, r.as_slice());
    let sol = m.lu().solve(&rhs).unwrap_or_else(|| DMatrix::from_element(size, 1, f64::NAN));
    DMatrix::from_column_slice(p, k, sol.as_slice())
}

/// Solves `T Y + Y Tᵀ = C` by backward substitution over the quasi-triangular blocks.
fn solve_quasi_triangular(t: &DMatrix<f64>, blocks: &[(usize, usize)], c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let mut y = DMatrix::zeros(n, n);
    for &(j0, jk) in blocks.iter().rev() {
        let j1 = j0 + jk;
        let mut rhs = c.columns(j0, jk).into_owned();
        if j1 < n {
            rhs -= y.columns(j1, n - j1) * t.view((j0, j1), (jk, n - j1)).transpose();
        }
        let s = t.view((j0, j0), (jk, jk)).into_owned();
        let mut yj = DMatrix::zeros(n, jk);
        for &(i0, ik) in blocks.iter().rev() {
            let i1 = i0 + ik;
            let mut r = rhs.rows(i0, ik).into_owned();
            if i1 < n {
                r -= t.view((i0, i1), (ik, n - i1)) * yj.rows(i1, n - i1);
            }
            let tii = t.view((i0, i0), (ik, ik)).into_owned();
            yj.rows_mut(i0, ik).copy_from(&small_sylvester(&tii, &s, &r));
        }
        y.columns_mut(j0, jk).copy_from(&yj);
    }
    y
}

fn reversal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, m.ncols(), |i, j| m[(n - 1 - i, m.ncols() - 1 - j)])
}

fn symmetrized(x: DMatrix<f64>) -> DMatrix<f64> {
    (&x + x.transpose()) * 0.5
}

/// Reusable solver for `AX + XAᵀ + W = 0` and `AᵀX + XA + W = 0` with a fixed stable `A`.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    blocks: Vec<(usize, usize)>,
    t_rev: DMatrix<f64>,
    blocks_rev: Vec<(usize, usize)>,
    eigenvalues: Vec<Complex<f64>>,
    clip_tol: f64,
}

impl LyapunovSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(QbError::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
        }
        let (q, t) = real_schur(a)?;
        let blocks = diagonal_blocks(&t);
        let eigenvalues = block_eigenvalues(&t, &blocks);
        if let Some(bad) = eigenvalues.iter().filter(|l| l.re >= 0.0).max_by(|x, y| x.re.total_cmp(&y.re)) {
            return Err(QbError::Unstable { re: bad.re, im: bad.im });
        }
        let t_rev = reversal(&t.transpose());
        let blocks_rev = diagonal_blocks(&t_rev);
        Ok(Self {
            a: a.clone(),
            q,
            t,
            blocks,
            t_rev,
            blocks_rev,
            eigenvalues,
            clip_tol: DEFAULT_CLIP_TOL,
        })
    }

    /// Relative eigenvalue cutoff for the returned factors.
    pub fn with_clip_tol(mut self, clip_tol: f64) -> Self {
        self.clip_tol = clip_tol;
        self
    }

    pub fn eigenvalues(&self) -> &[Complex<f64>] {
        &self.eigenvalues
    }

    fn prepare(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.a.nrows();
        if w.shape() != (n, n) {
            return Err(QbError::dim("W", format!("{n}x{n}"), format!("{}x{}", w.nrows(), w.ncols())));
        }
        let asym = (w - w.transpose()).norm() / w.norm().max(f64::MIN_POSITIVE);
        if asym > SYMMETRY_TOL {
            return Err(QbError::NotSymmetric(asym));
        }
        Ok(self.q.transpose() * symmetrized(w.clone()) * &self.q)
    }

    fn finish(&self, y: DMatrix<f64>, w: &DMatrix<f64>, transposed: bool) -> Result<LyapunovSolution> {
        let x = symmetrized(&self.q * y * self.q.transpose());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(QbError::Invalid("Lyapunov solution is not finite".into()));
        }
        let ax = if transposed { self.a.transpose() * &x } else { &self.a * &x };
        let res = &ax + ax.transpose() + w;
        let residual = res.norm() / w.norm().max(f64::EPSILON);
        let factor = factorize_psd(&x, self.clip_tol)?.factor;
        Ok(LyapunovSolution { x, residual, factor })
    }

    /// `AX + XAᵀ + W = 0`.
    pub fn solve(&self, w: &DMatrix<f64>) -> Result<LyapunovSolution> {
        let c = -self.prepare(w)?;
        let y = solve_quasi_triangular(&self.t, &self.blocks, &c);
        self.finish(y, w, false)
    }

    /// `AᵀX + XA + W = 0`.
    pub fn solve_transposed(&self, w: &DMatrix<f64>) -> Result<LyapunovSolution> {
        let c = -self.prepare(w)?;
        let y = reversal(&solve_quasi_triangular(&self.t_rev, &self.blocks_rev, &reversal(&c)));
        self.finish(y, w, true)
    }

    /// `AX + XAᵀ + FFᵀ = 0`.
    pub fn solve_factored(&self, f: &DMatrix<f64>) -> Result<LyapunovSolution> {
        self.solve(&(f * f.transpose()))
    }

    /// `AᵀX + XA + FFᵀ = 0`.
    pub fn solve_transposed_factored(&self, f: &DMatrix<f64>) -> Result<LyapunovSolution> {
        self.solve_transposed(&(f * f.transpose()))
    }
}

/// One-shot `AX + XAᵀ + W = 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<LyapunovSolution> {
    LyapunovSolver::new(a)?.solve(w)
}

/// Eigenvalues read off the real Schur form, in diagonal-block order.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if a.nrows() != a.ncols() {
        return Err(QbError::dim("A", "square", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let (_, t) = real_schur(a)?;
    Ok(block_eigenvalues(&t, &diagonal_blocks(&t)))
}

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMethod {
    NormalExact,
    EigenvectorCondition,
    Sampled,
}

/// Constants with `‖e^{At}‖₂ ≤ β e^{−αt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub alpha: f64,
    pub beta: f64,
    pub method: DecayMethod,
}

const DECAY_MARGIN: f64 = 1e-3;
const KAPPA_LIMIT: f64 = 1e8;

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

fn exp_norm(a: &DMatrix<f64>, t: f64) -> f64 {
    let e = (a * t).exp();
    e.singular_values().max()
}

/// Sample times on which decay bounds are certified.
pub fn certificate_times(alpha: f64) -> Vec<f64> {
    log_grid(1e-3, 50.0 / alpha, 200)
}

/// Largest `‖e^{At}‖₂ − β e^{−αt}` over the certificate grid.
pub fn decay_violation(a: &DMatrix<f64>, bound: &DecayBound) -> f64 {
    certificate_times(bound.alpha)
        .par_iter()
        .map(|&t| exp_norm(a, t) - bound.beta * (-bound.alpha * t).exp())
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn sampled_beta(a: &DMatrix<f64>, alpha: f64, times: &[f64]) -> f64 {
    times
        .par_iter()
        .map(|&t| exp_norm(a, t) * (alpha * t).exp())
        .reduce(|| 1.0, f64::max)
}

/// Condition number of a unit-column eigenvector matrix, or `None` if the matrix looks defective.
fn eigenvector_condition(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let (q, t) = Schur::try_new(ac, f64::EPSILON, 1000 + 100 * n)?.unpack();
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let gap = t[(i, i)] - t[(k, k)];
            if gap.norm() <= 1e-12 * scale {
                return None;
            }
            y[(i, k)] = -acc / gap;
        }
    }
    let mut v = q * y;
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col.unscale_mut(norm);
    }
    let sv = v.singular_values();
    let kappa = sv.max() / sv.min();
    kappa.is_finite().then_some(kappa)
}

/// Decay constants for a stable matrix, always checked on a sampled certificate grid.
pub fn decay_bound(a: &DMatrix<f64>) -> Result<DecayBound> {
    let n = a.nrows();
    let eta = spectral_abscissa(a)?;
    if eta >= 0.0 {
        let solver = LyapunovSolver::new(a);
        return Err(solver.err().unwrap_or(QbError::Unstable { re: eta, im: 0.0 }));
    }
    let alpha = -eta * (1.0 - DECAY_MARGIN);
    let commutator = (a * a.transpose() - a.transpose() * a).norm();
    let scale = a.norm_squared();
    let mut bound = if n <= 1 || commutator <= 1e-12 * scale {
        DecayBound { alpha, beta: 1.0, method: DecayMethod::NormalExact }
    } else {
        match eigenvector_condition(a) {
            Some(kappa) if kappa <= KAPPA_LIMIT => DecayBound {
                alpha,
                beta: kappa.max(1.0),
                method: DecayMethod::EigenvectorCondition,
            },
            _ => {
                let mut times = log_grid(1e-3, 50.0 / alpha, 2000);
                times.extend(certificate_times(alpha));
                DecayBound { alpha, beta: sampled_beta(a, alpha, &times), method: DecayMethod::Sampled }
            }
        }
    };
    if decay_violation(a, &bound) > 1e-8 * bound.beta {
        let beta = sampled_beta(a, alpha, &certificate_times(alpha)).max(bound.beta);
        bound = DecayBound { alpha, beta, method: DecayMethod::Sampled };
    }
    Ok(bound)
}
