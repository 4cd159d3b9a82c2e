use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::lyapunov::{decay_bound, DecayMethod};
use crate::system::QbSystem;

/// Sufficient conditions and a priori bounds for convergence of the Gramian iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub gamma_n: f64,
    pub gamma_h: f64,
    pub gamma_h_tilde: f64,
    pub gamma_b: f64,
    pub gamma_c: f64,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub decay_method: DecayMethod,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: bool,
    pub cond_q: bool,
    pub p_inf: Option<f64>,
    pub q_bound: Option<f64>,
}

fn spectral_norm(m: &nalgebra::DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.singular_values().max()
    }
}

/// Evaluates the convergence conditions with spectral norms throughout.
pub fn convergence_report(sys: &QbSystem) -> Result<ConvergenceReport> {
    let decay = decay_bound(sys.a())?;
    let (alpha, beta) = (decay.alpha, decay.beta);
    let gamma_n: f64 = sys.bilinear().iter().map(|nk| spectral_norm(nk).powi(2)).sum();
    let gamma_h = sys.h().spectral_norm(1)?.powi(2);
    let gamma_h_tilde = sys.h().spectral_norm(2)?.powi(2);
    let gamma_b = spectral_norm(sys.b()).powi(2);
    let gamma_c = spectral_norm(sys.c()).powi(2);

    let k = beta * beta / (2.0 * alpha);
    let (qa, qb, qc) = (k * gamma_h, k * gamma_n, k * gamma_b);
    let d = 1.0 - qb;
    let disc = d * d - 4.0 * qa * qc;

    let cond_i = alpha > 0.0 && beta > 0.0;
    let cond_ii = qb < 1.0;
    let cond_iii = if gamma_h == 0.0 { disc > 0.0 } else { disc > 0.0 && disc < 1.0 };
    let p_inf = (cond_i && cond_ii && cond_iii).then(|| {
        if gamma_h == 0.0 {
            qc / d
        } else {
            4.0 * qc / (d + disc.sqrt())
        }
    });
    let q_factor = p_inf.map(|p| k * (gamma_n + gamma_h_tilde * p));
    let cond_q = q_factor.is_some_and(|f| f < 1.0);
    let q_bound = q_factor.filter(|_| cond_q).map(|f| k * gamma_c / (1.0 - f));
    Ok(ConvergenceReport {
        gamma_n,
        gamma_h,
        gamma_h_tilde,
        gamma_b,
        gamma_c,
        d,
        alpha,
        beta,
        decay_method: decay.method,
        cond_i,
        cond_ii,
        cond_iii,
        cond_q,
        p_inf,
        q_bound,
    })
}

/// Limit of `x_{k+1} = a x_k² + b x_k + c` started at `x₁ = c`.
pub fn fixed_point_limit(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(QbError::Invalid(format!("coefficients must be positive, got a = {a}, b = {b}, c = {c}")));
    }
    if b >= 1.0 {
        return Err(QbError::Condition {
            condition: "cond1",
            detail: format!("b = {b} must be below 1"),
        });
    }
    let disc = (b - 1.0).powi(2) - 4.0 * a * c;
    if !(disc > 0.0 && disc < 1.0) {
        return Err(QbError::Condition {
            condition: "cond2",
            detail: format!("(b - 1)^2 - 4ac = {disc} must lie in (0, 1)"),
        });
    }
    // cancellation-free form of (1 - b - √disc) / (2a)
    Ok(2.0 * c / ((1.0 - b) + disc.sqrt()))
}

/// Iterates of `x_{k+1} = a x_k² + b x_k + c` from `x₁ = c`.
#[derive(Debug, Clone)]
pub struct QuadraticRecurrence {
    a: f64,
    b: f64,
    c: f64,
    next: f64,
}

impl QuadraticRecurrence {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c, next: c }
    }
}

impl Iterator for QuadraticRecurrence {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let x = self.next;
        self.next = self.a * x * x + self.b * x + self.c;
        Some(x)
    }
}
