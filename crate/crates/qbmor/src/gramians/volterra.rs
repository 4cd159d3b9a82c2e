//! Gramians by direct quadrature of the first three Volterra kernels (small systems only).

use nalgebra::DMatrix;

use crate::error::{QbError, Result};
use crate::lyapunov::spectral_abscissa;
use crate::system::QbSystem;

const NODES_PER_PANEL: usize = 10;
const PANEL_GROWTH: f64 = 1.5;
const MAX_ORDER: usize = 12;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(g: usize) -> Vec<(f64, f64)> {
    (0..g)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (g as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=g {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = g as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite rule on `[0, t_max]` with geometrically growing panels.
fn composite_rule(panels: usize, t_max: f64) -> Vec<(f64, f64)> {
    let base = gauss_legendre(NODES_PER_PANEL);
    let total = (PANEL_GROWTH.powi(panels as i32) - 1.0) / (PANEL_GROWTH - 1.0);
    let mut rule = Vec::with_capacity(panels * NODES_PER_PANEL);
    let mut left = 0.0;
    for p in 0..panels {
        let width = t_max * PANEL_GROWTH.powi(p as i32) / total;
        for &(x, w) in &base {
            rule.push((left + 0.5 * width * (x + 1.0), 0.5 * width * w));
        }
        left += width;
    }
    rule
}

fn gram_sum(w: &mut DMatrix<f64>, weight: f64, f: &DMatrix<f64>) {
    w.gemm(weight, f, &f.transpose(), 1.0);
}

fn linear_term(a: &DMatrix<f64>, f: &DMatrix<f64>, rule: &[(f64, f64)]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.nrows());
    for &(t, w) in rule {
        gram_sum(&mut out, w, &((a * t).exp() * f));
    }
    out
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Quadrature of `Σ_{i ≤ terms} ∫ P̃ᵢP̃ᵢᵀ` and `Σ ∫ Q̃ᵢQ̃ᵢᵀ` over `[0, t_max]^i`.
///
/// `quad_points` is the number of nodes per dimension; it is rounded up to whole
/// panels of ten Gauss-Legendre nodes.
pub fn volterra_gramian_oracle(
    sys: &QbSystem,
    terms: usize,
    quad_points: usize,
    t_max: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sys.n();
    if n > MAX_ORDER {
        return Err(QbError::Invalid(format!("quadrature oracle supports n <= {MAX_ORDER}, got {n}")));
    }
    if !(1..=3).contains(&terms) {
        return Err(QbError::Invalid(format!("terms must be 1, 2 or 3, got {terms}")));
    }
    if !(t_max > 0.0) || quad_points < NODES_PER_PANEL {
        return Err(QbError::Invalid("need t_max > 0 and at least ten quadrature points".into()));
    }
    let eta = spectral_abscissa(sys.a())?;
    if eta >= 0.0 {
        return Err(QbError::Unstable { re: eta, im: 0.0 });
    }
    let a = sys.a();
    let panels = quad_points.div_ceil(NODES_PER_PANEL);
    let rule = composite_rule(panels, t_max);
    let ct = sys.c().transpose();

    // truncation estimate from the linear kernel: tail beyond t_max and a coarser rule
    let tail = (a * t_max).exp().singular_values().max().powi(2);
    let fine = linear_term(a, sys.b(), &rule);
    let coarse = linear_term(a, sys.b(), &composite_rule(panels.div_ceil(2), t_max));
    let scale = fine.norm().max(f64::MIN_POSITIVE);
    let estimate = terms as f64 * tail + (&fine - &coarse).norm() / scale;
    if estimate > 1e-6 {
        return Err(QbError::Quadrature { estimate });
    }

    let exps: Vec<DMatrix<f64>> = rule.iter().map(|&(t, _)| (a * t).exp()).collect();
    let exps_t: Vec<DMatrix<f64>> = exps.iter().map(|e| e.transpose()).collect();
    let p1: Vec<DMatrix<f64>> = exps.iter().map(|e| e * sys.b()).collect();
    let q1: Vec<DMatrix<f64>> = exps_t.iter().map(|e| e * &ct).collect();

    let mut p = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    for (i, &(_, w)) in rule.iter().enumerate() {
        gram_sum(&mut p, w, &p1[i]);
        gram_sum(&mut q, w, &q1[i]);
    }

    // the outermost kernel factor e^{At} is shared, so inner integrals are summed first
    let mut inner_p = DMatrix::zeros(n, n);
    let mut inner_q = DMatrix::zeros(n, n);
    if terms >= 2 {
        for (i1, &(_, w1)) in rule.iter().enumerate() {
            for nk in sys.bilinear() {
                gram_sum(&mut inner_p, w1, &(nk * &p1[i1]));
                gram_sum(&mut inner_q, w1, &(nk.transpose() * &q1[i1]));
            }
        }
    }
    if terms >= 3 && !sys.h().is_zero() {
        let h1 = sys.h().mode_unfold(1)?;
        let h2 = sys.h().mode_unfold(2)?;
        for (i1, &(_, w1)) in rule.iter().enumerate() {
            for (i2, &(_, w2)) in rule.iter().enumerate() {
                gram_sum(&mut inner_p, w1 * w2, &(&h1 * kron(&p1[i1], &p1[i2])));
                gram_sum(&mut inner_q, w1 * w2, &(&h2 * kron(&p1[i1], &q1[i2])));
            }
        }
    }
    if terms >= 2 {
        for (i, &(_, w)) in rule.iter().enumerate() {
            p += (&exps[i] * &inner_p * &exps_t[i]) * w;
            q += (&exps_t[i] * &inner_q * &exps[i]) * w;
        }
    }
    Ok((p, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let rule = gauss_legendre(10);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        let x18: f64 = rule.iter().map(|(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
    }
}
