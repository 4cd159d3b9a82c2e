//! Square-root balancing and truncation of QB systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::gramians::{observability_rhs, GramianKind, GramianPair};
use crate::lowrank::LowRankFactor;
use crate::svd::thin_svd;
use crate::system::QbSystem;

const RANK_TOL: f64 = 1e-14;
const CLUSTER_GAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionMeta {
    pub shift: f64,
    pub kind: GramianKind,
    /// `‖WᵀV − I‖_F` of the computed projectors.
    pub projector_defect: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub sys_hat: QbSystem,
    /// Right projector, spanned by the reachability factor.
    pub v: DMatrix<f64>,
    /// Left projector, spanned by the observability factor.
    pub w: DMatrix<f64>,
    /// All singular values of `SᵀR`, descending.
    pub sigma: DVector<f64>,
    pub n_hat: usize,
    /// Stability radius; `None` when not computed, `+∞` when the reduced Hessian vanishes.
    pub radius: Option<f64>,
    pub meta: ReductionMeta,
}

impl ReducedModel {
    /// Retained singular values `Σ₁`.
    pub fn sigma_retained(&self) -> DVector<f64> {
        self.sigma.rows(0, self.n_hat).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct BalancingTransform {
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

impl BalancingTransform {
    /// `(T⁻¹AT, T⁻¹H(T⊗T), T⁻¹N_kT, T⁻¹B, CT)`.
    pub fn apply(&self, sys: &QbSystem) -> Result<QbSystem> {
        sys.project(&self.t_inv.transpose(), &self.t)
    }
}

struct SortedSvd {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
}

/// SVD of `SᵀR` with each left singular vector's largest entry made nonnegative.
fn cross_svd(pair: &GramianPair) -> (DMatrix<f64>, DMatrix<f64>, SortedSvd) {
    let r = pair.r.scaled();
    let s = pair.s.scaled();
    let m = s.transpose() * &r;
    if m.is_empty() {
        let svd = SortedSvd {
            u: DMatrix::zeros(m.nrows(), 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(m.ncols(), 0),
        };
        return (r, s, svd);
    }
    let (mut u, sigma, mut v) = thin_svd(&m);
    for j in 0..u.ncols() {
        let pivot = u.column(j).iamax();
        if u[(pivot, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    (r, s, SortedSvd { u, sigma, v })
}

/// Singular values of `SᵀR`, descending.
pub fn hankel_values(pair: &GramianPair) -> DVector<f64> {
    cross_svd(pair).2.sigma
}

/// `σᵢ / σ₁`.
pub fn normalized_hankel_values(pair: &GramianPair) -> DVector<f64> {
    let s = hankel_values(pair);
    match s.iter().next() {
        Some(&top) if top > 0.0 => s / top,
        _ => s,
    }
}

fn numerical_rank(sigma: &DVector<f64>) -> usize {
    let top = sigma.iter().next().copied().unwrap_or(0.0);
    sigma.iter().filter(|s| **s > RANK_TOL * top && **s > 0.0).count()
}

fn inv_sqrt_scale(m: &mut DMatrix<f64>, sigma: &DVector<f64>) {
    for (j, s) in sigma.iter().enumerate() {
        m.column_mut(j).scale_mut(1.0 / s.sqrt());
    }
}

/// Balanced truncation to order `n_hat`; the projection uses `sys` as given (unshifted).
pub fn balance_and_reduce(sys: &QbSystem, pair: &GramianPair, n_hat: usize) -> Result<ReducedModel> {
    let (r, s, svd) = cross_svd(pair);
    if r.nrows() != sys.n() || s.nrows() != sys.n() {
        return Err(QbError::dim("Gramian factors", sys.n(), r.nrows()));
    }
    let rank = numerical_rank(&svd.sigma);
    if n_hat == 0 || n_hat > rank {
        return Err(QbError::Rank { requested: n_hat, rank });
    }
    let sigma1 = svd.sigma.rows(0, n_hat).into_owned();
    let mut v = &r * svd.v.columns(0, n_hat);
    let mut w = &s * svd.u.columns(0, n_hat);
    inv_sqrt_scale(&mut v, &sigma1);
    inv_sqrt_scale(&mut w, &sigma1);
    let projector_defect = (w.transpose() * &v - DMatrix::<f64>::identity(n_hat, n_hat)).norm();
    let mut warnings = Vec::new();
    if n_hat < svd.sigma.len() {
        let (a, b) = (svd.sigma[n_hat - 1], svd.sigma[n_hat]);
        if (a - b) / a < CLUSTER_GAP {
            warnings.push(format!("truncation inside a cluster: sigma[{n_hat}] = {a:e}, sigma[{}] = {b:e}", n_hat + 1));
        }
    }
    if projector_defect > 1e-10 {
        warnings.push(format!("projector defect |W'V - I| = {projector_defect:e}"));
    }
    let sys_hat = sys.project(&w, &v)?;
    let mut model = ReducedModel {
        sys_hat,
        v,
        w,
        sigma: svd.sigma,
        n_hat,
        radius: None,
        meta: ReductionMeta {
            shift: pair.shift,
            kind: pair.kind,
            projector_defect,
            warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
        },
    };
    if pair.kind == GramianKind::Truncated {
        model.radius = Some(stability_radius(&model, sys, (&pair.linear.0, &pair.linear.1))?);
    }
    Ok(model)
}

/// Full balancing transformation; both Gramians must be numerically nonsingular.
pub fn balancing_transform(sys: &QbSystem, pair: &GramianPair) -> Result<BalancingTransform> {
    let n = sys.n();
    let (r, s, svd) = cross_svd(pair);
    let top = svd.sigma.iter().next().copied().unwrap_or(0.0);
    let full = svd.sigma.len() == n && svd.sigma.iter().all(|x| *x > 1e-12 * top) && top > 0.0;
    if !full {
        return Err(QbError::Invalid(format!(
            "Gramians are rank deficient (numerical rank {} of {n}); use balance_and_reduce",
            numerical_rank(&svd.sigma)
        )));
    }
    let mut t = &r * &svd.v;
    inv_sqrt_scale(&mut t, &svd.sigma);
    let mut t_inv_t = &s * &svd.u;
    inv_sqrt_scale(&mut t_inv_t, &svd.sigma);
    Ok(BalancingTransform {
        t,
        t_inv: t_inv_t.transpose(),
        sigma: svd.sigma,
    })
}

/// Radius of the ball in which `x̂ᵀΣ₁x̂` is a Lyapunov function of the autonomous reduced model.
pub fn stability_radius(model: &ReducedModel, sys: &QbSystem, lin: (&LowRankFactor, &LowRankFactor)) -> Result<f64> {
    let n = sys.n();
    if model.v.nrows() != n || lin.0.nrows() != n || lin.1.nrows() != n {
        return Err(QbError::dim("stability_radius", n, model.v.nrows()));
    }
    let h_norm = model.sys_hat.h().spectral_norm(1)?;
    if h_norm == 0.0 {
        return Ok(f64::INFINITY);
    }
    let g = observability_rhs(sys, &lin.0.scaled(), &lin.1.scaled())?;
    let reduced = model.v.transpose() * g * &model.v;
    let eig = reduced.symmetric_eigenvalues();
    // eigenvalues at roundoff level count as zero
    let floor = eig.len() as f64 * f64::EPSILON * eig.amax();
    let lowest = if eig.min() <= floor { 0.0 } else { eig.min() };
    let sigma_top = model.sigma[0];
    Ok(lowest / (2.0 * sigma_top * h_norm))
}
