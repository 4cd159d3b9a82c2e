//! Benchmark QB systems from lifted finite-difference discretizations, and the scalar example.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::gramians::{iterate_gramians, truncated_gramians, IterOptions};
use crate::registry::Registry;
use crate::system::QbSystem;
use crate::tensor::{HessianTensor, TensorEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ChafeeInfante,
    FitzhughNagumo,
    RcLadder,
    Scalar,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::ChafeeInfante => "chafee_infante",
            Family::FitzhughNagumo => "fitzhugh_nagumo",
            Family::RcLadder => "rc_ladder",
            Family::Scalar => "scalar",
        }
    }
}

/// Generator request as stored in manifests and run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub k: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

impl ModelSpec {
    pub fn new(family: Family, k: usize) -> Self {
        Self {
            family,
            k,
            length: None,
            params: BTreeMap::new(),
            shift: None,
        }
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

fn entry(i: usize, j: usize, k: usize, value: f64) -> TensorEntry {
    TensorEntry { i, j, k, value }
}

fn require_grid(k: usize, min: usize) -> Result<()> {
    if k < min {
        Err(QbError::Invalid(format!("grid size k = {k} is below the minimum {min}")))
    } else {
        Ok(())
    }
}

/// Second-difference matrix of the Chafee-Infante grid: Dirichlet at node 1, mirrored ghost at node k.
fn ci_laplacian(k: usize, dx: f64) -> DMatrix<f64> {
    let s = 1.0 / (dx * dx);
    let mut l = DMatrix::zeros(k, k);
    for i in 0..k {
        l[(i, i)] = -2.0 * s;
        if i > 0 {
            l[(i, i - 1)] = s;
        }
        if i + 1 < k {
            l[(i, i + 1)] = s;
        }
    }
    l[(k - 1, k - 2)] = 2.0 * s;
    l
}

/// Lifted Chafee-Infante system `v_t = v_xx + v − v³` with state `(v, w = v²)`.
pub fn chafee_infante(k: usize, length: f64) -> Result<QbSystem> {
    require_grid(k, 3)?;
    if !(length > 0.0) {
        return Err(QbError::Invalid(format!("domain length {length} must be positive")));
    }
    let dx = length / k as f64;
    let lap = ci_laplacian(k, dx);
    let n = 2 * k;
    let mut a = DMatrix::zeros(n, n);
    let mut h = Vec::new();
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = lap[(i, j)];
        }
        a[(i, i)] += 1.0;
        h.push(entry(i, i, k + i, -1.0));
        a[(k + i, k + i)] = 2.0 * lap[(i, i)] + 2.0;
        h.push(entry(k + i, k + i, k + i, -2.0));
        for j in 0..k {
            if j != i && lap[(i, j)] != 0.0 {
                h.push(entry(k + i, i, j, 2.0 * lap[(i, j)]));
            }
        }
    }
    let mut n1 = DMatrix::zeros(n, n);
    n1[(k, 0)] = 2.0 / (dx * dx);
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0 / (dx * dx);
    let mut c = DMatrix::zeros(1, n);
    c[(0, k - 1)] = 1.0;
    QbSystem::new(a, HessianTensor::from_entries([n; 3], h)?, vec![n1], b, c)
}

/// Unlifted Chafee-Infante right-hand side.
pub fn chafee_infante_direct(k: usize, length: f64, v: &DVector<f64>, u: f64) -> DVector<f64> {
    let dx = length / k as f64;
    let mut out = ci_laplacian(k, dx) * v;
    out[0] += u / (dx * dx);
    for i in 0..k {
        out[i] += v[i] - v[i].powi(3);
    }
    out
}

/// Physical constants of the FitzHugh-Nagumo benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhnParams {
    pub length: f64,
    pub eps: f64,
    pub h: f64,
    pub gamma: f64,
    pub q: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            length: 0.2,
            eps: 0.015,
            h: 0.5,
            gamma: 2.0,
            q: 0.05,
        }
    }
}

/// Cell-centred second differences with zero-flux ghost nodes at both ends.
fn neumann_laplacian(k: usize, dx: f64) -> DMatrix<f64> {
    let s = 1.0 / (dx * dx);
    let mut l = DMatrix::zeros(k, k);
    for i in 0..k {
        if i > 0 {
            l[(i, i - 1)] = s;
            l[(i, i)] -= s;
        }
        if i + 1 < k {
            l[(i, i + 1)] = s;
            l[(i, i)] -= s;
        }
    }
    l
}

/// Lifted FitzHugh-Nagumo system with state `(v, w, z = v²)` and inputs `(i₀, 1)`.
pub fn fitzhugh_nagumo(k: usize) -> Result<QbSystem> {
    fitzhugh_nagumo_with(k, FhnParams::default())
}

pub fn fitzhugh_nagumo_with(k: usize, prm: FhnParams) -> Result<QbSystem> {
    require_grid(k, 3)?;
    let FhnParams { length, eps, h: hh, gamma, q } = prm;
    let dx = length / k as f64;
    let lap = neumann_laplacian(k, dx);
    let n = 3 * k;
    let (iv, iw, iz) = (0, k, 2 * k);
    let mut a = DMatrix::zeros(n, n);
    let mut h = Vec::new();
    for i in 0..k {
        for j in 0..k {
            a[(iv + i, iv + j)] = eps * lap[(i, j)];
        }
        a[(iv + i, iv + i)] -= 0.1 / eps;
        a[(iv + i, iw + i)] = -1.0 / eps;
        h.push(entry(iv + i, iv + i, iv + i, 1.1 / eps));
        h.push(entry(iv + i, iv + i, iz + i, -1.0 / eps));

        a[(iw + i, iv + i)] = hh;
        a[(iw + i, iw + i)] = -gamma;

        a[(iz + i, iz + i)] = 2.0 * eps * lap[(i, i)] - 0.2 / eps;
        for j in 0..k {
            if j != i && lap[(i, j)] != 0.0 {
                h.push(entry(iz + i, iv + i, iv + j, 2.0 * eps * lap[(i, j)]));
            }
        }
        h.push(entry(iz + i, iv + i, iw + i, -2.0 / eps));
        h.push(entry(iz + i, iv + i, iz + i, 2.2 / eps));
        h.push(entry(iz + i, iz + i, iz + i, -2.0 / eps));
    }
    let mut n1 = DMatrix::zeros(n, n);
    n1[(iz, iv)] = -2.0 * eps / dx;
    let mut n2 = DMatrix::zeros(n, n);
    for i in 0..k {
        n2[(iz + i, iv + i)] = 2.0 * q / eps;
    }
    let mut b = DMatrix::zeros(n, 2);
    b[(iv, 0)] = -eps / dx;
    for i in 0..k {
        b[(iv + i, 1)] = q / eps;
        b[(iw + i, 1)] = q;
    }
    let mut c = DMatrix::zeros(2, n);
    c[(0, iv)] = 1.0;
    c[(1, iw)] = 1.0;
    QbSystem::new(a, HessianTensor::from_entries([n; 3], h)?, vec![n1, n2], b, c)
}

/// Unlifted FitzHugh-Nagumo right-hand side for state `(v, w)` and inputs `(i₀, u₂)`.
pub fn fitzhugh_nagumo_direct(k: usize, prm: FhnParams, v: &DVector<f64>, w: &DVector<f64>, u: [f64; 2]) -> DVector<f64> {
    let dx = prm.length / k as f64;
    let mut out = DVector::zeros(2 * k);
    let lv = neumann_laplacian(k, dx) * v;
    for i in 0..k {
        let f = v[i] * (v[i] - 0.1) * (1.0 - v[i]);
        out[i] = prm.eps * lv[i] + (f - w[i] + prm.q * u[1]) / prm.eps;
        out[k + i] = prm.h * v[i] - prm.gamma * w[i] + prm.q * u[1];
    }
    out[0] -= prm.eps / dx * u[0];
    out
}

/// Element incidence of the ladder: `δ₀ = v₁`, `δ_j = v_j − v_{j+1}`.
fn ladder_incidence(k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(k, k);
    d[(0, 0)] = 1.0;
    for j in 1..k {
        d[(j, j - 1)] = 1.0;
        d[(j, j)] = -1.0;
    }
    d
}

const DIODE_GAIN: f64 = 40.0;

/// Lifted RC ladder with state `(v, y = e^{40δ} − 1)`.
pub fn rc_ladder(k: usize) -> Result<QbSystem> {
    require_grid(k, 2)?;
    let g = DIODE_GAIN;
    let d = ladder_incidence(k);
    let dt = d.transpose();
    let ddt = &d * &dt;
    let dvel = &ddt * &d;
    let n = 2 * k;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (k, k)).copy_from(&(&dt * &d));
    a.view_mut((0, k), (k, k)).copy_from(&(-&dt));
    a.view_mut((k, 0), (k, k)).copy_from(&(&dvel * g));
    a.view_mut((k, k), (k, k)).copy_from(&(&ddt * -g));
    let mut h = Vec::new();
    for j in 0..k {
        for l in 0..k {
            if dvel[(j, l)] != 0.0 {
                h.push(entry(k + j, k + j, l, g * dvel[(j, l)]));
            }
            if ddt[(j, l)] != 0.0 {
                h.push(entry(k + j, k + j, k + l, -g * ddt[(j, l)]));
            }
        }
    }
    let de1 = d.column(0).into_owned();
    let mut n1 = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    for j in 0..k {
        n1[(k + j, k + j)] = g * de1[j];
        b[(k + j, 0)] = g * de1[j];
    }
    let mut c = DMatrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    QbSystem::new(a, HessianTensor::from_entries([n; 3], h)?, vec![n1], b, c)
}

/// Unlifted ladder right-hand side `v̇ = −Dᵀ g(Dv) + e₁u` with `g(δ) = e^{40δ} − δ − 1`.
pub fn rc_ladder_direct(k: usize, v: &DVector<f64>, u: f64) -> DVector<f64> {
    let d = ladder_incidence(k);
    let delta = &d * v;
    let current = delta.map(|x| (DIODE_GAIN * x).exp() - x - 1.0);
    let mut out = -(d.transpose() * current);
    out[0] += u;
    out
}

/// Lifted ladder state `(v, e^{40Dv} − 1)`.
pub fn rc_ladder_lift(k: usize, v: &DVector<f64>) -> DVector<f64> {
    let delta = ladder_incidence(k) * v;
    let mut x = DVector::zeros(2 * k);
    x.rows_mut(0, k).copy_from(v);
    for j in 0..k {
        x[k + j] = (DIODE_GAIN * delta[j]).exp_m1();
    }
    x
}

/// Time derivative of the lifted ladder coordinates along the unlifted flow.
pub fn rc_ladder_lifted_derivative(k: usize, v: &DVector<f64>, u: f64) -> DVector<f64> {
    let d = ladder_incidence(k);
    let vdot = rc_ladder_direct(k, v, u);
    let delta = &d * v;
    let ddot = &d * &vdot;
    let mut out = DVector::zeros(2 * k);
    out.rows_mut(0, k).copy_from(&vdot);
    for j in 0..k {
        out[k + j] = DIODE_GAIN * (DIODE_GAIN * delta[j]).exp() * ddot[j];
    }
    out
}

/// Scalar system `(a, h, n, b, c)`; `nn` is the bilinear coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarExample {
    pub a: f64,
    pub h: f64,
    pub nn: f64,
    pub b: f64,
    pub c: f64,
}

impl ScalarExample {
    /// `a = −2`, `h = 1`, `n = 0`, `b = c = 2`.
    pub const STANDARD: ScalarExample = ScalarExample { a: -2.0, h: 1.0, nn: 0.0, b: 2.0, c: 2.0 };
}

pub fn scalar_system(ex: ScalarExample) -> Result<QbSystem> {
    if !(ex.a < 0.0) {
        return Err(QbError::Invalid(format!("scalar example needs a < 0, got {}", ex.a)));
    }
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    QbSystem::new(
        one(ex.a),
        HessianTensor::from_mode1(one(ex.h))?,
        vec![one(ex.nn)],
        one(ex.b),
        one(ex.c),
    )
}

/// Exact energies and their quadratic approximations at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyValues {
    pub lc: f64,
    pub lo: f64,
    pub lc_quad: f64,
    pub lo_quad: f64,
    pub lc_trunc: f64,
    pub lo_trunc: f64,
}

/// Gramians of a scalar example, computed once and reused for energy evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEnergy {
    pub example: ScalarExample,
    /// Full Gramians from the fixed-point iteration.
    pub p: f64,
    pub q: f64,
    pub iterations: usize,
    /// Truncated Gramians from the closed forms.
    pub p_trunc: f64,
    pub q_trunc: f64,
}

/// Iteration settings for scalar examples; a double root makes convergence sublinear.
pub fn scalar_iteration_options() -> IterOptions {
    IterOptions {
        tau: 0.0,
        clip_tol: 0.0,
        max_iter: 1_000_000,
        ..IterOptions::default()
    }
}

impl ScalarEnergy {
    pub fn new(ex: ScalarExample) -> Result<Self> {
        if ex.nn != 0.0 {
            return Err(QbError::Invalid("closed-form energies need n = 0".into()));
        }
        let sys = scalar_system(ex)?;
        let pair = iterate_gramians(&sys, &scalar_iteration_options())?;
        let (a, h, b, c) = (ex.a, ex.h, ex.b, ex.c);
        let a3 = 8.0 * a.powi(3);
        Ok(Self {
            example: ex,
            p: pair.p()[(0, 0)],
            q: pair.q()[(0, 0)],
            iterations: pair.iterations,
            p_trunc: -(h * h * b.powi(4) + 4.0 * a * a * b * b) / a3,
            q_trunc: -(h * h * b * b * c * c + 4.0 * a * a * c * c) / a3,
        })
    }

    /// Interval of `x` on which the observability energy is defined.
    pub fn admissible(&self) -> (f64, f64) {
        let ScalarExample { a, h, .. } = self.example;
        if h == 0.0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else if h > 0.0 {
            (f64::NEG_INFINITY, -a / h)
        } else {
            (-a / h, f64::INFINITY)
        }
    }

    pub fn at(&self, x: f64) -> Result<EnergyValues> {
        let ScalarExample { a, h, b, c, .. } = self.example;
        let (lo_x, hi_x) = self.admissible();
        if !(x > lo_x && x < hi_x) {
            return Err(QbError::Domain { x, interval: format!("({lo_x}, {hi_x})") });
        }
        let lc = -(a * x * x + 2.0 / 3.0 * h * x.powi(3)) / (b * b);
        let lo = if h == 0.0 {
            -c * c * x * x / (4.0 * a)
        } else {
            -(c * c / (2.0 * h)) * (x - (a / h) * (h * x / a).ln_1p())
        };
        Ok(EnergyValues {
            lc,
            lo,
            lc_quad: x * x / (2.0 * self.p),
            lo_quad: self.q * x * x / 2.0,
            lc_trunc: x * x / (2.0 * self.p_trunc),
            lo_trunc: self.q_trunc * x * x / 2.0,
        })
    }
}

/// Convenience wrapper computing the Gramians and evaluating once.
pub fn scalar_energy_functionals(ex: ScalarExample, x: f64) -> Result<EnergyValues> {
    ScalarEnergy::new(ex)?.at(x)
}

/// Truncated Gramians of the scalar example by the general chain.
pub fn scalar_truncated(ex: ScalarExample) -> Result<(f64, f64)> {
    let pair = truncated_gramians(&scalar_system(ex)?, 0.0)?;
    Ok((pair.p()[(0, 0)], pair.q()[(0, 0)]))
}

/// A model generator selectable by family name.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, spec: &ModelSpec) -> Result<QbSystem>;
    /// Shift needed before computing Gramians.
    fn default_shift(&self) -> f64 {
        0.0
    }
    /// `(auxiliary, primary)` index pairs with `x_aux = x_primary²`, if the lifting is by squares.
    fn square_lifting(&self, _spec: &ModelSpec) -> Option<Vec<(usize, usize)>> {
        None
    }
}

struct ChafeeInfanteFamily;
struct FitzhughNagumoFamily;
struct RcLadderFamily;
struct ScalarFamily;

impl ModelFamily for ChafeeInfanteFamily {
    fn name(&self) -> &'static str {
        "chafee_infante"
    }

    fn build(&self, spec: &ModelSpec) -> Result<QbSystem> {
        chafee_infante(spec.k, spec.length.unwrap_or(1.0))
    }

    fn square_lifting(&self, spec: &ModelSpec) -> Option<Vec<(usize, usize)>> {
        Some((0..spec.k).map(|i| (spec.k + i, i)).collect())
    }
}

impl ModelFamily for FitzhughNagumoFamily {
    fn name(&self) -> &'static str {
        "fitzhugh_nagumo"
    }

    fn build(&self, spec: &ModelSpec) -> Result<QbSystem> {
        let d = FhnParams::default();
        let prm = FhnParams {
            length: spec.length.unwrap_or(d.length),
            eps: spec.param("eps", d.eps),
            h: spec.param("h", d.h),
            gamma: spec.param("gamma", d.gamma),
            q: spec.param("q", d.q),
        };
        fitzhugh_nagumo_with(spec.k, prm)
    }

    fn square_lifting(&self, spec: &ModelSpec) -> Option<Vec<(usize, usize)>> {
        Some((0..spec.k).map(|i| (2 * spec.k + i, i)).collect())
    }
}

impl ModelFamily for RcLadderFamily {
    fn name(&self) -> &'static str {
        "rc_ladder"
    }

    fn build(&self, spec: &ModelSpec) -> Result<QbSystem> {
        rc_ladder(spec.k)
    }

    fn default_shift(&self) -> f64 {
        0.05
    }
}

impl ModelFamily for ScalarFamily {
    fn name(&self) -> &'static str {
        "scalar"
    }

    fn build(&self, spec: &ModelSpec) -> Result<QbSystem> {
        let s = ScalarExample::STANDARD;
        scalar_system(ScalarExample {
            a: spec.param("a", s.a),
            h: spec.param("h", s.h),
            nn: spec.param("nn", s.nn),
            b: spec.param("b", s.b),
            c: spec.param("c", s.c),
        })
    }
}

pub fn model_registry() -> Registry<dyn ModelFamily> {
    let mut reg: Registry<dyn ModelFamily> = Registry::new("model family");
    reg.register("chafee_infante", Box::new(ChafeeInfanteFamily));
    reg.register("fitzhugh_nagumo", Box::new(FitzhughNagumoFamily));
    reg.register("rc_ladder", Box::new(RcLadderFamily));
    reg.register("scalar", Box::new(ScalarFamily));
    reg
}

/// Builds the system described by `spec` through the registry.
pub fn build_model(spec: &ModelSpec) -> Result<QbSystem> {
    model_registry().get(spec.family.name())?.build(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_match_the_benchmarks() {
        assert_eq!(chafee_infante(500, 1.0).unwrap().n(), 1000);
        assert_eq!(fitzhugh_nagumo(500).unwrap().n(), 1500);
        assert_eq!(rc_ladder(500).unwrap().n(), 1000);
        assert!(chafee_infante(2, 1.0).is_err());
        assert!(rc_ladder(1).is_err());
    }

    #[test]
    fn fhn_constant_drive() {
        let sys = fitzhugh_nagumo(5).unwrap();
        let r = sys.rhs(&DVector::zeros(15), &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let p = FhnParams::default();
        for i in 0..5 {
            assert!((r[i] - p.q / p.eps).abs() < 1e-14);
            assert!((r[5 + i] - p.q).abs() < 1e-14);
            assert_eq!(r[10 + i], 0.0);
        }
    }

    #[test]
    fn scalar_energy_values() {
        let e = ScalarEnergy {
            example: ScalarExample::STANDARD,
            p: 2.0,
            q: 2.0,
            iterations: 0,
            p_trunc: 1.25,
            q_trunc: 1.25,
        };
        let v = e.at(1.0).unwrap();
        assert!((v.lc - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v.lc_quad, 0.25);
        assert_eq!(v.lc_trunc, 0.4);
        let z = e.at(0.0).unwrap();
        assert_eq!([z.lc, z.lo, z.lc_quad, z.lo_quad, z.lc_trunc, z.lo_trunc], [0.0; 6]);
        assert!(matches!(e.at(2.5), Err(QbError::Domain { .. })));
        assert!(scalar_system(ScalarExample { a: 0.5, ..ScalarExample::STANDARD }).is_err());
    }
}
