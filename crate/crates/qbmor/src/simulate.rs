//! Fixed-step time integration of QB systems and output comparison.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::balancing::ReducedModel;
use crate::error::{QbError, Result};
use crate::registry::Registry;
use crate::system::QbSystem;

const DIVERGENCE_NORM: f64 = 1e8;
const STORE_STATES_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedSignal {
    RcU1,
    RcU2,
    CiU1,
    CiU2,
    FnI0,
    ConstOne,
}

impl NamedSignal {
    pub const ALL: [NamedSignal; 6] = [
        NamedSignal::RcU1,
        NamedSignal::RcU2,
        NamedSignal::CiU1,
        NamedSignal::CiU2,
        NamedSignal::FnI0,
        NamedSignal::ConstOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NamedSignal::RcU1 => "rc_u1",
            NamedSignal::RcU2 => "rc_u2",
            NamedSignal::CiU1 => "ci_u1",
            NamedSignal::CiU2 => "ci_u2",
            NamedSignal::FnI0 => "fn_i0",
            NamedSignal::ConstOne => "const_one",
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        match self {
            NamedSignal::RcU1 => 5.0 * ((2.0 * PI * t / 10.0).sin() + 1.0),
            NamedSignal::RcU2 => 10.0 * t * t * (-t / 5.0).exp(),
            NamedSignal::CiU1 => 5.0 * t * (-t).exp(),
            NamedSignal::CiU2 => 30.0 * ((PI * t).sin() + 1.0),
            NamedSignal::FnI0 => 5e4 * t.powi(3) * (-15.0 * t).exp(),
            NamedSignal::ConstOne => 1.0,
        }
    }
}

impl FromStr for NamedSignal {
    type Err = QbError;

    fn from_str(s: &str) -> Result<Self> {
        NamedSignal::ALL
            .into_iter()
            .find(|sig| sig.name() == s)
            .ok_or_else(|| QbError::UnknownName {
                kind: "signal",
                name: s.to_string(),
                available: NamedSignal::ALL.map(|s| s.name()).join(", "),
            })
    }
}

/// Piecewise-linear signal, held constant outside the sample range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    t: Vec<f64>,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != values.len() {
            return Err(QbError::dim("signal samples", t.len(), values.len()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QbError::Invalid("signal sample times must be strictly increasing".into()));
        }
        if t.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(QbError::Invalid("signal samples must be finite".into()));
        }
        Ok(Self { t, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.t.len() - 1;
        if t <= self.t[0] {
            return self.values[0];
        }
        if t >= self.t[last] {
            return self.values[last];
        }
        let i = self.t.partition_point(|s| *s <= t) - 1;
        let w = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Zero,
    Named(NamedSignal),
    Sampled(SampledSignal),
}

impl Channel {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Channel::Zero => 0.0,
            Channel::Named(s) => s.eval(t),
            Channel::Sampled(s) => s.eval(t),
        }
    }
}

/// Input `u(t)`, one channel per system input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub channels: Vec<Channel>,
}

impl InputSignal {
    pub fn zero(m: usize) -> Self {
        Self { channels: vec![Channel::Zero; m] }
    }

    pub fn named(signals: &[NamedSignal]) -> Self {
        Self { channels: signals.iter().map(|s| Channel::Named(*s)).collect() }
    }

    /// Comma-separated channel names; `zero` is accepted for an idle channel.
    pub fn parse(spec: &str) -> Result<Self> {
        let channels = spec
            .split(',')
            .map(|s| match s.trim() {
                "zero" | "0" => Ok(Channel::Zero),
                name => name.parse().map(Channel::Named),
            })
            .collect::<Result<_>>()?;
        Ok(Self { channels })
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn is_zero(&self) -> bool {
        self.channels.iter().all(|c| *c == Channel::Zero)
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.channels.iter().map(|c| c.eval(t)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub steps: usize,
    pub max_manifold_defect: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// Output samples, one column per time point.
    pub y: DMatrix<f64>,
    pub x: Option<DMatrix<f64>>,
    pub stats: SimStats,
}

impl Trajectory {
    pub fn final_output(&self) -> DVector<f64> {
        self.y.column(self.y.ncols() - 1).into_owned()
    }
}

/// `Ax + H(x⊗x) + Σ N_k x u_k + Bu`.
pub fn qb_rhs(sys: &QbSystem, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    sys.rhs(x, u)
}

/// Everything in the right-hand side except `Ax`.
fn nonlinear_part(sys: &QbSystem, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = sys.h().apply_quadratic(x)?;
    for (nk, uk) in sys.bilinear().iter().zip(u.iter()) {
        if *uk != 0.0 {
            out.gemv(*uk, nk, x, 1.0);
        }
    }
    out.gemv(1.0, sys.b(), u, 1.0);
    Ok(out)
}

/// One fixed step `x(t) ↦ x(t + dt)`.
pub trait Stepper {
    fn step(&mut self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
}

pub trait Integrator: Send + Sync {
    fn name(&self) -> &'static str;
    fn stepper<'a>(&self, sys: &'a QbSystem, u: &'a InputSignal, dt: f64) -> Result<Box<dyn Stepper + 'a>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    ImexCn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::ImexCn => "imex_cn",
        }
    }
}

impl FromStr for Method {
    type Err = QbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "imex_cn" => Ok(Method::ImexCn),
            _ => Err(QbError::UnknownName {
                kind: "integrator",
                name: s.to_string(),
                available: "imex_cn, rk4".into(),
            }),
        }
    }
}

pub struct Rk4;

struct Rk4Stepper<'a> {
    sys: &'a QbSystem,
    u: &'a InputSignal,
    dt: f64,
}

impl Stepper for Rk4Stepper<'_> {
    fn step(&mut self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (sys, dt) = (self.sys, self.dt);
        let um = self.u.eval(t + 0.5 * dt);
        let k1 = sys.rhs(x, &self.u.eval(t))?;
        let k2 = sys.rhs(&(x + &k1 * (0.5 * dt)), &um)?;
        let k3 = sys.rhs(&(x + &k2 * (0.5 * dt)), &um)?;
        let k4 = sys.rhs(&(x + &k3 * dt), &self.u.eval(t + dt))?;
        Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
    }
}

impl Integrator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn stepper<'a>(&self, sys: &'a QbSystem, u: &'a InputSignal, dt: f64) -> Result<Box<dyn Stepper + 'a>> {
        Ok(Box::new(Rk4Stepper { sys, u, dt }))
    }
}

/// Crank-Nicolson on `Ax`, explicit trapezoidal predictor-corrector on the rest.
pub struct ImexCn;

struct ImexStepper<'a> {
    sys: &'a QbSystem,
    u: &'a InputSignal,
    dt: f64,
    /// `(I − dt/2·A)⁻¹`
    m: DMatrix<f64>,
    /// `(I − dt/2·A)⁻¹(I + dt/2·A)`
    k: DMatrix<f64>,
}

impl Stepper for ImexStepper<'_> {
    fn step(&mut self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let dt = self.dt;
        let kx = &self.k * x;
        let mg = &self.m * nonlinear_part(self.sys, x, &self.u.eval(t))?;
        let predicted = &kx + &mg * dt;
        let mg_star = &self.m * nonlinear_part(self.sys, &predicted, &self.u.eval(t + dt))?;
        Ok(kx + (mg + mg_star) * (0.5 * dt))
    }
}

impl Integrator for ImexCn {
    fn name(&self) -> &'static str {
        "imex_cn"
    }

    fn stepper<'a>(&self, sys: &'a QbSystem, u: &'a InputSignal, dt: f64) -> Result<Box<dyn Stepper + 'a>> {
        let n = sys.n();
        let half = sys.a() * (0.5 * dt);
        let eye = DMatrix::<f64>::identity(n, n);
        let m = (&eye - &half)
            .lu()
            .try_inverse()
            .ok_or_else(|| QbError::Invalid(format!("I - dt/2 A is singular for dt = {dt}")))?;
        let k = &m * (eye + half);
        Ok(Box::new(ImexStepper { sys, u, dt, m, k }))
    }
}

pub type IntegratorFactory = dyn Integrator;

pub fn integrator_registry() -> Registry<IntegratorFactory> {
    let mut reg: Registry<IntegratorFactory> = Registry::new("integrator");
    reg.register("rk4", Box::new(Rk4));
    reg.register("imex_cn", Box::new(ImexCn));
    reg
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Defaults to storing states when `n ≤ 2000`.
    pub store_states: Option<bool>,
    /// `(auxiliary, primary)` pairs for the manifold defect `max |x_aux − x_primary²|`.
    pub lifting: Option<Vec<(usize, usize)>>,
}

pub fn integrate(
    sys: &QbSystem,
    u: &InputSignal,
    t_span: (f64, f64),
    dt: f64,
    method: Method,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    integrate_with(sys, u, t_span, dt, integrator_registry().get(method.name())?, x0, &SimOptions::default())
}

/// Integrates on a uniform grid; the step is shrunk so that it divides the span.
pub fn integrate_with(
    sys: &QbSystem,
    u: &InputSignal,
    t_span: (f64, f64),
    dt: f64,
    integrator: &dyn Integrator,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(QbError::Invalid(format!("step size {dt} must be positive")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(QbError::Invalid(format!("time span [{t0}, {t1}] is empty")));
    }
    if x0.len() != sys.n() {
        return Err(QbError::dim("initial state", sys.n(), x0.len()));
    }
    if u.m() != sys.m() {
        return Err(QbError::dim("input channels", sys.m(), u.m()));
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut stepper = integrator.stepper(sys, u, h)?;
    let store = opts.store_states.unwrap_or(sys.n() <= STORE_STATES_LIMIT);
    let defect = |x: &DVector<f64>| {
        opts.lifting
            .as_ref()
            .map(|pairs| pairs.iter().fold(0.0f64, |acc, &(a, p)| acc.max((x[a] - x[p] * x[p]).abs())))
    };

    let mut t = Vec::with_capacity(steps + 1);
    let mut y = DMatrix::zeros(sys.p(), steps + 1);
    let mut states = store.then(|| DMatrix::zeros(sys.n(), steps + 1));
    let mut max_defect = defect(x0);
    let mut x = x0.clone();
    for i in 0..=steps {
        let ti = if i == steps { t1 } else { t0 + i as f64 * h };
        if i > 0 {
            x = stepper.step(t0 + (i - 1) as f64 * h, &x)?;
            let norm = x.norm();
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                return Err(QbError::Diverged { t: ti, norm });
            }
            if let (Some(m), Some(d)) = (max_defect.as_mut(), defect(&x)) {
                *m = m.max(d);
            }
        }
        t.push(ti);
        y.set_column(i, &sys.output(&x));
        if let Some(s) = states.as_mut() {
            s.set_column(i, &x);
        }
    }
    Ok(Trajectory {
        t,
        y,
        x: states,
        stats: SimStats { steps, max_manifold_defect: max_defect },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputComparison {
    pub rel_err_t: Vec<f64>,
    #[serde(rename = "rel_L2")]
    pub rel_l2: f64,
    #[serde(rename = "rel_Linf")]
    pub rel_linf: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Errors relative to the full output: pointwise and `L∞` against `max_t ‖y(t)‖`, `L²` against `‖y‖_{L²}`.
pub fn compare_outputs(full: &Trajectory, reduced: &Trajectory) -> Result<OutputComparison> {
    if full.t.len() != reduced.t.len() {
        return Err(QbError::dim("time grid", full.t.len(), reduced.t.len()));
    }
    if let Some(i) = full
        .t
        .iter()
        .zip(&reduced.t)
        .position(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(QbError::Invalid(format!(
            "time grids differ at sample {i}: {} vs {}",
            full.t[i], reduced.t[i]
        )));
    }
    if full.y.shape() != reduced.y.shape() {
        return Err(QbError::dim("output samples", format!("{:?}", full.y.shape()), format!("{:?}", reduced.y.shape())));
    }
    let diff = &full.y - &reduced.y;
    let err: Vec<f64> = diff.column_iter().map(|c| c.norm()).collect();
    let peak = full.y.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(OutputComparison {
        rel_err_t: err.iter().map(|e| ratio(*e, peak)).collect(),
        rel_l2: ratio(diff.norm(), full.y.norm()),
        rel_linf: ratio(err.iter().copied().fold(0.0, f64::max), peak),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub decreasing: bool,
    /// `x̂ᵀΣ₁x̂` at every time point.
    pub trace: Vec<f64>,
}

/// Integrates the autonomous reduced model and checks that `x̂ᵀΣ₁x̂` decreases at every step.
pub fn lyapunov_certificate(model: &ReducedModel, x0: &DVector<f64>, t_span: (f64, f64), dt: f64) -> Result<Certificate> {
    let r = model
        .radius
        .ok_or_else(|| QbError::Invalid("reduced model carries no stability radius".into()))?;
    let norm = x0.norm();
    if norm > 0.0 && !(norm < r) {
        return Err(QbError::Invalid(format!("initial state norm {norm:e} is not below the stability radius r = {r:e}")));
    }
    let sys = &model.sys_hat;
    let u = InputSignal::zero(sys.m());
    let opts = SimOptions { store_states: Some(true), lifting: None };
    let traj = integrate_with(sys, &u, t_span, dt, &ImexCn, x0, &opts)?;
    let sigma = model.sigma_retained();
    let states = traj.x.expect("states requested");
    let trace: Vec<f64> = states
        .column_iter()
        .map(|x| x.iter().zip(sigma.iter()).map(|(xi, s)| s * xi * xi).sum())
        .collect();
    let slack = 1e-12 * trace[0];
    let decreasing = trace.windows(2).all(|w| w[1] - w[0] <= slack && (w[1] < w[0] || w[0] == 0.0));
    Ok(Certificate { decreasing, trace })
}
