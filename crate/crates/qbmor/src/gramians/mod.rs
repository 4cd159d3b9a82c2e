//! Truncated and iterated Gramians of QB systems.

mod bounds;
mod volterra;

pub use bounds::{convergence_report, fixed_point_limit, ConvergenceReport, QuadraticRecurrence};
pub use volterra::volterra_gramian_oracle;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{QbError, Result};
use crate::lowrank::{truncate_factor, truncate_gram, LowRankFactor};
use crate::lyapunov::{LyapunovSolution, LyapunovSolver, DEFAULT_CLIP_TOL};
use crate::registry::Registry;
use crate::system::QbSystem;
use crate::tensor::HessianTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    Truncated,
    Iterated,
}

impl GramianKind {
    pub fn name(self) -> &'static str {
        match self {
            GramianKind::Truncated => "truncated",
            GramianKind::Iterated => "iterated",
        }
    }
}

/// Factors with `P ≈ RRᵀ` (reachability) and `Q ≈ SSᵀ` (observability).
#[derive(Debug, Clone)]
pub struct GramianPair {
    pub r: LowRankFactor,
    pub s: LowRankFactor,
    pub kind: GramianKind,
    /// Number of linear solve rounds (1 for the truncated chain).
    pub iterations: usize,
    /// Relative residuals of the last two Lyapunov solves.
    pub residuals: (f64, f64),
    /// Shift `s` with `A − sI` used during the computation.
    pub shift: f64,
    /// Factors of the linear Gramians `P̂₁`, `Q̂₁`.
    pub linear: (LowRankFactor, LowRankFactor),
    /// `(trace P_k, trace Q_k)` per iterate.
    pub traces: Vec<(f64, f64)>,
}

impl GramianPair {
    pub fn p(&self) -> DMatrix<f64> {
        self.r.to_dense()
    }

    pub fn q(&self) -> DMatrix<f64> {
        self.s.to_dense()
    }
}

/// Iteration controls for the fixed-point Gramian scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterOptions {
    pub tau: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub clip_tol: f64,
}

impl Default for IterOptions {
    fn default() -> Self {
        Self {
            tau: 1e-8,
            rel_tol: 1e-10,
            max_iter: 200,
            clip_tol: DEFAULT_CLIP_TOL,
        }
    }
}

const GAMMA_CHUNK: usize = 1 << 14;

/// `Σ G Gᵀ` over column chunks of `G = H^(mode)(Z ⊗ X)`.
fn quadratic_gram(h: &HessianTensor, mode: usize, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.n();
    let mut w = DMatrix::zeros(n, n);
    if z.ncols() == 0 || x.ncols() == 0 || h.is_zero() {
        return Ok(w);
    }
    let step = (GAMMA_CHUNK / x.ncols()).max(1);
    let mut c0 = 0;
    while c0 < z.ncols() {
        let width = step.min(z.ncols() - c0);
        let g = h.gamma(mode, &z.columns(c0, width).into_owned(), x)?;
        w.gemm(1.0, &g, &g.transpose(), 1.0);
        c0 += width;
    }
    Ok(w)
}

fn add_outer(w: &mut DMatrix<f64>, f: &DMatrix<f64>) {
    if f.ncols() > 0 {
        w.gemm(1.0, f, &f.transpose(), 1.0);
    }
}

/// `H(Z⊗Z)Hᵀ + Σ N_k Z Zᵀ N_kᵀ + BBᵀ`.
fn reachability_rhs(sys: &QbSystem, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut w = quadratic_gram(sys.h(), 1, z, z)?;
    for nk in sys.bilinear() {
        add_outer(&mut w, &(nk * z));
    }
    add_outer(&mut w, sys.b());
    Ok(w)
}

/// `H^(2)(Z⊗X)H^(2)ᵀ + Σ N_kᵀ X Xᵀ N_k + CᵀC`.
pub(crate) fn observability_rhs(sys: &QbSystem, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut w = quadratic_gram(sys.h(), 2, z, x)?;
    for nk in sys.bilinear() {
        add_outer(&mut w, &(nk.transpose() * x));
    }
    add_outer(&mut w, &sys.c().transpose());
    Ok(w)
}

fn reachability_blocks(sys: &QbSystem, z: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let mut blocks = vec![sys.h().gamma(1, z, z)?];
    blocks.extend(sys.bilinear().iter().map(|nk| nk * z));
    blocks.push(sys.b().clone());
    Ok(blocks)
}

fn observability_blocks(sys: &QbSystem, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let mut blocks = vec![sys.h().gamma(2, z, x)?];
    blocks.extend(sys.bilinear().iter().map(|nk| nk.transpose() * x));
    blocks.push(sys.c().transpose());
    Ok(blocks)
}

fn hcat(n: usize, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let width = blocks.iter().map(|b| b.ncols()).sum();
    let mut f = DMatrix::zeros(n, width);
    let mut c = 0;
    for b in blocks {
        f.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    f
}

/// `T_τ` of the factor `[H^(mode)(Z⊗X), …]`; wide factors are compressed through their Gram matrix.
fn truncated_rhs_factor(
    sys: &QbSystem,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    observability: bool,
    tau: f64,
) -> Result<DMatrix<f64>> {
    let n = sys.n();
    let quad_width = z.ncols() * x.ncols();
    let other = if observability { sys.p() } else { sys.m() } + sys.m() * x.ncols();
    let factor = if quad_width + other <= n {
        let blocks = if observability {
            observability_blocks(sys, z, x)?
        } else {
            reachability_blocks(sys, z)?
        };
        truncate_factor(&LowRankFactor::new(hcat(n, &blocks)), tau)?
    } else {
        let w = if observability {
            observability_rhs(sys, z, x)?
        } else {
            reachability_rhs(sys, z)?
        };
        truncate_gram(&w, tau)?
    };
    Ok(factor.scaled())
}

/// Below this order the two independent solves run sequentially.
const PARALLEL_MIN_ORDER: usize = 64;

fn join<A, B, RA, RB>(n: usize, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    if n >= PARALLEL_MIN_ORDER {
        rayon::join(a, b)
    } else {
        (a(), b())
    }
}

fn linear_gramians(solver: &LyapunovSolver, sys: &QbSystem) -> Result<(LyapunovSolution, LyapunovSolution)> {
    let (p1, q1) = join(
        sys.n(),
        || solver.solve_factored(sys.b()),
        || solver.solve_transposed_factored(&sys.c().transpose()),
    );
    Ok((p1.map_err(|e| e.at("reachability solve P1"))?, q1.map_err(|e| e.at("observability solve Q1"))?))
}

/// Truncated Gramians from the chain of four linear Lyapunov equations.
pub fn truncated_gramians(sys: &QbSystem, clip_tol: f64) -> Result<GramianPair> {
    let solver = LyapunovSolver::new(sys.a())
        .map_err(|e| e.at("Schur factorization of A"))?
        .with_clip_tol(clip_tol);
    let (p1, q1) = linear_gramians(&solver, sys)?;
    let z1 = p1.factor.scaled();
    let x1 = q1.factor.scaled();
    let wp = reachability_rhs(sys, &z1)?;
    let wq = observability_rhs(sys, &z1, &x1)?;
    let (pt, qt) = join(sys.n(), || solver.solve(&wp), || solver.solve_transposed(&wq));
    let pt = pt.map_err(|e| e.at("truncated reachability solve"))?;
    let qt = qt.map_err(|e| e.at("truncated observability solve"))?;
    Ok(GramianPair {
        traces: vec![(pt.x.trace(), qt.x.trace())],
        r: pt.factor,
        s: qt.factor,
        kind: GramianKind::Truncated,
        iterations: 1,
        residuals: (pt.residual, qt.residual),
        shift: 0.0,
        linear: (p1.factor, q1.factor),
    })
}

fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    let scale = new.norm();
    if scale == 0.0 {
        if old.norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (new - old).norm() / scale
    }
}

/// Fixed-point iteration for the full quadratic Gramians with rank truncation of every right-hand side.
pub fn iterate_gramians(sys: &QbSystem, opts: &IterOptions) -> Result<GramianPair> {
    let solver = LyapunovSolver::new(sys.a())
        .map_err(|e| e.at("Schur factorization of A"))?
        .with_clip_tol(opts.clip_tol);
    let (p1, q1) = linear_gramians(&solver, sys)?;
    let (p1_norm, q1_norm) = (p1.x.norm(), q1.x.norm());
    let linear = (p1.factor.clone(), q1.factor.clone());
    let mut traces = vec![(p1.x.trace(), q1.x.trace())];
    let (mut p, mut q) = (p1, q1);
    let (mut change_p, mut change_q) = (f64::INFINITY, f64::INFINITY);
    for k in 2..=opts.max_iter.max(1) {
        let z = p.factor.scaled();
        let x = q.factor.scaled();
        let (bk, ck) = join(
            sys.n(),
            || truncated_rhs_factor(sys, &z, &z, false, opts.tau),
            || truncated_rhs_factor(sys, &z, &x, true, opts.tau),
        );
        let (bk, ck) = (bk?, ck?);
        let (pk, qk) = join(
            sys.n(),
            || solver.solve_factored(&bk),
            || solver.solve_transposed_factored(&ck),
        );
        let pk = pk.map_err(|e| e.at("reachability iterate"))?;
        let qk = qk.map_err(|e| e.at("observability iterate"))?;
        change_p = relative_change(&pk.x, &p.x);
        change_q = relative_change(&qk.x, &q.x);
        let growth = (pk.x.norm() / p1_norm).max(qk.x.norm() / q1_norm);
        if (p1_norm > 0.0 && pk.x.norm() > 1e6 * p1_norm) || (q1_norm > 0.0 && qk.x.norm() > 1e6 * q1_norm) {
            return Err(QbError::Divergence { iteration: k, growth });
        }
        traces.push((pk.x.trace(), qk.x.trace()));
        p = pk;
        q = qk;
        if change_p <= opts.rel_tol && change_q <= opts.rel_tol {
            return Ok(GramianPair {
                r: p.factor,
                s: q.factor,
                kind: GramianKind::Iterated,
                iterations: k,
                residuals: (p.residual, q.residual),
                shift: 0.0,
                linear,
                traces,
            });
        }
    }
    Err(QbError::MaxIterations {
        iterations: opts.max_iter,
        change_p,
        change_q,
    })
}

/// Residuals of the defining equations at `(RRᵀ, SSᵀ)`, normalized by `‖BBᵀ‖_F` and `‖CᵀC‖_F`.
///
/// `sys` is the unshifted system; the pair's shift is applied here. Truncated pairs are
/// checked against the truncated chain, iterated pairs against the full quadratic equations.
pub fn gramian_residual(sys: &QbSystem, pair: &GramianPair) -> Result<(f64, f64)> {
    let sys = sys.shift_a(pair.shift);
    let (r, s) = (pair.r.scaled(), pair.s.scaled());
    let (zr, zs) = match pair.kind {
        GramianKind::Truncated => (pair.linear.0.scaled(), pair.linear.1.scaled()),
        GramianKind::Iterated => (r.clone(), s.clone()),
    };
    let a = sys.a();
    let p = &r * r.transpose();
    let q = &s * s.transpose();
    let ap = a * &p;
    let qa = &q * a;
    let res_p = &ap + ap.transpose() + reachability_rhs(&sys, &zr)?;
    let res_q = &qa + qa.transpose() + observability_rhs(&sys, &zr, &zs)?;
    let bb = (sys.b() * sys.b().transpose()).norm().max(f64::EPSILON);
    let cc = (sys.c().transpose() * sys.c()).norm().max(f64::EPSILON);
    Ok((res_p.norm() / bb, res_q.norm() / cc))
}

/// A named Gramian computation selectable at runtime.
pub trait GramianMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, sys: &QbSystem) -> Result<GramianPair>;
}

#[derive(Debug, Clone, Copy)]
pub struct TruncatedMethod {
    pub clip_tol: f64,
}

impl GramianMethod for TruncatedMethod {
    fn name(&self) -> &'static str {
        "truncated"
    }

    fn compute(&self, sys: &QbSystem) -> Result<GramianPair> {
        truncated_gramians(sys, self.clip_tol)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IteratedMethod {
    pub options: IterOptions,
}

impl GramianMethod for IteratedMethod {
    fn name(&self) -> &'static str {
        "iterated"
    }

    fn compute(&self, sys: &QbSystem) -> Result<GramianPair> {
        iterate_gramians(sys, &self.options)
    }
}

/// Builds a Gramian method from iteration settings.
pub type GramianFactory = dyn Fn(&IterOptions) -> Box<dyn GramianMethod> + Send + Sync;

/// Registry of the built-in Gramian kinds.
pub fn gramian_registry() -> Registry<GramianFactory> {
    let mut reg: Registry<GramianFactory> = Registry::new("gramian kind");
    reg.register("truncated", Box::new(|o: &IterOptions| Box::new(TruncatedMethod { clip_tol: o.clip_tol })));
    reg.register("iterated", Box::new(|o: &IterOptions| Box::new(IteratedMethod { options: *o })));
    reg
}

/// Runs `method` on `A − shift·I` and records the shift.
pub fn compute_gramians(sys: &QbSystem, method: &dyn GramianMethod, shift: f64) -> Result<GramianPair> {
    let shifted;
    let target = if shift != 0.0 {
        shifted = sys.shift_a(shift);
        &shifted
    } else {
        sys
    };
    let mut pair = method.compute(target)?;
    pair.shift = shift;
    Ok(pair)
}
