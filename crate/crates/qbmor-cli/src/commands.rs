//! Subcommand bodies; each reads its inputs from disk, writes its outputs and logs one line per stage.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use qbmor::balancing::normalized_hankel_values;
use qbmor::gramians::{compute_gramians, convergence_report, gramian_registry, gramian_residual, ConvergenceReport, GramianKind, IterOptions};
use qbmor::models::{ScalarEnergy, ScalarExample};
use qbmor::simulate::{compare_outputs, integrate_with, integrator_registry, OutputComparison, SimOptions};
use qbmor::{balance_and_reduce, build_model, hankel_values, InputSignal, Method, ModelSpec, QbSystem, Trajectory};
use serde::Serialize;

use crate::config::{ModelSource, RunConfig};
use crate::error::{CliError, PathContext, Result};
use crate::manifest::{self, GramianRecord, Provenance, ReductionRecord, SystemManifest};
use crate::table;

fn log(stage: &str, msg: impl std::fmt::Display) {
    println!("[{stage}] {msg}");
}

pub fn model_build(spec: &ModelSpec, out: &Path) -> Result<SystemManifest> {
    let sys = build_model(spec)?;
    let manifest = manifest::write_system(out, &sys, Provenance::Generator(spec.clone()), Vec::new())?;
    log("model", format_args!("{} k = {} -> n = {}, written to {}", spec.family.name(), spec.k, sys.n(), out.display()));
    Ok(manifest)
}

/// `shift` defaults to the one recorded for the system's family; the factors are computed
/// for `A − shift·I` and the residuals are checked against the same shifted system.
pub fn gramians(system: &Path, kind: GramianKind, opts: &IterOptions, shift: Option<f64>, out: &Path) -> Result<GramianRecord> {
    let (sys, manifest) = manifest::read_system(system)?;
    let shift = shift.unwrap_or_else(|| manifest.default_shift());
    let method = gramian_registry().get(kind.name())?(opts);
    let pair = compute_gramians(&sys, method.as_ref(), shift)?;
    let residual = gramian_residual(&sys, &pair)?;
    let record = manifest::write_gramians(out, &pair, residual, system)?;
    log(
        "gramians",
        format_args!(
            "{} shift {shift}: rank R {}, rank S {}, residuals {:.3e} / {:.3e}",
            kind.name(),
            record.rank_r,
            record.rank_s,
            residual.0,
            residual.1
        ),
    );
    Ok(record)
}

pub fn hsv(gramians: &Path, out: &Path) -> Result<DVector<f64>> {
    let (pair, _) = manifest::read_gramians(gramians)?;
    let sigma = hankel_values(&pair);
    table::write_hsv(out, &sigma, &normalized_hankel_values(&pair))?;
    log("hsv", format_args!("{} singular values written to {}", sigma.len(), out.display()));
    Ok(sigma)
}

pub fn reduce(system: &Path, gramians: &Path, n_hat: usize, out: &Path) -> Result<ReductionRecord> {
    let (sys, _) = manifest::read_system(system)?;
    let (pair, _) = manifest::read_gramians(gramians)?;
    if pair.r.nrows() != sys.n() {
        return Err(CliError::inconsistent(
            gramians,
            format!("factors have {} rows but the system has n = {}", pair.r.nrows(), sys.n()),
        ));
    }
    let model = balance_and_reduce(&sys, &pair, n_hat)?;
    let provenance = Provenance::Reduced {
        system: system.display().to_string(),
        gramians: gramians.display().to_string(),
        n_hat,
    };
    let record = manifest::write_reduced(out, &model, provenance)?;
    let radius = match record.radius() {
        Some(r) => format!("{r:e}"),
        None => "n/a".into(),
    };
    log("reduce", format_args!("n_hat = {n_hat}, |W'V - I| = {:.3e}, radius {radius}", record.projector_defect));
    if let Some(w) = &record.warning {
        log("reduce", format_args!("warning: {w}"));
    }
    Ok(record)
}

/// A CSV file `t,u1,...` when `spec` names an existing file, otherwise signal names.
pub fn parse_signal(spec: &str) -> Result<InputSignal> {
    let path = Path::new(spec);
    if path.is_file() {
        table::read_signal(path)
    } else {
        Ok(InputSignal::parse(spec)?)
    }
}

pub fn simulate_system(sys: &QbSystem, manifest: &SystemManifest, u: &InputSignal, t_span: (f64, f64), dt: f64, method: Method) -> Result<Trajectory> {
    let opts = SimOptions { store_states: Some(false), lifting: manifest.lifting() };
    let integrator = integrator_registry();
    let traj = integrate_with(sys, u, t_span, dt, integrator.get(method.name())?, &DVector::zeros(sys.n()), &opts)?;
    let defect = traj.stats.max_manifold_defect.map(|d| format!(", manifold defect {d:.3e}")).unwrap_or_default();
    log("simulate", format_args!("{} steps of {} over [{}, {}]{defect}", traj.stats.steps, method.name(), t_span.0, t_span.1));
    Ok(traj)
}

pub fn simulate(system: &Path, signal: &str, t_end: f64, dt: f64, method: Method, out: &Path) -> Result<Trajectory> {
    let (sys, manifest) = manifest::read_system(system)?;
    let u = parse_signal(signal)?;
    let traj = simulate_system(&sys, &manifest, &u, (0.0, t_end), dt, method)?;
    table::write_trajectory(out, &traj)?;
    Ok(traj)
}

pub fn compare(full: &Path, reduced: &Path, out: &Path) -> Result<OutputComparison> {
    let a = table::read_trajectory(full)?;
    let b = table::read_trajectory(reduced)?;
    let cmp = compare_outputs(&a, &b)?;
    table::write_errors(out, &a.t, &cmp.rel_err_t)?;
    log("compare", format_args!("rel_L2 = {:.3e}, rel_Linf = {:.3e}", cmp.rel_l2, cmp.rel_linf));
    Ok(cmp)
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnosis {
    pub shift: f64,
    #[serde(flatten)]
    pub report: ConvergenceReport,
}

pub fn diagnose(system: &Path, shift: Option<f64>, out: &Path) -> Result<Diagnosis> {
    let (sys, manifest) = manifest::read_system(system)?;
    let shift = shift.unwrap_or_else(|| manifest.default_shift());
    let report = convergence_report(&sys.shift_a(shift))?;
    log(
        "diagnose",
        format_args!("conditions i/ii/iii/q = {}/{}/{}/{}", report.cond_i, report.cond_ii, report.cond_iii, report.cond_q),
    );
    let diagnosis = Diagnosis { shift, report };
    manifest::write_json(out, &diagnosis)?;
    Ok(diagnosis)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarDemo {
    #[serde(flatten)]
    pub energy: ScalarEnergy,
    /// Value of the sign-flipped closed form for `P`.
    pub p_closed_form_printed: f64,
    pub notes: Vec<String>,
}

pub const SCALAR_GRID: usize = 201;

/// Energy curves on `x ∈ [−1, 1]` and the Gramian values of the standard scalar example.
pub fn scalar_demo(out: &Path) -> Result<ScalarDemo> {
    fs::create_dir_all(out).at(out)?;
    let ex = ScalarExample::STANDARD;
    let energy = ScalarEnergy::new(ex)?;
    let path = out.join("energy.csv");
    let mut w = csv::Writer::from_path(&path).at(&path)?;
    w.write_record(["x", "lc", "lo", "lc_quad", "lo_quad", "lc_trunc", "lo_trunc"]).at(&path)?;
    for i in 0..SCALAR_GRID {
        let x = -1.0 + 2.0 * i as f64 / (SCALAR_GRID - 1) as f64;
        let e = energy.at(x)?;
        let row = [x, e.lc, e.lo, e.lc_quad, e.lo_quad, e.lc_trunc, e.lo_trunc];
        w.write_record(row.map(|v| format!("{v:e}"))).at(&path)?;
    }
    w.flush().at(&path)?;

    let ScalarExample { a, h, b, .. } = ex;
    let printed = -(-a - (a * a - h * h * b * b).sqrt()) / (h * h);
    let note = format!(
        "sign discrepancy: the closed form P = -(-a - sqrt(a^2 - h^2 b^2))/h^2 evaluates to {printed} here, \
         but P must solve h^2 P^2 + 2aP + b^2 = 0, whose admissible root is {}; the reported P is the root of the equation",
        (-a - (a * a - h * h * b * b).sqrt()) / (h * h)
    );
    let demo = ScalarDemo { energy, p_closed_form_printed: printed, notes: vec![note] };
    manifest::write_json(&out.join("gramians.json"), &demo)?;
    log("scalar-demo", format_args!("P = {}, Q = {}, P_T = {}, Q_T = {}", energy.p, energy.q, energy.p_trunc, energy.q_trunc));
    Ok(demo)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub n: usize,
    pub n_hat: usize,
    pub gramians: GramianRecord,
    pub radius: Option<f64>,
    pub radius_infinite: bool,
    pub comparison: OutputComparison,
}

/// Model, Gramians, HSVs, reduction, full and reduced simulations and their comparison.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let outputs = &cfg.outputs;
    fs::create_dir_all(outputs).at(outputs)?;
    let system: PathBuf = match &cfg.model {
        ModelSource::Manifest { manifest } => manifest.clone(),
        ModelSource::Spec(spec) => {
            let dir = outputs.join("system");
            model_build(spec, &dir)?;
            dir
        }
    };
    let g = &cfg.gramians;
    let gram_dir = outputs.join("gramians");
    let record = gramians(&system, g.kind, &g.options(), g.shift, &gram_dir)?;
    hsv(&gram_dir, &outputs.join("hsv.csv"))?;
    let reduced_dir = outputs.join("reduced");
    let reduction = reduce(&system, &gram_dir, cfg.reduce.n_hat, &reduced_dir)?;

    let s = &cfg.simulate;
    let u = parse_signal(&s.signals)?;
    let (sys, manifest) = manifest::read_system(&system)?;
    let full = simulate_system(&sys, &manifest, &u, s.t_span, s.dt, s.method)?;
    let (sys_hat, manifest_hat) = manifest::read_system(&reduced_dir)?;
    let reduced = simulate_system(&sys_hat, &manifest_hat, &u, s.t_span, s.dt, s.method)?;
    let full_csv = outputs.join("full.csv");
    let reduced_csv = outputs.join("reduced.csv");
    table::write_trajectory(&full_csv, &full)?;
    table::write_trajectory(&reduced_csv, &reduced)?;
    let comparison = compare(&full_csv, &reduced_csv, &outputs.join("error.csv"))?;
    let summary = RunSummary {
        n: sys.n(),
        n_hat: reduction.n_hat,
        gramians: record,
        radius: reduction.radius,
        radius_infinite: reduction.radius_infinite,
        comparison,
    };
    manifest::write_json(&outputs.join("summary.json"), &summary)?;
    Ok(summary)
}
