//! On-disk systems, Gramian factors and reduced models: JSON manifests beside Matrix Market files.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use qbmor::gramians::{GramianKind, GramianPair};
use qbmor::lowrank::LowRankFactor;
use qbmor::models::{model_registry, ModelSpec};
use qbmor::tensor::TensorEntry;
use qbmor::{HessianTensor, QbSystem, ReducedModel};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CliError, PathContext, Result};
use crate::mtx::{self, MtxData, Triplets};

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GRAMIAN_FILE: &str = "gramians.json";
pub const REDUCTION_FILE: &str = "reduction.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generator(ModelSpec),
    Reduced { system: String, gramians: String, n_hat: usize },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemPaths {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "C")]
    pub c: String,
    /// Mode-1 unfolding, `n × n²` coordinate file.
    #[serde(rename = "H")]
    pub h: String,
    #[serde(rename = "N")]
    pub n: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemManifest {
    pub version: String,
    /// `(n, m, p)`.
    pub dims: (usize, usize, usize),
    pub paths: SystemPaths,
    pub hessian_symmetric: bool,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SystemManifest {
    /// Gramian shift recorded in the generator spec or the family default.
    pub fn default_shift(&self) -> f64 {
        match &self.provenance {
            Provenance::Generator(spec) => spec.shift.unwrap_or_else(|| {
                model_registry().get(spec.family.name()).map(|f| f.default_shift()).unwrap_or(0.0)
            }),
            _ => 0.0,
        }
    }

    /// `(auxiliary, primary)` square-lifting pairs of generated systems.
    pub fn lifting(&self) -> Option<Vec<(usize, usize)>> {
        match &self.provenance {
            Provenance::Generator(spec) => model_registry().get(spec.family.name()).ok()?.square_lifting(spec),
            _ => None,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).at(path)?;
    text.push('\n');
    fs::write(path, text).at(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).at(path)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)
}

fn write_dense(dir: &Path, name: &str, m: &DMatrix<f64>) -> Result<()> {
    let path = dir.join(name);
    mtx::write_matrix(&path, m).at(&path)
}

fn read_dense(dir: &Path, name: &str, shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let path = dir.join(name);
    let m = mtx::read_matrix(&path).at(&path)?;
    check_shape(&path, m.shape(), shape)?;
    Ok(m)
}

fn check_shape(path: &Path, found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if found != expected {
        return Err(CliError::inconsistent(
            path,
            format!(
                "file is {}x{} but the manifest dims require {}x{}; regenerate the file or fix 'dims'",
                found.0, found.1, expected.0, expected.1
            ),
        ));
    }
    Ok(())
}

/// Mode-1 unfolding of `H` as coordinate triplets.
pub fn hessian_triplets(h: &HessianTensor) -> Triplets {
    let n = h.n();
    let entries = h.entries().into_iter().map(|e| (e.i, e.j * n + e.k, e.value)).collect();
    Triplets { rows: n, cols: n * n, entries }
}

pub fn hessian_from(data: MtxData, n: usize) -> qbmor::Result<HessianTensor> {
    match data {
        MtxData::Dense(m) => HessianTensor::from_mode1(m),
        MtxData::Sparse(t) => {
            let entries = t
                .entries
                .into_iter()
                .map(|(i, col, value)| TensorEntry { i, j: col / n, k: col % n, value })
                .collect();
            HessianTensor::from_entries([n, n, n], entries)
        }
    }
}

/// Writes `sys` into `dir` as a manifest plus one Matrix Market file per coefficient.
pub fn write_system(dir: &Path, sys: &QbSystem, provenance: Provenance, notes: Vec<String>) -> Result<SystemManifest> {
    create_dir(dir)?;
    let paths = SystemPaths {
        a: "A.mtx".into(),
        b: "B.mtx".into(),
        c: "C.mtx".into(),
        h: "H.mtx".into(),
        n: (1..=sys.m()).map(|k| format!("N{k}.mtx")).collect(),
    };
    write_dense(dir, &paths.a, sys.a())?;
    write_dense(dir, &paths.b, sys.b())?;
    write_dense(dir, &paths.c, sys.c())?;
    let h_path = dir.join(&paths.h);
    mtx::write_triplets(&h_path, &hessian_triplets(sys.h())).at(&h_path)?;
    for (name, nk) in paths.n.iter().zip(sys.bilinear()) {
        write_dense(dir, name, nk)?;
    }
    let manifest = SystemManifest {
        version: FORMAT_VERSION.into(),
        dims: (sys.n(), sys.m(), sys.p()),
        paths,
        hessian_symmetric: sys.h().is_symmetric(),
        provenance,
        notes,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<SystemManifest> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: SystemManifest = read_json(&path)?;
    if manifest.version != FORMAT_VERSION {
        return Err(CliError::inconsistent(
            &path,
            format!("format version '{}' is not supported; expected '{FORMAT_VERSION}'", manifest.version),
        ));
    }
    let m = manifest.dims.1;
    if manifest.paths.n.len() != m {
        return Err(CliError::inconsistent(
            &path,
            format!("dims give m = {m} inputs but {} N files are listed", manifest.paths.n.len()),
        ));
    }
    Ok(manifest)
}

/// Reads and validates a system directory.
pub fn read_system(dir: &Path) -> Result<(QbSystem, SystemManifest)> {
    let manifest = read_manifest(dir)?;
    let (n, m, p) = manifest.dims;
    let paths = &manifest.paths;
    let a = read_dense(dir, &paths.a, (n, n))?;
    let b = read_dense(dir, &paths.b, (n, m))?;
    let c = read_dense(dir, &paths.c, (p, n))?;
    let bilinear = paths.n.iter().map(|name| read_dense(dir, name, (n, n))).collect::<Result<Vec<_>>>()?;
    let h_path = dir.join(&paths.h);
    let data = mtx::read(&h_path).at(&h_path)?;
    check_shape(&h_path, data.shape(), (n, n * n))?;
    let h = hessian_from(data, n)?;
    let sys = QbSystem::new(a, h, bilinear, b, c)?;
    Ok((sys, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianRecord {
    pub version: String,
    pub kind: GramianKind,
    pub shift: f64,
    pub iterations: usize,
    pub rank_r: usize,
    pub rank_s: usize,
    /// Residuals of the defining equations at the stored factors.
    pub residual: Residuals,
    /// Residuals of the last Lyapunov solves.
    pub solve_residual: Residuals,
    pub traces: Vec<(f64, f64)>,
    pub system: String,
}

const FACTOR_FILES: [&str; 4] = ["R.mtx", "S.mtx", "R_linear.mtx", "S_linear.mtx"];

/// Stores the scaled factors `R`, `S` and those of the linear Gramians.
pub fn write_gramians(dir: &Path, pair: &GramianPair, residual: (f64, f64), system: &Path) -> Result<GramianRecord> {
    create_dir(dir)?;
    let factors = [&pair.r, &pair.s, &pair.linear.0, &pair.linear.1];
    for (name, f) in FACTOR_FILES.iter().zip(factors) {
        write_dense(dir, name, &f.scaled())?;
    }
    let record = GramianRecord {
        version: FORMAT_VERSION.into(),
        kind: pair.kind,
        shift: pair.shift,
        iterations: pair.iterations,
        rank_r: pair.r.rank(),
        rank_s: pair.s.rank(),
        residual: Residuals { p: residual.0, q: residual.1 },
        solve_residual: Residuals { p: pair.residuals.0, q: pair.residuals.1 },
        traces: pair.traces.clone(),
        system: system.display().to_string(),
    };
    write_json(&dir.join(GRAMIAN_FILE), &record)?;
    Ok(record)
}

pub fn read_gramians(dir: &Path) -> Result<(GramianPair, GramianRecord)> {
    let path = dir.join(GRAMIAN_FILE);
    let record: GramianRecord = read_json(&path)?;
    let mut factors = Vec::with_capacity(4);
    for name in FACTOR_FILES {
        let p = dir.join(name);
        factors.push(LowRankFactor::new(mtx::read_matrix(&p).at(&p)?));
    }
    let n = factors[0].nrows();
    if let Some(bad) = factors.iter().position(|f| f.nrows() != n) {
        return Err(CliError::inconsistent(
            &dir.join(FACTOR_FILES[bad]),
            format!("factor has {} rows but R.mtx has {n}", factors[bad].nrows()),
        ));
    }
    let mut it = factors.into_iter();
    let mut next = || it.next().expect("four factors");
    let pair = GramianPair {
        r: next(),
        s: next(),
        kind: record.kind,
        iterations: record.iterations,
        residuals: (record.solve_residual.p, record.solve_residual.q),
        shift: record.shift,
        linear: (next(), next()),
        traces: record.traces.clone(),
    };
    Ok((pair, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub version: String,
    pub n_hat: usize,
    pub sigma: Vec<f64>,
    /// Finite stability radius; see `radius_infinite` for the unbounded case.
    pub radius: Option<f64>,
    pub radius_infinite: bool,
    pub shift: f64,
    pub kind: GramianKind,
    pub projector_defect: f64,
    pub warning: Option<String>,
}

impl ReductionRecord {
    pub fn radius(&self) -> Option<f64> {
        if self.radius_infinite {
            Some(f64::INFINITY)
        } else {
            self.radius
        }
    }
}

/// Reduced system plus `V.mtx`, `W.mtx` and the reduction record.
pub fn write_reduced(dir: &Path, model: &ReducedModel, provenance: Provenance) -> Result<ReductionRecord> {
    let notes = model.meta.warning.iter().cloned().collect();
    write_system(dir, &model.sys_hat, provenance, notes)?;
    write_dense(dir, "V.mtx", &model.v)?;
    write_dense(dir, "W.mtx", &model.w)?;
    let infinite = model.radius == Some(f64::INFINITY);
    let record = ReductionRecord {
        version: FORMAT_VERSION.into(),
        n_hat: model.n_hat,
        sigma: model.sigma.iter().copied().collect(),
        radius: model.radius.filter(|r| r.is_finite()),
        radius_infinite: infinite,
        shift: model.meta.shift,
        kind: model.meta.kind,
        projector_defect: model.meta.projector_defect,
        warning: model.meta.warning.clone(),
    };
    write_json(&dir.join(REDUCTION_FILE), &record)?;
    Ok(record)
}

/// Reduced model stored by [`write_reduced`].
pub fn read_reduced(dir: &Path) -> Result<(ReducedModel, ReductionRecord)> {
    let (sys_hat, _) = read_system(dir)?;
    let record: ReductionRecord = read_json(&dir.join(REDUCTION_FILE))?;
    let v = mtx::read_matrix(&dir.join("V.mtx")).at(&dir.join("V.mtx"))?;
    let w = mtx::read_matrix(&dir.join("W.mtx")).at(&dir.join("W.mtx"))?;
    let model = ReducedModel {
        sys_hat,
        v,
        w,
        sigma: DVector::from_vec(record.sigma.clone()),
        n_hat: record.n_hat,
        radius: record.radius(),
        meta: qbmor::balancing::ReductionMeta {
            shift: record.shift,
            kind: record.kind,
            projector_defect: record.projector_defect,
            warning: record.warning.clone(),
        },
    };
    Ok((model, record))
}
