//! JSON run configuration for the whole pipeline.

use std::path::{Path, PathBuf};

use qbmor::gramians::{GramianKind, IterOptions};
use qbmor::models::ModelSpec;
use qbmor::Method;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// Directory holding a system manifest.
    Manifest { manifest: PathBuf },
    Spec(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramianConfig {
    pub kind: GramianKind,
    pub tau: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Defaults to the model family's shift.
    pub shift: Option<f64>,
}

impl Default for GramianConfig {
    fn default() -> Self {
        let it = IterOptions::default();
        Self { kind: GramianKind::Truncated, tau: it.tau, rel_tol: it.rel_tol, max_iter: it.max_iter, shift: None }
    }
}

impl GramianConfig {
    pub fn options(&self) -> IterOptions {
        IterOptions { tau: self.tau, rel_tol: self.rel_tol, max_iter: self.max_iter, ..IterOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub n_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Comma-separated signal names, or a CSV file `t,u1,...`.
    pub signals: String,
    pub t_span: (f64, f64),
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_method() -> Method {
    Method::ImexCn
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSource,
    #[serde(default)]
    pub gramians: GramianConfig,
    pub reduce: ReduceConfig,
    pub simulate: SimulateConfig,
    pub outputs: PathBuf,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("config field {name} must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Loads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.outputs.is_relative() {
            cfg.outputs = base.join(&cfg.outputs);
        }
        if let ModelSource::Manifest { manifest } = &mut cfg.model {
            if manifest.is_relative() {
                *manifest = base.join(&*manifest);
            }
        }
        if !cfg.simulate.signals.contains(',') {
            let file = base.join(&cfg.simulate.signals);
            if Path::new(&cfg.simulate.signals).is_relative() && file.is_file() {
                cfg.simulate.signals = file.display().to_string();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.gramians;
        if !(g.tau >= 0.0) {
            return Err(CliError::Usage(format!("config field gramians.tau must be nonnegative, got {}", g.tau)));
        }
        positive("gramians.rel_tol", g.rel_tol)?;
        if g.max_iter == 0 {
            return Err(CliError::Usage("config field gramians.max_iter must be positive".into()));
        }
        if let Some(s) = g.shift {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CliError::Usage(format!("config field gramians.shift must be nonnegative, got {s}")));
            }
        }
        if self.reduce.n_hat == 0 {
            return Err(CliError::Usage("config field reduce.n_hat must be positive".into()));
        }
        positive("simulate.dt", self.simulate.dt)?;
        let (t0, t1) = self.simulate.t_span;
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(CliError::Usage(format!("config field simulate.t_span [{t0}, {t1}] is empty")));
        }
        Ok(())
    }
}
