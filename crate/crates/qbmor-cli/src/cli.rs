//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qbmor::gramians::{GramianKind, IterOptions};
use qbmor::models::{Family, ModelSpec};
use qbmor::Method;

use crate::commands;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "qbmor", version, about = "Balanced truncation for quadratic-bilinear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Benchmark model generation.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Truncated or iterated Gramian factors of a stored system.
    Gramians {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Truncated)]
        kind: KindArg,
        #[arg(long, default_value_t = IterOptions::default().tau)]
        tau: f64,
        #[arg(long, default_value_t = IterOptions::default().rel_tol)]
        rel_tol: f64,
        #[arg(long, default_value_t = IterOptions::default().max_iter)]
        max_iter: usize,
        /// Shift `s` for `A − sI`; defaults to the model family's shift.
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Singular values of `SᵀR` as CSV.
    Hsv {
        #[arg(long)]
        gramians: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Balanced truncation of a stored system.
    Reduce {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        gramians: PathBuf,
        #[arg(long = "n-hat")]
        n_hat: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulates from the zero state and writes the outputs as CSV.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        /// Comma-separated signal names, or a CSV file `t,u1,...`.
        #[arg(long)]
        signal: String,
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::ImexCn)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative output error between two trajectories on the same grid.
    Compare {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        reduced: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence conditions and bounds of the Gramian iteration.
    Diagnose {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy curves and Gramian values of the scalar example.
    ScalarDemo {
        #[arg(long)]
        out: PathBuf,
    },
    /// Whole pipeline from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelAction {
    Build(BuildArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Domain length where the family has one.
    #[arg(long = "L")]
    pub length: Option<f64>,
    /// Gramian shift to record in the manifest.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Family parameter override, `name=value`.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let value = value.parse().map_err(|_| format!("'{value}' is not a number"))?;
    Ok((name.to_string(), value))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FamilyArg {
    ChafeeInfante,
    FitzhughNagumo,
    RcLadder,
    Scalar,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::ChafeeInfante => Family::ChafeeInfante,
            FamilyArg::FitzhughNagumo => Family::FitzhughNagumo,
            FamilyArg::RcLadder => Family::RcLadder,
            FamilyArg::Scalar => Family::Scalar,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Truncated,
    Iterated,
}

impl From<KindArg> for GramianKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Truncated => GramianKind::Truncated,
            KindArg::Iterated => GramianKind::Iterated,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Rk4,
    ImexCn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rk4 => Method::Rk4,
            MethodArg::ImexCn => Method::ImexCn,
        }
    }
}

fn check_step(dt: f64, t_end: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(CliError::Usage(format!("--t-end must be positive, got {t_end}")));
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Model { action: ModelAction::Build(args) } => {
            let mut spec = ModelSpec::new(args.family.into(), args.k);
            spec.length = args.length;
            spec.shift = args.shift;
            spec.params = args.params.into_iter().collect();
            commands::model_build(&spec, &args.out)?;
        }
        Command::Gramians { system, kind, tau, rel_tol, max_iter, shift, out } => {
            let opts = IterOptions { tau, rel_tol, max_iter, ..IterOptions::default() };
            commands::gramians(&system, kind.into(), &opts, shift, &out)?;
        }
        Command::Hsv { gramians, out } => {
            commands::hsv(&gramians, &out)?;
        }
        Command::Reduce { system, gramians, n_hat, out } => {
            commands::reduce(&system, &gramians, n_hat, &out)?;
        }
        Command::Simulate { system, signal, t_end, dt, method, out } => {
            check_step(dt, t_end)?;
            commands::simulate(&system, &signal, t_end, dt, method.into(), &out)?;
        }
        Command::Compare { full, reduced, out } => {
            commands::compare(&full, &reduced, &out)?;
        }
        Command::Diagnose { system, shift, out } => {
            commands::diagnose(&system, shift, &out)?;
        }
        Command::ScalarDemo { out } => {
            commands::scalar_demo(&out)?;
        }
        Command::Run { config } => {
            commands::run(&RunConfig::load(&config)?)?;
        }
    }
    Ok(())
}
