use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QbError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid unfolding mode {0}; expected 1, 2 or 3")]
    InvalidMode(usize),
    #[error("matrix is not stable: eigenvalue {re}{im:+}i has nonnegative real part")]
    Unstable { re: f64, im: f64 },
    #[error("right-hand side is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("factor does not represent a PSD matrix (eigenvalue {eigenvalue:.3e}, largest {largest:.3e})")]
    NotPsd { eigenvalue: f64, largest: f64 },
    #[error("real Schur decomposition did not converge")]
    SchurFailed,
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<QbError>,
    },
    #[error("no convergence after {iterations} iterations (relative changes P {change_p:.3e}, Q {change_q:.3e})")]
    MaxIterations {
        iterations: usize,
        change_p: f64,
        change_q: f64,
    },
    #[error("iteration diverged at step {iteration}: |P_k| grew by {growth:.3e}; the spectral radius of L^-1 Pi is likely not below one")]
    Divergence { iteration: usize, growth: f64 },
    #[error("condition {condition} violated: {detail}")]
    Condition {
        condition: &'static str,
        detail: String,
    },
    #[error("requested order {requested} exceeds numerical rank {rank}")]
    Rank { requested: usize, rank: usize },
    #[error("x = {x} is outside the admissible interval {interval}")]
    Domain { x: f64, interval: String },
    #[error("quadrature estimate {estimate:.3e} exceeds tolerance; increase t_max or quad_points")]
    Quadrature { estimate: f64 },
    #[error("integration diverged at t = {t}: |x| = {norm:.3e}")]
    Diverged { t: f64, norm: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unknown {kind} '{name}'; available: {available}")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },
}

impl QbError {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        QbError::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Self {
        QbError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, QbError>;
