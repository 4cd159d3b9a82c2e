use std::path::{Path, PathBuf};

use qbmor::QbError;
use serde::Serialize;
use thiserror::Error;

use crate::mtx::MtxError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numeric(#[from] QbError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Mtx { path: PathBuf, source: MtxError },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    /// Inputs that parse but do not fit together.
    #[error("{}: {msg}", path.display())]
    Inconsistent { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Usage,
    Numeric,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Io => 4,
        }
    }
}

impl CliError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Usage(_) | CliError::Numeric(QbError::UnknownName { .. }) => ErrorClass::Usage,
            CliError::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Io,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        error_line(self.class(), &self.to_string())
    }

    pub fn inconsistent(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Inconsistent { path: path.to_path_buf(), msg: msg.into() }
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: ErrorClass,
    exit_code: i32,
    message: &'a str,
}

pub fn error_line(class: ErrorClass, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    let line = ErrorLine { error: class, exit_code: class.exit_code(), message: &flat };
    serde_json::to_string(&line).expect("error line serializes")
}

/// Attaches a path to I/O-like failures.
pub trait PathContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> PathContext<T> for std::result::Result<T, std::io::Error> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| CliError::Io { path: path.to_path_buf(), source })
    }
}

impl<T> PathContext<T> for std::result::Result<T, MtxError> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| match source {
            MtxError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
            source => CliError::Mtx { path: path.to_path_buf(), source },
        })
    }
}

impl<T> PathContext<T> for std::result::Result<T, serde_json::Error> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| CliError::Json { path: path.to_path_buf(), source })
    }
}

impl<T> PathContext<T> for std::result::Result<T, csv::Error> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
    }
}
