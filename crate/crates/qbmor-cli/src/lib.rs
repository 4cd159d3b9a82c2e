pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod mtx;
pub mod table;

pub use error::{CliError, Result};
