//! Configuration, output writers and the command-line front end.

pub mod cli;
pub mod config;
pub mod output;

use thiserror::Error;

use crate::harness::HarnessError;
use crate::schemes::SchemeError;
use config::ConfigError;

/// Every failure the command line can report, with its exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] SchemeError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("energy increased at {count} step(s), first at step {first}")]
    Dissipation { count: usize, first: usize },
}

impl AppError {
    /// 1 for configuration and usage errors, 2 for solver failures, 3 for a
    /// dissipation violation under `--strict`.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Usage(_) | AppError::Io { .. } => 1,
            AppError::Solver(_) => 2,
            AppError::Harness(HarnessError::Config(_) | HarnessError::Mesh(_)) => 1,
            AppError::Harness(HarnessError::Run { .. } | HarnessError::Fem(_)) => 2,
            AppError::Dissipation { .. } => 3,
        }
    }
}
