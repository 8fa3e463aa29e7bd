//! Experiment runner behind the `palmcluster` command.

pub mod config;
pub mod run;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Verification(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<palmcluster::Error> for CliError {
    fn from(e: palmcluster::Error) -> Self {
        match e {
            palmcluster::Error::Domain(msg) => CliError::Config(msg),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

/// Sizes the global thread pool from `PALMCLUSTER_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PALMCLUSTER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("PALMCLUSTER_THREADS: expected a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("PALMCLUSTER_THREADS: {e}")))
}
