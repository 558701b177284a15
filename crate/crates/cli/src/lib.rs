//! Sweeps, CSV output and Monte Carlo validation behind the `cogcap` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod plot;
pub mod validate;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use experiments::{Experiment, Table};
pub use validate::{CheckStatus, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] cogcap::Error),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Output { .. } => 3,
            CliError::ValidationFailed(_) => 4,
        }
    }

    pub(crate) fn output(path: &Path, source: impl Into<std::io::Error>) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::output(&path, e))?;
    Ok(path)
}
