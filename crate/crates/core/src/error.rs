use std::path::PathBuf;

use thiserror::Error;

use crate::kinematics::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("linkage cannot be assembled at crank angle {theta:.6} rad")]
    NoAssembly { theta: f64 },

    #[error("assembly branch flipped between crank samples {index} and {next}")]
    BranchDiscontinuity { index: usize, next: usize },

    #[error("not a crank-rocker: {0}")]
    InvalidLinkage(Violation),

    #[error("path needs at least {min} samples, got {got}")]
    TooFewSteps { min: usize, got: usize },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("incompatible file {path}: {message}")]
    Version { path: PathBuf, message: String },

    #[error("training diverged at step {step}: {message}")]
    Divergence { step: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    pub(crate) fn version(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Version { path: path.into(), message: message.to_string() }
    }
}

/// Creates the parent directory of `path` if it is missing.
pub(crate) fn ensure_parent(path: &std::path::Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}
