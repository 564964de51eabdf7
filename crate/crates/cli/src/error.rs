use std::io;
use std::path::PathBuf;

use mednnt_core::{ConfigError, DataError, GlmError, InferenceError, SolveError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {source}", path.display())]
    FileNotFound { path: PathBuf, source: io::Error },
    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("input has no column named `{0}`")]
    MissingColumn(String),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("rank-deficient design in the {model} model: {source}")]
    RankDeficient {
        model: &'static str,
        source: GlmError,
    },
    #[error("the {model} model did not converge: {source}")]
    NonConvergence {
        model: &'static str,
        source: GlmError,
    },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("{0}")]
    Numerical(String),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status: 2 usage, 3 data or IO, 4 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::FileNotFound { .. }
            | CliError::Parse { .. }
            | CliError::MissingColumn(_)
            | CliError::Csv(_)
            | CliError::Data(_)
            | CliError::Write { .. }
            | CliError::Json(_) => 3,
            CliError::RankDeficient { .. }
            | CliError::NonConvergence { .. }
            | CliError::Inference(_)
            | CliError::Numerical(_) => 4,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        let model_error = |model, e: GlmError| match e {
            GlmError::Data(d) => CliError::Data(d),
            e @ GlmError::RankDeficientDesign { .. } => {
                CliError::RankDeficient { model, source: e }
            }
            e => CliError::NonConvergence { model, source: e },
        };
        match e {
            SolveError::Data(d) => CliError::Data(d),
            SolveError::OutcomeFit(e) => model_error("outcome", e),
            SolveError::MediatorFit(e) => model_error("mediator", e),
            e @ SolveError::Newton(_) => CliError::Numerical(e.to_string()),
        }
    }
}
