use thiserror::Error;

use crate::types::Group;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset has no records")]
    Empty,
    #[error("{field} must be 0 or 1, got {value}")]
    NotBinary { field: &'static str, value: u8 },
    #[error("confounder of record {index} is not finite")]
    NonFiniteConfounder { index: usize },
    #[error("the {0} group has no records")]
    EmptyGroup(Group),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("parameter vector must have 32 entries, got {0}")]
    Length(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("coefficient vector has {got} entries, design has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("design must list between 1 and 4 distinct covariates")]
    InvalidDesign,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("design crossproduct is rank deficient (rank {rank} of {dim})")]
    RankDeficientDesign { rank: usize, dim: usize },
    #[error("fit did not converge after {iterations} iterations (score norm {score_norm:e}{})",
        if *.separation { ", separation detected" } else { "" })]
    DidNotConverge {
        coefficients: [f64; 4],
        dim: usize,
        iterations: usize,
        score_norm: f64,
        separation: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("outcome model: {0}")]
    OutcomeFit(GlmError),
    #[error("mediator model: {0}")]
    MediatorFit(GlmError),
    #[error("Newton iteration failed: {0}")]
    Newton(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("bread matrix is singular (condition estimate {condition:e})")]
    SingularBread { condition: f64 },
    #[error("confidence level must lie in (0, 1), got {0}")]
    Level(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("sigma must be non-negative and finite, got {0}")]
    Sigma(f64),
    #[error("sample size must be at least 2, got {0}")]
    SampleSize(usize),
    #[error("replication count must be at least 1")]
    Replications,
    #[error("draw count must be at least 2 per batch")]
    Draws,
    #[error("parameter {0} is not finite")]
    NonFinite(&'static str),
    #[error("confidence level must lie in (0, 1), got {0}")]
    Level(f64),
}
