//! Estimation of path-specific NNT/NNE/EIN indices from observational data
//! with a binary exposure, mediator and outcome and a measured confounder.
//!
//! The pipeline fits a mediator and an outcome regression, standardizes the
//! fitted contrasts over the empirical confounder distribution of each
//! exposure group, and stacks everything into one set of 32 estimating
//! equations so that sandwich standard errors cover every stage.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
// `!(x > t)` comparisons deliberately treat NaN as failing.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod effects;
pub mod error;
pub mod glm;
pub mod inference;
pub mod linalg;
pub mod link;
pub mod simulate;
pub mod stack;
pub mod sum;
pub mod types;

pub use error::{ConfigError, DataError, GlmError, InferenceError, LayoutError, SolveError};
pub use link::LinkFamily;
pub use types::{
    g_transform, Dataset, ExtendedIndex, Group, IndexKind, ObservationRecord, ParameterVector,
    Pathway, Scope, StackLayout,
};
