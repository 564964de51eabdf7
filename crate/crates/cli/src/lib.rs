//! Command-line front end: CSV input, JSON reports and parallel simulation
//! drivers over `mednnt-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;

pub use cli::{run, Cli};
pub use error::CliError;
