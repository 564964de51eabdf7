//! Thread-parallel drivers. Work units carry their own random streams and
//! results are reduced in index order, so output does not depend on the
//! number of threads.

use mednnt_core::simulate::{
    combine_oracle, oracle_batch, oracle_batches, run_replication, summarize, CoverageReport,
    OracleResult, ReplicationOutcome, SimulationConfig,
};
use mednnt_core::{ConfigError, ExtendedIndex};
use rayon::prelude::*;

pub fn oracle(config: &SimulationConfig, draws: usize) -> Result<OracleResult, ConfigError> {
    config.validate()?;
    if draws < 2 {
        return Err(ConfigError::Draws);
    }
    let batches: Vec<_> = (0..oracle_batches(draws))
        .into_par_iter()
        .map(|b| oracle_batch(config, draws, b))
        .collect();
    Ok(combine_oracle(&batches, draws))
}

pub fn replications(
    config: &SimulationConfig,
    truth: &[ExtendedIndex; 9],
) -> Result<Vec<ReplicationOutcome>, ConfigError> {
    config.validate()?;
    Ok((0..config.reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, truth, rep))
        .collect())
}

pub fn coverage(
    config: &SimulationConfig,
    truth: &[ExtendedIndex; 9],
) -> Result<CoverageReport, ConfigError> {
    Ok(summarize(&replications(config, truth)?, truth))
}
