//! Simulation from the structural model
//!
//! ```text
//! L ~ N(μ, σ²)
//! A | L     ~ Bernoulli(expit(δ0 + δL·L))
//! M | A, L  ~ Bernoulli(ξ(γ0 + γA·A + γL·L))
//! I | A,M,L ~ Bernoulli(ξ(β0 + βA·A + βM·M + βL·L))
//! ```
//!
//! together with a Monte Carlo oracle for the true effects and the
//! replication loop of a coverage study.
//!
//! Every random variable of every replication (or oracle batch) reads its own
//! ChaCha20 stream, so results do not depend on how work units are scheduled.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::effects::{direct_from_means, indirect_from_means, EffectSet};
use crate::error::{ConfigError, SolveError};
use crate::inference::{confidence_intervals, sandwich};
use crate::link::{expit, LinkFamily};
use crate::stack::solve;
use crate::types::{Dataset, ExtendedIndex, IndexKind, ObservationRecord};

/// Draws per oracle batch.
pub const ORACLE_BATCH: usize = 1 << 16;

const VAR_L: u64 = 0;
const VAR_A: u64 = 1;
const VAR_M: u64 = 2;
const VAR_I: u64 = 3;
const STREAMS_PER_UNIT: u64 = 16;
const ORACLE_STREAM_BASE: u64 = 1 << 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub mu: f64,
    pub sigma: f64,
    /// Exposure model (δ0, δL).
    pub delta: [f64; 2],
    /// Mediator model (γ0, γA, γL).
    pub gamma: [f64; 3],
    /// Outcome model (β0, βA, βM, βL).
    pub beta: [f64; 4],
    pub family: LinkFamily,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            sigma: 0.1,
            delta: [2.0, -3.0],
            gamma: [-1.0, 3.0, -2.0],
            beta: [-1.0, 1.5, 1.5, -2.0],
            family: LinkFamily::Logit,
            n: 1600,
            reps: 100,
            seed: 1,
            level: 0.95,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(ConfigError::Sigma(self.sigma));
        }
        if self.n < 2 {
            return Err(ConfigError::SampleSize(self.n));
        }
        if self.reps < 1 {
            return Err(ConfigError::Replications);
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(ConfigError::Level(self.level));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !self.mu.is_finite() {
            return Err(ConfigError::NonFinite("mu"));
        }
        if !finite(&self.delta) {
            return Err(ConfigError::NonFinite("delta"));
        }
        if !finite(&self.gamma) {
            return Err(ConfigError::NonFinite("gamma"));
        }
        if !finite(&self.beta) {
            return Err(ConfigError::NonFinite("beta"));
        }
        Ok(())
    }

    fn rng(&self, unit: u64, var: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(unit.wrapping_mul(STREAMS_PER_UNIT).wrapping_add(var));
        rng
    }

    fn exposure_prob(&self, l: f64) -> f64 {
        expit(self.delta[0] + self.delta[1] * l)
    }

    fn mediator_prob(&self, a: f64, l: f64) -> f64 {
        let g = &self.gamma;
        self.family.inv_link(g[0] + g[1] * a + g[2] * l)
    }

    fn outcome_prob(&self, a: f64, m: f64, l: f64) -> f64 {
        let b = &self.beta;
        self.family.inv_link(b[0] + b[1] * a + b[2] * m + b[3] * l)
    }
}

/// Draws replication `rep` of size `config.n`.
pub fn generate(config: &SimulationConfig, rep: u64) -> Dataset {
    let mut rl = config.rng(rep, VAR_L);
    let mut ra = config.rng(rep, VAR_A);
    let mut rm = config.rng(rep, VAR_M);
    let mut ri = config.rng(rep, VAR_I);
    let records = (0..config.n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rl);
            let l = config.mu + config.sigma * z;
            let a = ra.random::<f64>() < config.exposure_prob(l);
            let af = if a { 1.0 } else { 0.0 };
            let m = rm.random::<f64>() < config.mediator_prob(af, l);
            let mf = if m { 1.0 } else { 0.0 };
            let i = ri.random::<f64>() < config.outcome_prob(af, mf, l);
            ObservationRecord::new(i, a, m, l)
        })
        .collect();
    Dataset::new(records).expect("generated data are finite and non-empty")
}

/// Sufficient sums of one oracle batch, split by exposure group.
///
/// Per group: `[count, Σ(ξ10-ξ00), Σ(ξ01-ξ00), Σ(ξ11-ξ01), Ση1, Ση0,
/// Σ nested indirect, Σ nested direct]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleBatch {
    pub sums: [[f64; 8]; 2],
}

impl OracleBatch {
    fn count(&self, g: usize) -> f64 {
        self.sums[g][0]
    }

    fn mean(&self, g: usize, k: usize) -> f64 {
        self.sums[g][k] / self.sums[g][0]
    }

    fn merge(&mut self, other: &OracleBatch) {
        for g in 0..2 {
            for k in 0..8 {
                self.sums[g][k] += other.sums[g][k];
            }
        }
    }

    /// Factorized `[p_i(0), p_i(1), p_i, p_d(0), p_d(1), p_d]`.
    fn factorized(&self) -> [f64; 6] {
        let mut pi = [0.0; 2];
        let mut pd = [0.0; 2];
        for g in 0..2 {
            pi[g] = indirect_from_means(self.mean(g, 4), self.mean(g, 5), self.mean(g, 2));
            pd[g] = direct_from_means(self.mean(g, 1), self.mean(g, 3), self.mean(g, 4));
        }
        let w1 = self.count(1) / (self.count(0) + self.count(1));
        [
            pi[0],
            pi[1],
            pi[0] + w1 * (pi[1] - pi[0]),
            pd[0],
            pd[1],
            pd[0] + w1 * (pd[1] - pd[0]),
        ]
    }

    /// Nested-counterfactual `[p_i(0), p_i(1), p_i, p_d(0), p_d(1), p_d]`.
    fn nested(&self) -> [f64; 6] {
        let n = self.count(0) + self.count(1);
        let pi = [self.mean(0, 6), self.mean(1, 6)];
        let pd = [self.mean(0, 7), self.mean(1, 7)];
        [
            pi[0],
            pi[1],
            (self.sums[0][6] + self.sums[1][6]) / n,
            pd[0],
            pd[1],
            (self.sums[0][7] + self.sums[1][7]) / n,
        ]
    }
}

/// Number of batches needed for `draws` oracle draws.
pub fn oracle_batches(draws: usize) -> usize {
    draws.div_ceil(ORACLE_BATCH)
}

/// Evaluates oracle batch `batch` out of `draws` total draws.
///
/// The factorized sums use the true coefficients at each drawn `L` within
/// its drawn exposure group. The nested sums draw potential mediators
/// `M0, M1` from one uniform and potential outcomes `I_{a,m}` from another,
/// then average `I_{0,M1} - I_{0,M0}` and `I_{1,M1} - I_{0,M1}`.
pub fn oracle_batch(config: &SimulationConfig, draws: usize, batch: usize) -> OracleBatch {
    let start = batch * ORACLE_BATCH;
    let len = ORACLE_BATCH.min(draws.saturating_sub(start));
    let unit = ORACLE_STREAM_BASE + batch as u64;
    let mut rl = config.rng(unit, VAR_L);
    let mut ra = config.rng(unit, VAR_A);
    let mut rm = config.rng(unit, VAR_M);
    let mut ri = config.rng(unit, VAR_I);
    let mut out = OracleBatch::default();
    for _ in 0..len {
        let z: f64 = StandardNormal.sample(&mut rl);
        let l = config.mu + config.sigma * z;
        let g = usize::from(ra.random::<f64>() < config.exposure_prob(l));
        let (x00, x10, x01, x11) = (
            config.outcome_prob(0.0, 0.0, l),
            config.outcome_prob(1.0, 0.0, l),
            config.outcome_prob(0.0, 1.0, l),
            config.outcome_prob(1.0, 1.0, l),
        );
        let (e0, e1) = (config.mediator_prob(0.0, l), config.mediator_prob(1.0, l));

        let um = rm.random::<f64>();
        let ui = ri.random::<f64>();
        let m0 = um < e0;
        let m1 = um < e1;
        let outcome = |a: bool, m: bool| {
            let p = match (a, m) {
                (false, false) => x00,
                (true, false) => x10,
                (false, true) => x01,
                (true, true) => x11,
            };
            if ui < p {
                1.0
            } else {
                0.0
            }
        };
        let nested_indirect = outcome(false, m1) - outcome(false, m0);
        let nested_direct = outcome(true, m1) - outcome(false, m1);

        let s = &mut out.sums[g];
        s[0] += 1.0;
        s[1] += x10 - x00;
        s[2] += x01 - x00;
        s[3] += x11 - x01;
        s[4] += e1;
        s[5] += e0;
        s[6] += nested_indirect;
        s[7] += nested_direct;
    }
    out
}

/// True effects from the Monte Carlo oracle, with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub effects: EffectSet,
    /// Standard errors of `[p_i(0), p_i(1), p_i, p_d(0), p_d(1), p_d]`.
    pub standard_errors: [f64; 6],
    /// Nested-counterfactual diagnostic, same layout as `standard_errors`.
    pub nested: [f64; 6],
    pub nested_standard_errors: [f64; 6],
    pub draws: usize,
    pub exposed_share: f64,
}

/// Combines oracle batches in index order.
pub fn combine_oracle(batches: &[OracleBatch], draws: usize) -> OracleResult {
    let mut total = OracleBatch::default();
    batches.iter().for_each(|b| total.merge(b));
    let fact = total.factorized();
    let nested = total.nested();
    // Batch-means standard errors over full batches only.
    let full: Vec<&OracleBatch> = batches
        .iter()
        .filter(|b| {
            b.count(0) + b.count(1) == ORACLE_BATCH as f64 && b.count(0) > 0.0 && b.count(1) > 0.0
        })
        .collect();
    let se = |f: fn(&OracleBatch) -> [f64; 6]| {
        let k = full.len() as f64;
        let mut out = [f64::NAN; 6];
        if full.len() < 2 {
            return out;
        }
        for (j, o) in out.iter_mut().enumerate() {
            let mean = full.iter().map(|b| f(b)[j]).sum::<f64>() / k;
            let var = full
                .iter()
                .map(|b| (f(b)[j] - mean) * (f(b)[j] - mean))
                .sum::<f64>()
                / (k - 1.0);
            *o = libm::sqrt(var / k) * libm::sqrt(ORACLE_BATCH as f64 * k / draws as f64);
        }
        out
    };
    OracleResult {
        effects: EffectSet::from_effects([fact[0], fact[1], fact[2]], [fact[3], fact[4], fact[5]]),
        standard_errors: se(OracleBatch::factorized),
        nested,
        nested_standard_errors: se(OracleBatch::nested),
        draws,
        exposed_share: total.count(1) / (total.count(0) + total.count(1)),
    }
}

/// Monte Carlo truth from `draws` joint draws of `(L, A)`.
pub fn mc_oracle(config: &SimulationConfig, draws: usize) -> Result<OracleResult, ConfigError> {
    config.validate()?;
    if draws < 2 {
        return Err(ConfigError::Draws);
    }
    let batches: Vec<OracleBatch> = (0..oracle_batches(draws))
        .map(|b| oracle_batch(config, draws, b))
        .collect();
    Ok(combine_oracle(&batches, draws))
}

/// Why a replication does not count towards coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exclusion {
    /// Some index estimate is infinite.
    Infinite,
    /// The sandwich bread is singular.
    Singular,
    /// A regression failed to fit.
    FitFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub rep: u64,
    /// Index estimates in [`IndexKind::ALL`] order; `+inf` when infinite,
    /// `NaN` when the fit failed.
    pub estimates: [f64; 9],
    pub lower: [f64; 9],
    pub upper: [f64; 9],
    pub covered: [bool; 9],
    pub exclusion: Option<Exclusion>,
}

/// Generate, solve, sandwich and interval for one replication.
pub fn run_replication(
    config: &SimulationConfig,
    truth: &[ExtendedIndex; 9],
    rep: u64,
) -> ReplicationOutcome {
    let data = generate(config, rep);
    let mut out = ReplicationOutcome {
        rep,
        estimates: [f64::NAN; 9],
        lower: [f64::NAN; 9],
        upper: [f64::NAN; 9],
        covered: [false; 9],
        exclusion: None,
    };
    let solution = match solve(&data, config.family) {
        Ok(s) => s,
        Err(
            SolveError::OutcomeFit(_)
            | SolveError::MediatorFit(_)
            | SolveError::Data(_)
            | SolveError::Newton(_),
        ) => {
            out.exclusion = Some(Exclusion::FitFailed);
            return out;
        }
    };
    for kind in IndexKind::ALL {
        out.estimates[kind.position()] = solution.theta.index(kind).to_f64();
    }
    if solution.any_degenerate() {
        out.exclusion = Some(Exclusion::Infinite);
        return out;
    }
    let result = sandwich(&data, &solution.theta, config.family);
    if result.singular {
        out.exclusion = Some(Exclusion::Singular);
        return out;
    }
    let intervals =
        confidence_intervals(&result, &solution.theta, config.level).expect("level validated");
    for kind in IndexKind::ALL {
        let ci = intervals[kind.slot()];
        let k = kind.position();
        out.lower[k] = ci.lower;
        out.upper[k] = ci.upper;
        let t = truth[k].to_f64();
        out.covered[k] = ci.lower <= t && t <= ci.upper;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub reps: usize,
    pub retained: usize,
    pub excluded_infinite: usize,
    pub excluded_singular: usize,
    pub excluded_failed: usize,
    /// Per index, fraction of retained replications whose interval covers the truth.
    pub coverage: [f64; 9],
    /// Mean and median of retained estimates.
    pub mean_estimate: [f64; 9],
    pub median_estimate: [f64; 9],
    /// Median of `|estimate - truth|` over every fitted replication,
    /// infinite estimates counting as infinite error.
    pub median_abs_error: [f64; 9],
    pub truth: [f64; 9],
}

impl CoverageReport {
    pub fn excluded(&self) -> usize {
        self.reps - self.retained
    }

    pub fn exclusion_rate(&self) -> f64 {
        self.excluded() as f64 / self.reps as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        let (a, b) = (v[k / 2 - 1], v[k / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// Per-index median absolute error over fitted replications.
pub fn median_abs_error(outcomes: &[ReplicationOutcome], truth: &[ExtendedIndex; 9]) -> [f64; 9] {
    core::array::from_fn(|k| {
        let t = truth[k].to_f64();
        median(
            outcomes
                .iter()
                .filter(|o| o.exclusion != Some(Exclusion::FitFailed))
                .map(|o| {
                    let e = o.estimates[k];
                    if e == t {
                        0.0
                    } else {
                        (e - t).abs()
                    }
                })
                .collect(),
        )
    })
}

/// Reduces replication outcomes, in the order given, to a report.
pub fn summarize(outcomes: &[ReplicationOutcome], truth: &[ExtendedIndex; 9]) -> CoverageReport {
    let retained: Vec<&ReplicationOutcome> =
        outcomes.iter().filter(|o| o.exclusion.is_none()).collect();
    let count = |e| outcomes.iter().filter(|o| o.exclusion == Some(e)).count();
    let r = retained.len() as f64;
    let per_index = |f: &dyn Fn(usize) -> f64| -> [f64; 9] { core::array::from_fn(f) };
    CoverageReport {
        reps: outcomes.len(),
        retained: retained.len(),
        excluded_infinite: count(Exclusion::Infinite),
        excluded_singular: count(Exclusion::Singular),
        excluded_failed: count(Exclusion::FitFailed),
        coverage: per_index(&|k| retained.iter().filter(|o| o.covered[k]).count() as f64 / r),
        mean_estimate: per_index(&|k| retained.iter().map(|o| o.estimates[k]).sum::<f64>() / r),
        median_estimate: per_index(&|k| median(retained.iter().map(|o| o.estimates[k]).collect())),
        median_abs_error: median_abs_error(outcomes, truth),
        truth: truth.map(|t| t.to_f64()),
    }
}

/// Runs all replications sequentially and summarizes them.
pub fn coverage_study(
    config: &SimulationConfig,
    truth: &[ExtendedIndex; 9],
) -> Result<CoverageReport, ConfigError> {
    config.validate()?;
    let outcomes: Vec<ReplicationOutcome> = (0..config.reps as u64)
        .map(|rep| run_replication(config, truth, rep))
        .collect();
    Ok(summarize(&outcomes, truth))
}

/// Sample of the no-covariate population with independent potential
/// outcomes, comparing nested-counterfactual effects with their factorized
/// forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationCheck {
    /// Mean of `I_{0,M1} - I_{0,M0}`, with its standard error.
    pub nested_indirect: f64,
    pub nested_indirect_se: f64,
    /// `(mean M1 - mean M0)·(mean I01 - mean I00)`.
    pub factorized_indirect: f64,
    /// Mean of `I_{1,M1} - I_{0,M1}`, with its standard error.
    pub nested_direct: f64,
    pub nested_direct_se: f64,
    /// `mean(I10-I00)·(1 - mean M1) + mean(I11-I01)·mean M1`.
    pub factorized_direct: f64,
}

/// Draws `draws` subjects with independent potential mediators
/// `M_a ~ Bernoulli(mediator[a])` and outcomes `I_{a,m} ~ Bernoulli(outcome[a][m])`.
pub fn factorization_check(
    mediator: [f64; 2],
    outcome: [[f64; 2]; 2],
    draws: usize,
    seed: u64,
) -> FactorizationCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut bern = |p: f64| if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    let (mut sm, mut si) = ([0.0; 2], [[0.0; 2]; 2]);
    let (mut ind, mut ind2, mut dir, mut dir2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let m = [bern(mediator[0]), bern(mediator[1])];
        let i = [
            [bern(outcome[0][0]), bern(outcome[0][1])],
            [bern(outcome[1][0]), bern(outcome[1][1])],
        ];
        let at = |a: usize, m: f64| i[a][usize::from(m > 0.5)];
        let x = at(0, m[1]) - at(0, m[0]);
        let y = at(1, m[1]) - at(0, m[1]);
        ind += x;
        ind2 += x * x;
        dir += y;
        dir2 += y * y;
        for a in 0..2 {
            sm[a] += m[a];
            for mm in 0..2 {
                si[a][mm] += i[a][mm];
            }
        }
    }
    let n = draws as f64;
    let se = |s: f64, s2: f64| libm::sqrt((s2 / n - (s / n) * (s / n)) / (n - 1.0));
    let (m0, m1) = (sm[0] / n, sm[1] / n);
    let mean_i = |a: usize, m: usize| si[a][m] / n;
    FactorizationCheck {
        nested_indirect: ind / n,
        nested_indirect_se: se(ind, ind2),
        factorized_indirect: (m1 - m0) * (mean_i(0, 1) - mean_i(0, 0)),
        nested_direct: dir / n,
        nested_direct_se: se(dir, dir2),
        factorized_direct: (mean_i(1, 0) - mean_i(0, 0)) * (1.0 - m1)
            + (mean_i(1, 1) - mean_i(0, 1)) * m1,
    }
}
