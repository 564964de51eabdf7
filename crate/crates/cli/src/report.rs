//! JSON documents written by the commands. Schemas live in `schema/`.

use mednnt_core::effects::EffectSet;
use mednnt_core::inference::{critical_value, Interval, SandwichResult};
use mednnt_core::simulate::{CoverageReport, OracleResult, SimulationConfig};
use mednnt_core::stack::Solution;
use mednnt_core::{ExtendedIndex, IndexKind, Pathway, Scope, StackLayout};
use serde::{Serialize, Serializer};

pub const REPORT_SCHEMA: &str = "mednnt/report/v1";
pub const COVERAGE_SCHEMA: &str = "mednnt/coverage/v1";
pub const ORACLE_SCHEMA: &str = "mednnt/oracle/v1";
pub const EXAMPLE_SCHEMA: &str = "mednnt/example/v1";

/// A real number serialized as a JSON number when finite, `"inf"` or
/// `"-inf"` when infinite, and `null` when undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v == f64::INFINITY {
            s.serialize_str("inf")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_none()
        }
    }
}

impl From<ExtendedIndex> for Num {
    fn from(i: ExtendedIndex) -> Self {
        Num(i.to_f64())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Software {
    pub name: &'static str,
    pub version: &'static str,
}

impl Software {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub software: Software,
    pub n: usize,
    pub n0: usize,
    pub n1: usize,
    pub family: String,
    pub level: f64,
    pub seed: Option<u64>,
    pub input: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexEntry {
    pub name: &'static str,
    pub pathway: &'static str,
    pub scope: &'static str,
    pub estimate: Num,
    pub standard_error: Num,
    pub lower: Num,
    pub upper: Num,
    pub infinite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectEntry {
    pub pathway: &'static str,
    pub scope: &'static str,
    pub estimate: Num,
    pub standard_error: Num,
    pub lower: Num,
    pub upper: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientEntry {
    pub model: &'static str,
    pub term: String,
    pub estimate: Num,
    pub standard_error: Num,
    pub lower: Num,
    pub upper: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub bread_condition: Num,
    pub residual_norm: Num,
    pub outcome_iterations: usize,
    pub mediator_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub schema: &'static str,
    pub metadata: Metadata,
    pub indices: Vec<IndexEntry>,
    pub effects: Vec<EffectEntry>,
    pub coefficients: Vec<CoefficientEntry>,
    pub diagnostics: Diagnostics,
}

/// Names of the covariates in the report, by variable.
#[derive(Debug, Clone)]
pub struct TermNames {
    pub exposure: String,
    pub mediator: String,
    pub confounder: String,
}

/// Inputs of [`ReportDocument::build`].
pub struct EstimateParts<'a> {
    pub solution: &'a Solution,
    pub sandwich: &'a SandwichResult,
    pub intervals: &'a [Interval; StackLayout::DIM],
    pub level: f64,
    pub residual_norm: f64,
    pub terms: &'a TermNames,
    pub seed: Option<u64>,
    pub input: Option<String>,
}

fn effect_weights(pathway: Pathway, scope: Scope) -> Vec<(usize, f64)> {
    match pathway {
        Pathway::Total => vec![
            (StackLayout::effect(Pathway::Indirect, scope).unwrap(), 1.0),
            (StackLayout::effect(Pathway::Direct, scope).unwrap(), 1.0),
        ],
        p => vec![(StackLayout::effect(p, scope).unwrap(), 1.0)],
    }
}

impl ReportDocument {
    pub fn build(parts: EstimateParts<'_>) -> Self {
        let sol = parts.solution;
        let ci = parts.intervals;
        let z = critical_value(parts.level).expect("level validated before estimation");

        let indices = IndexKind::ALL
            .iter()
            .map(|&kind| {
                let c = ci[kind.slot()];
                let (lower, upper) = if c.infinite {
                    (f64::NAN, f64::NAN)
                } else {
                    (c.lower, c.upper)
                };
                IndexEntry {
                    name: kind.name(),
                    pathway: kind.pathway().name(),
                    scope: kind.scope().name(),
                    estimate: sol.theta.index(kind).into(),
                    standard_error: Num(c.standard_error),
                    lower: Num(lower),
                    upper: Num(upper),
                    infinite: c.infinite,
                }
            })
            .collect();

        let mut effects = Vec::new();
        for pathway in Pathway::ALL {
            for scope in Scope::ALL {
                let estimate = sol.theta.effect(pathway, scope);
                let se = parts
                    .sandwich
                    .linear_combination_se(&effect_weights(pathway, scope));
                effects.push(EffectEntry {
                    pathway: pathway.name(),
                    scope: scope.name(),
                    estimate: Num(estimate),
                    standard_error: Num(se),
                    lower: Num(estimate - z * se),
                    upper: Num(estimate + z * se),
                });
            }
        }

        let t = parts.terms;
        let outcome_terms = ["intercept", &t.exposure, &t.mediator, &t.confounder];
        let mediator_terms = ["intercept", &t.exposure, &t.confounder];
        let coefficient = |model, term: &str, slot: usize| {
            let c = ci[slot];
            CoefficientEntry {
                model,
                term: term.to_string(),
                estimate: Num(c.estimate),
                standard_error: Num(c.standard_error),
                lower: Num(c.lower),
                upper: Num(c.upper),
            }
        };
        let coefficients = outcome_terms
            .iter()
            .zip(StackLayout::BETA)
            .map(|(term, slot)| coefficient("outcome", term, slot))
            .chain(
                mediator_terms
                    .iter()
                    .zip(StackLayout::GAMMA)
                    .map(|(term, slot)| coefficient("mediator", term, slot)),
            )
            .collect();

        ReportDocument {
            schema: REPORT_SCHEMA,
            metadata: Metadata {
                software: Software::current(),
                n: sol.n,
                n0: sol.n0,
                n1: sol.n1,
                family: sol.family.name().to_string(),
                level: parts.level,
                seed: parts.seed,
                input: parts.input,
            },
            indices,
            effects,
            coefficients,
            diagnostics: Diagnostics {
                bread_condition: Num(parts.sandwich.condition),
                residual_norm: Num(parts.residual_norm),
                outcome_iterations: sol.outcome_fit.iterations,
                mediator_iterations: sol.mediator_fit.iterations,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub family: String,
    pub mu: f64,
    pub sigma: f64,
    pub delta: [f64; 2],
    pub gamma: [f64; 3],
    pub beta: [f64; 4],
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub level: f64,
}

impl From<&SimulationConfig> for ConfigEcho {
    fn from(c: &SimulationConfig) -> Self {
        Self {
            family: c.family.name().to_string(),
            mu: c.mu,
            sigma: c.sigma,
            delta: c.delta,
            gamma: c.gamma,
            beta: c.beta,
            n: c.n,
            reps: c.reps,
            seed: c.seed,
            level: c.level,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Exclusions {
    pub infinite_estimate: usize,
    pub singular_covariance: usize,
    pub fit_failure: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageEntry {
    pub name: &'static str,
    pub truth: Num,
    pub coverage: Num,
    pub mean_estimate: Num,
    pub median_estimate: Num,
    pub median_abs_error: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageDocument {
    pub schema: &'static str,
    pub software: Software,
    pub config: ConfigEcho,
    pub oracle_draws: usize,
    pub reps: usize,
    pub retained: usize,
    pub excluded: Exclusions,
    pub indices: Vec<CoverageEntry>,
}

impl CoverageDocument {
    pub fn build(config: &SimulationConfig, oracle_draws: usize, report: &CoverageReport) -> Self {
        let indices = IndexKind::ALL
            .iter()
            .map(|&kind| {
                let k = kind.position();
                CoverageEntry {
                    name: kind.name(),
                    truth: Num(report.truth[k]),
                    coverage: Num(report.coverage[k]),
                    mean_estimate: Num(report.mean_estimate[k]),
                    median_estimate: Num(report.median_estimate[k]),
                    median_abs_error: Num(report.median_abs_error[k]),
                }
            })
            .collect();
        Self {
            schema: COVERAGE_SCHEMA,
            software: Software::current(),
            config: config.into(),
            oracle_draws,
            reps: report.reps,
            retained: report.retained,
            excluded: Exclusions {
                infinite_estimate: report.excluded_infinite,
                singular_covariance: report.excluded_singular,
                fit_failure: report.excluded_failed,
                rate: report.exclusion_rate(),
            },
            indices,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleEffect {
    pub pathway: &'static str,
    pub scope: &'static str,
    pub value: Num,
    pub mc_standard_error: Num,
    pub nested: Num,
    pub nested_mc_standard_error: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexValue {
    pub name: &'static str,
    pub value: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleDocument {
    pub schema: &'static str,
    pub software: Software,
    pub config: ConfigEcho,
    pub draws: usize,
    pub exposed_share: f64,
    pub effects: Vec<OracleEffect>,
    pub indices: Vec<IndexValue>,
}

fn index_values(effects: &EffectSet) -> Vec<IndexValue> {
    IndexKind::ALL
        .iter()
        .map(|&kind| IndexValue {
            name: kind.name(),
            value: effects.index(kind).into(),
        })
        .collect()
}

impl OracleDocument {
    pub fn build(config: &SimulationConfig, oracle: &OracleResult) -> Self {
        let mut effects = Vec::new();
        for pathway in Pathway::ALL {
            for (k, scope) in Scope::ALL.into_iter().enumerate() {
                let (se, nested, nested_se) = match pathway {
                    Pathway::Indirect => (
                        oracle.standard_errors[k],
                        oracle.nested[k],
                        oracle.nested_standard_errors[k],
                    ),
                    Pathway::Direct => (
                        oracle.standard_errors[3 + k],
                        oracle.nested[3 + k],
                        oracle.nested_standard_errors[3 + k],
                    ),
                    Pathway::Total => (f64::NAN, oracle.nested[k] + oracle.nested[3 + k], f64::NAN),
                };
                effects.push(OracleEffect {
                    pathway: pathway.name(),
                    scope: scope.name(),
                    value: Num(oracle.effects.effect(pathway, scope)),
                    mc_standard_error: Num(se),
                    nested: Num(nested),
                    nested_mc_standard_error: Num(nested_se),
                });
            }
        }
        Self {
            schema: ORACLE_SCHEMA,
            software: Software::current(),
            config: config.into(),
            draws: oracle.draws,
            exposed_share: oracle.exposed_share,
            effects,
            indices: index_values(&oracle.effects),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleEffect {
    pub pathway: &'static str,
    pub scope: &'static str,
    pub value: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleDocument {
    pub schema: &'static str,
    pub software: Software,
    pub exposed_share: f64,
    pub effects: Vec<ExampleEffect>,
    pub indices: Vec<IndexValue>,
}

impl ExampleDocument {
    pub fn build(effects: &EffectSet, exposed_share: f64) -> Self {
        let mut list = Vec::new();
        for pathway in Pathway::ALL {
            for scope in Scope::ALL {
                list.push(ExampleEffect {
                    pathway: pathway.name(),
                    scope: scope.name(),
                    value: Num(effects.effect(pathway, scope)),
                });
            }
        }
        Self {
            schema: EXAMPLE_SCHEMA,
            software: Software::current(),
            exposed_share,
            effects: list,
            indices: index_values(effects),
        }
    }
}
