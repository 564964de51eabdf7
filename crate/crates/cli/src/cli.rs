use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mednnt_core::effects::closed_form_example;
use mednnt_core::inference::{confidence_intervals, sandwich};
use mednnt_core::simulate::{generate, ReplicationOutcome, SimulationConfig};
use mednnt_core::stack::{residual_norm, solve};
use mednnt_core::{ConfigError, IndexKind, LinkFamily};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{read_dataset, write_dataset, Columns};
use crate::parallel;
use crate::report::{
    CoverageDocument, EstimateParts, ExampleDocument, OracleDocument, ReportDocument, TermNames,
};

/// Draws used for Monte Carlo truth unless `--draws` is given.
pub const DEFAULT_DRAWS: usize = 10_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "mednnt",
    version,
    about = "Path-specific NNT/NNE/EIN indices with sandwich intervals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the nine indices from a CSV file.
    Estimate(EstimateArgs),
    /// Run a coverage study against Monte Carlo truth.
    Simulate(SimulateArgs),
    /// Compute population effects and indices by Monte Carlo.
    Oracle(OracleArgs),
    /// Print the worked no-covariate example.
    Example(ExampleArgs),
    /// Write one simulated dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct ColumnArgs {
    #[arg(long, default_value = "I")]
    pub outcome: String,
    #[arg(long, default_value = "A")]
    pub exposure: String,
    #[arg(long, default_value = "M")]
    pub mediator: String,
    #[arg(long, default_value = "L")]
    pub confounder: String,
}

impl ColumnArgs {
    fn columns(&self) -> Columns {
        Columns {
            outcome: self.outcome.clone(),
            exposure: self.exposure.clone(),
            mediator: self.mediator.clone(),
            confounder: self.confounder.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, default_value = "logit")]
    pub family: LinkFamily,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Simulation settings shared by `simulate`, `oracle` and `generate`.
/// Flags override values from `--config`, which override the defaults.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// JSON file with any of the flag names below as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<LinkFamily>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Exposure model: intercept,L.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector::<2>)]
    pub delta: Option<[f64; 2]>,
    /// Mediator model: intercept,A,L.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector::<3>)]
    pub gamma: Option<[f64; 3]>,
    /// Outcome model: intercept,A,M,L.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector::<4>)]
    pub beta: Option<[f64; 4]>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub family: Option<String>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub draws: Option<usize>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<[f64; 2]>,
    pub gamma: Option<[f64; 3]>,
    pub beta: Option<[f64; 4]>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory for coverage.json and replications.csv; standard output
    /// (coverage only) when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory for oracle.json; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Replication number; each gives an independent dataset.
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `N` comma-separated finite numbers.
pub fn parse_vector<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!(
            "expected {N} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{part}` is not a finite number"))?;
    }
    Ok(out)
}

impl ModelArgs {
    /// Resolves the configuration and the oracle draw count.
    pub fn resolve(&self) -> Result<(SimulationConfig, usize), CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::FileNotFound {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str::<ConfigFile>(&text).map_err(|e| {
                    CliError::Usage(format!("invalid config {}: {e}", path.display()))
                })?
            }
            None => ConfigFile::default(),
        };
        let file_family = match &file.family {
            Some(s) => Some(
                s.parse::<LinkFamily>()
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
            None => None,
        };
        let d = SimulationConfig::default();
        let config = SimulationConfig {
            mu: self.mu.or(file.mu).unwrap_or(d.mu),
            sigma: self.sigma.or(file.sigma).unwrap_or(d.sigma),
            delta: self.delta.or(file.delta).unwrap_or(d.delta),
            gamma: self.gamma.or(file.gamma).unwrap_or(d.gamma),
            beta: self.beta.or(file.beta).unwrap_or(d.beta),
            family: self.family.or(file_family).unwrap_or(d.family),
            n: self.n.or(file.n).unwrap_or(d.n),
            reps: self.reps.or(file.reps).unwrap_or(d.reps),
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            level: self.level.or(file.level).unwrap_or(d.level),
        };
        config.validate()?;
        let draws = self.draws.or(file.draws).unwrap_or(DEFAULT_DRAWS);
        if draws < 2 {
            return Err(ConfigError::Draws.into());
        }
        Ok((config, draws))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn estimate(args: &EstimateArgs) -> Result<ReportDocument, CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(ConfigError::Level(args.level).into());
    }
    let columns = args.columns.columns();
    let data = read_dataset(&args.input, &columns)?.canonical();
    data.require_both_groups()?;
    let solution = solve(&data, args.family)?;
    let sw = sandwich(&data, &solution.theta, args.family);
    sw.require_nonsingular()?;
    let intervals = confidence_intervals(&sw, &solution.theta, args.level)?;
    let terms = TermNames {
        exposure: columns.exposure,
        mediator: columns.mediator,
        confounder: columns.confounder,
    };
    Ok(ReportDocument::build(EstimateParts {
        solution: &solution,
        sandwich: &sw,
        intervals: &intervals,
        level: args.level,
        residual_norm: residual_norm(&data, &solution),
        terms: &terms,
        seed: None,
        input: Some(args.input.display().to_string()),
    }))
}

/// Long-format table with one row per replication and index.
pub fn replications_csv(outcomes: &[ReplicationOutcome]) -> Result<Vec<u8>, CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "rep", "index", "estimate", "lower", "upper", "covered", "excluded",
    ])?;
    for o in outcomes {
        let excluded = match o.exclusion {
            None => "",
            Some(mednnt_core::simulate::Exclusion::Infinite) => "infinite_estimate",
            Some(mednnt_core::simulate::Exclusion::Singular) => "singular_covariance",
            Some(mednnt_core::simulate::Exclusion::FitFailed) => "fit_failure",
        };
        for kind in IndexKind::ALL {
            let k = kind.position();
            wtr.write_record([
                o.rep.to_string(),
                kind.name().to_string(),
                o.estimates[k].to_string(),
                o.lower[k].to_string(),
                o.upper[k].to_string(),
                u8::from(o.covered[k]).to_string(),
                excluded.to_string(),
            ])?;
        }
    }
    wtr.into_inner()
        .map_err(|e| CliError::Numerical(e.to_string()))
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (config, draws) = args.model.resolve()?;
    let truth = parallel::oracle(&config, draws)?.effects.indices;
    let outcomes = parallel::replications(&config, &truth)?;
    let report = mednnt_core::simulate::summarize(&outcomes, &truth);
    let doc = pretty(&CoverageDocument::build(&config, draws, &report))?;
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("coverage.json"), doc.as_bytes())?;
            write_file(&dir.join("replications.csv"), &replications_csv(&outcomes)?)
        }
        None => emit(None, &doc),
    }
}

fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let (config, draws) = args.model.resolve()?;
    let result = parallel::oracle(&config, draws)?;
    let doc = pretty(&OracleDocument::build(&config, &result))?;
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("oracle.json"), doc.as_bytes())
        }
        None => emit(None, &doc),
    }
}

/// Group direct effects 0.3 and 0.2, mediator contrasts 0.8 and 0.5,
/// outcome contrasts 0.5 and 0.6, exposed share 0.3.
pub fn example_effects() -> (mednnt_core::effects::EffectSet, f64) {
    let share = 0.3;
    (
        closed_form_example([0.3, 0.2], [0.8, 0.5], [0.5, 0.6], share),
        share,
    )
}

pub fn example_table() -> String {
    let (effects, _) = example_effects();
    let mut s = format!(
        "{:<6}{:<10}{:<11}{:>9}\n",
        "index", "pathway", "scope", "value"
    );
    for kind in IndexKind::ALL {
        let value = match effects.index(kind).finite() {
            Some(v) => format!("{v:.4}"),
            None => "inf".to_string(),
        };
        s.push_str(&format!(
            "{:<6}{:<10}{:<11}{:>9}\n",
            kind.name(),
            kind.pathway().name(),
            kind.scope().name(),
            value
        ));
    }
    s
}

fn example(args: &ExampleArgs) -> Result<(), CliError> {
    if args.json {
        let (effects, share) = example_effects();
        emit(None, &pretty(&ExampleDocument::build(&effects, share))?)
    } else {
        emit(None, &example_table())
    }
}

fn generate_data(args: &GenerateArgs) -> Result<(), CliError> {
    let (config, _) = args.model.resolve()?;
    let data = generate(&config, args.rep);
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data, &args.columns.columns())?;
    match &args.out {
        Some(path) => write_file(path, &buf),
        None => emit(None, &String::from_utf8_lossy(&buf)),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Estimate(args) => {
            let doc = estimate(args)?;
            emit(args.out.as_deref(), &pretty(&doc)?)
        }
        Command::Simulate(args) => simulate(args),
        Command::Oracle(args) => oracle(args),
        Command::Example(args) => example(args),
        Command::Generate(args) => generate_data(args),
    }
}
