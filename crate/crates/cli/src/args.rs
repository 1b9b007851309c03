use std::path::PathBuf;

use allocscore::{Marginal, WeightKind};
use allocscore_hubio::Format;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "allocscore", version, about = "Score multivariate forecasts by the allocations they imply")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print each forecast's optimal allocation of K units.
    Allocate {
        #[command(flatten)]
        input: ForecastArgs,
        /// Resource constraint.
        #[arg(long = "k", default_value_t = 15_000.0)]
        k: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Allocation scores at a single K, with an optional rank table.
    Score {
        #[command(flatten)]
        input: ForecastArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[arg(long = "k", default_value_t = 15_000.0)]
        k: f64,
        /// Loss per unit of unmet need.
        #[arg(long, default_value_t = 1.0)]
        loss: f64,
        /// Also write a per-model rank table here (same format as --format).
        #[arg(long)]
        ranks: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Integrated allocation scores over a weighted grid of K.
    Ias {
        #[command(flatten)]
        input: ForecastArgs,
        #[command(flatten)]
        truth: TruthArgs,
        /// `uniform`, `uniform:lo,hi`, `truncnormal:center,sd,lo,hi` or `point:k`.
        #[arg(long, default_value = "truncnormal:15000,3000,5000,25000", value_parser = parse_weight)]
        weight: WeightArg,
        /// Bounds used by a bare `uniform` weight.
        #[arg(long, default_value_t = 200.0)]
        k_min: f64,
        #[arg(long, default_value_t = 60_000.0)]
        k_max: f64,
        #[arg(long, default_value_t = 200.0)]
        k_step: f64,
        #[arg(long, default_value_t = 1.0)]
        loss: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Mean weighted interval score across locations.
    Wis {
        #[command(flatten)]
        input: ForecastArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Allocation scores over a K grid, one row per model, date and K.
    Sweep {
        #[command(flatten)]
        input: ForecastArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[arg(long, default_value_t = 200.0)]
        k_min: f64,
        #[arg(long, default_value_t = 60_000.0)]
        k_max: f64,
        #[arg(long, default_value_t = 200.0)]
        k_step: f64,
        #[arg(long, default_value_t = 1.0)]
        loss: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo experiments on parametric forecasts.
    Lab {
        #[command(subcommand)]
        experiment: LabCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum LabCommand {
    /// Compare the data-generating forecast F against a competitor G.
    Propriety {
        /// Marginal of F, repeated per location: `exp:scale`, `normal:mean,sd` or `lognormal:mu,sigma`.
        #[arg(long = "f", required = true, value_parser = parse_marginal)]
        truth: Vec<Marginal>,
        /// Marginal of G, one per location of F.
        #[arg(long = "g", required = true, value_parser = parse_marginal)]
        other: Vec<Marginal>,
        #[command(flatten)]
        run: LabArgs,
    },
    /// Score F against the forecast rebuilt from its 23 hub quantiles.
    Posthoc {
        #[arg(long = "f", required = true, value_parser = parse_marginal)]
        truth: Vec<Marginal>,
        #[command(flatten)]
        run: LabArgs,
    },
}

#[derive(Debug, Args)]
pub struct LabArgs {
    #[arg(long = "k")]
    pub k: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 20_240_207)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub loss: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Forecast CSV: model,location,target_date,quantile_level,value.
    #[arg(long)]
    pub forecasts: PathBuf,
    /// Comma-separated models to keep.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Keep only models with forecasts for at least this many target dates.
    #[arg(long)]
    pub min_weeks: Option<usize>,
    /// Required locations (default: every location in the file).
    #[arg(long, value_delimiter = ',')]
    pub locations: Option<Vec<String>>,
    /// Drop forecasts missing a required location instead of failing.
    #[arg(long)]
    pub drop_incomplete: bool,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    /// Truth CSV: location,date,value.
    #[arg(long)]
    pub truth: PathBuf,
    /// Population CSV: location,population. Adds a per-capita benchmark.
    #[arg(long)]
    pub population: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relative bracket width at which bisection stops.
    #[arg(long, default_value_t = 1e-9)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = "csv")]
    pub format: Format,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightArg {
    /// Uniform over the command's `--k-min`..`--k-max`.
    UniformDefault,
    Kind(WeightKind<f64>),
}

fn numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let xs = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if xs.len() != n {
        return Err(format!("expected {n} comma-separated numbers, found {}", xs.len()));
    }
    Ok(xs)
}

pub fn parse_weight(s: &str) -> Result<WeightArg, String> {
    let (name, params) = s.split_once(':').unwrap_or((s, ""));
    match name.trim().to_ascii_lowercase().as_str() {
        "uniform" if params.is_empty() => Ok(WeightArg::UniformDefault),
        "uniform" => {
            let v = numbers(params, 2)?;
            Ok(WeightArg::Kind(WeightKind::Uniform { k_min: v[0], k_max: v[1] }))
        }
        "truncnormal" => {
            let v = numbers(params, 4)?;
            Ok(WeightArg::Kind(WeightKind::TruncNormal { center: v[0], sd: v[1], lower: v[2], upper: v[3] }))
        }
        "point" => Ok(WeightArg::Kind(WeightKind::PointMass { k: numbers(params, 1)?[0] })),
        other => Err(format!("unknown weight `{other}`")),
    }
}

pub fn parse_marginal(s: &str) -> Result<Marginal, String> {
    let (name, params) = s.split_once(':').ok_or_else(|| format!("`{s}`: expected family:parameters"))?;
    let made = match name.trim().to_ascii_lowercase().as_str() {
        "exp" | "exponential" => Marginal::exponential(numbers(params, 1)?[0]),
        "normal" => {
            let v = numbers(params, 2)?;
            Marginal::normal(v[0], v[1])
        }
        "lognormal" => {
            let v = numbers(params, 2)?;
            Marginal::lognormal(v[0], v[1])
        }
        other => return Err(format!("unknown family `{other}`")),
    };
    made.map_err(|e| e.to_string())
}
