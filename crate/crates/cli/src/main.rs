//! `ccb`: prepare -> train -> report for cooperative contextual bandits and
//! the logistic-regression baseline.

mod artifacts;
mod prepare;
mod report;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use ccb_core::ccb::PredictMode;
use ccb_core::selection::SelectionCriterion;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ccb",
    version,
    about = "Fair classification with cooperative contextual bandits",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the CSV 70/15/15, fit encoding statistics and write the manifest.
    Prepare(PrepareArgs),
    /// Train bandit models (one per grid point) or the logistic baseline.
    Train(TrainArgs),
    /// Select checkpoints on validation and evaluate on test.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; created if absent.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Ccb,
    Lr,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    out: PathBuf,
    /// Override the data path recorded by `prepare`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the schema path recorded by `prepare`.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Ccb)]
    method: Method,
    /// Training seed; defaults to the split seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fairness weight(s); a comma-separated list trains a grid.
    #[arg(long = "lambda", value_delimiter = ',', default_values_t = [50.0])]
    lambdas: Vec<f64>,
    /// Hidden layer width(s); comma-separated for a grid.
    #[arg(long = "hidden", value_delimiter = ',', default_values_t = [40])]
    hidden: Vec<usize>,
    /// Training steps; defaults to 100 x |train| capped at 2,000,000.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value_t = ccb_core::ccb::DEFAULT_ALPHA)]
    alpha: f64,
    /// Steps between checkpoints; defaults to 1% of the steps.
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Grid points trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Criterion used for the ranked grid table and the submodel report.
    #[arg(long, value_parser = parse_criterion, default_value = "discrimination")]
    criterion: SelectionCriterion,
    /// Neighbours used by the consistency metric.
    #[arg(long, default_value_t = ccb_core::metrics::DEFAULT_K)]
    k: usize,
    /// Prediction mode for the test-set rows.
    #[arg(long, value_parser = parse_mode, default_value = "original")]
    mode: PredictMode,
}

fn parse_criterion(s: &str) -> Result<SelectionCriterion, String> {
    s.parse().map_err(|e: ccb_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<PredictMode, String> {
    s.parse().map_err(|e: ccb_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(args) => prepare::run(&args),
        Command::Train(args) => train::run(&args),
        Command::Report(args) => report::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numeric = err
                .chain()
                .filter_map(|e| e.downcast_ref::<ccb_core::Error>())
                .any(ccb_core::Error::is_numeric);
            ExitCode::from(if numeric { EXIT_NUMERIC } else { EXIT_CONFIG })
        }
    }
}
