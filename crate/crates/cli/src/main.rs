//! `ratspn`: train, evaluate and probe random tensorized sum-product networks.

/// Prints a line to stdout. Write errors are ignored so that a closed pipe
/// (`ratspn ... | head`) does not abort a run before its files are written.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

mod commands;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ratspn_core::data::LabelColumn;
use serde::Serialize;

use inputs::{parse_label_column, CsvOptions, DataSpec};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERIC: u8 = 4;

    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: Self::DATA,
            message: message.into(),
        }
    }
}

impl From<ratspn_core::Error> for CliError {
    fn from(e: ratspn_core::Error) -> Self {
        let code = match e {
            ratspn_core::Error::Numeric(_) => Self::NUMERIC,
            _ => Self::DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ratspn",
    version,
    about = "Random tensorized sum-product networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, or post-train one with --warm-start.
    Train(TrainArgs),
    /// Accuracy, cross-entropy, nLL and mean log p(x) of a model on a dataset.
    Eval(EvalArgs),
    /// Accuracy as a growing fraction of features is marginalised out.
    SweepMissing(SweepMissingArgs),
    /// Compare log p(x) between in-domain and out-of-domain data.
    Ood(OodArgs),
    /// Post-train (or retrain) one model for each objective weight.
    SweepLambda(SweepLambdaArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafArg {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    None,
    Divmax,
    Zscore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorArg {
    Uniform,
    /// Class frequencies of the labelled dataset being scored.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingArg {
    Raw,
    Text,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct CsvArgs {
    /// Label column of CSV inputs: none, first, last or a 0-based index.
    #[arg(long, default_value = "last", value_parser = parse_label_column)]
    #[serde(skip)]
    pub label_column: LabelColumn,
    /// CSV inputs start with a header row.
    #[arg(long)]
    pub header: bool,
}

impl CsvArgs {
    pub fn options(&self) -> CsvOptions {
        CsvOptions {
            label: self.label_column,
            header: self.header,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct StructureArgs {
    /// Split depth D of the region graph.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Number of random split repetitions R.
    #[arg(long, default_value_t = 8)]
    pub repetitions: usize,
    /// Sum nodes per internal region.
    #[arg(long, default_value_t = 8)]
    pub sums: usize,
    /// Leaf distributions per leaf region.
    #[arg(long, default_value_t = 8)]
    pub leaves: usize,
    /// Number of classes; defaults to the largest training label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, value_enum, default_value_t = LeafArg::Gaussian)]
    pub leaf: LeafArg,
    /// Learn Gaussian variances instead of fixing them to one.
    #[arg(long)]
    pub train_variance: bool,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Probability that an input feature is kept during training.
    #[arg(long, default_value_t = 1.0)]
    pub keep_input: f64,
    /// Probability that a product feeding a sum is kept during training.
    #[arg(long, default_value_t = 1.0)]
    pub keep_sum: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Seeds the region graph, initialisation, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Training data: idx:IMAGES,LABELS or csv:PATH.
    #[arg(long)]
    pub data: DataSpec,
    /// Separate validation data, scaled with the training statistics.
    #[arg(long, conflicts_with = "valid_fraction")]
    pub valid_data: Option<DataSpec>,
    /// Fraction of the training data held out for validation.
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    #[command(flatten)]
    pub structure: StructureArgs,
    /// Weight of cross-entropy against normalised negative log-likelihood.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, value_enum, default_value_t = ScaleArg::Divmax)]
    pub scale: ScaleArg,
    /// Continue from this model. Its structure and scaling are kept and the
    /// structure flags are ignored.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EncodingArg::Raw)]
    pub encoding: EncodingArg,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Output directory for model.json, metrics.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: DataSpec,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    pub prior: PriorArg,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepMissingArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: DataSpec,
    /// Missing fractions to evaluate.
    #[arg(
        long = "p",
        value_delimiter = ',',
        default_value = "0,0.25,0.5,0.8,0.99"
    )]
    pub fractions: Vec<f64>,
    /// Mask seed shared by every fraction, so masks are nested as p grows.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    pub prior: PriorArg,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct OodArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub in_domain: DataSpec,
    /// Out-of-domain data; noise:COUNT[,SEED] draws uniform features.
    #[arg(long)]
    pub out_domain: DataSpec,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    pub prior: PriorArg,
    /// In-domain samples below this percentile of log p(x) are listed as
    /// outliers, those above 100 minus it as inliers.
    #[arg(long, default_value_t = 5.0)]
    pub outlier_percentile: f64,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepLambdaArgs {
    /// Starting model, normally trained with lambda = 1.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: DataSpec,
    #[arg(long)]
    pub test: DataSpec,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.5,1")]
    pub lambdas: Vec<f64>,
    /// Retrain from a fresh initialisation instead of post-training.
    #[arg(long)]
    pub from_scratch: bool,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, value_enum, default_value_t = EncodingArg::Raw)]
    pub encoding: EncodingArg,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::SweepMissing(a) => commands::sweep_missing(a),
        Command::Ood(a) => commands::ood(a),
        Command::SweepLambda(a) => commands::sweep_lambda(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
