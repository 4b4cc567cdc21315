//! `masknet` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input error,
//! 3 a metric was undefined (e.g. a single-class evaluation split).

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Metric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Metric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::Metric(m) => write!(f, "metric undefined: {m}"),
        }
    }
}

impl From<masknet::Error> for CliError {
    fn from(e: masknet::Error) -> Self {
        use masknet::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Schema(_) | E::Ingest { .. } | E::Encoding(_) => CliError::Usage(msg),
            E::UndefinedMetric(_) => CliError::Metric(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "masknet", version, about = "Train, evaluate and inspect MaskNet CTR models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (data.csv, columns.txt, manifest.txt).
    GenSynth(GenSynthArgs),
    /// Train one model and evaluate it on the test split.
    Train(RunArgs),
    /// Train several topologies under one budget and report RelaImp vs DNN.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated topologies.
        #[arg(long, default_value = "linear,dnn,serial,parallel")]
        topologies: String,
    },
    /// Full model and single-component removals for both topologies.
    Ablation(RunArgs),
    /// Retrain while varying one hyperparameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// blocks, embedding_dim or reduction_ratio
        #[arg(long)]
        param: String,
        /// Comma-separated integer values.
        #[arg(long)]
        values: String,
    },
    /// Finite-difference check of every layer's and model's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
    },
    /// Histograms and example vectors of a trained model's masks.
    InspectMask(InspectArgs),
}

#[derive(Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 8)]
    pub fields: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    #[arg(long, default_value_t = 4)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 60_000)]
    pub instances: usize,
    #[arg(long, default_value_t = 4.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Split seed used for the manifest's test-split reference AUCs.
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// TOML run configuration; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV file, overriding `data.path`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub columns: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<String>,
    /// Comma-separated removals: no_mask, no_ln, no_ffn.
    #[arg(long)]
    pub ablate: Option<String>,
    /// Number of blocks (keeps the first configured width).
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Width of every block.
    #[arg(long)]
    pub block_width: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub reduction_ratio: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Overrides model, training and split seeds.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub columns: Option<PathBuf>,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Restrict to one split of the file: all, train, valid or test.
    #[arg(long, default_value = "all")]
    pub split: String,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub sample: usize,
    #[arg(long, default_value_t = 4)]
    pub examples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => commands::gen_synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Compare { run, topologies } => commands::compare(&run, &topologies),
        Command::Ablation(a) => commands::ablation(&a),
        Command::Sweep { run, param, values } => commands::sweep(&run, &param, &values),
        Command::Gradcheck { tolerance, step } => commands::gradcheck(tolerance, step),
        Command::InspectMask(a) => commands::inspect_mask(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
