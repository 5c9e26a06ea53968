use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "linksynth", version, about = "Inverse design of crank-rocker four-bar linkages")]
pub struct Cli {
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled Latin hypercube dataset of crank-rockers.
    GenData(GenDataArgs),
    /// Fit the surrogate that predicts (d_max, eta_min) from a linkage.
    TrainPredictor(TrainPredictorArgs),
    /// Train the conditional generator against a frozen predictor.
    TrainCgan(TrainCganArgs),
    /// Train one generator per hyperparameter cell and keep the best.
    GridSearch(GridSearchArgs),
    /// Generate linkages for a target (d_max, eta_min).
    Synthesize(SynthesizeArgs),
    /// Run the NSGA-II baseline towards a target.
    Nsga2(Nsga2Args),
    /// Score a generator on sampled or fixed target conditions.
    Evaluate(EvaluateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Run the whole pipeline and write repro-report.json.
    Repro(ReproArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::TrainPredictor(_) => "train-predictor",
            Command::TrainCgan(_) => "train-cgan",
            Command::GridSearch(_) => "grid-search",
            Command::Synthesize(_) => "synthesize",
            Command::Nsga2(_) => "nsga2",
            Command::Evaluate(_) => "evaluate",
            Command::Serve(_) => "serve",
            Command::Repro(_) => "repro",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    /// Number of valid samples to keep.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Crank positions per revolution used for labelling.
    #[arg(long)]
    pub steps: Option<usize>,
    /// JSON file with link length ranges.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainPredictorArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainCganArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr_g: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    /// Predictor loss weight.
    #[arg(long)]
    pub wp: Option<f64>,
    /// Similarity loss weight.
    #[arg(long)]
    pub ws: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Ablation variant A, B, C or D.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub no_predictor_loss: bool,
    #[arg(long)]
    #[serde(default)]
    pub no_similarity_loss: bool,
    /// Score the generator every this many steps and keep the best snapshot (0 keeps the last).
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// CSV file for the loss history.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GridSearchArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    /// Ablation variant A, B, C or D.
    #[arg(long)]
    pub model: Option<String>,
    /// `smoke` (two values per learning rate and weight) or `full`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Generator steps per cell.
    #[arg(long)]
    pub steps: Option<usize>,
    /// JSON report of every cell.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint path for the best generator.
    #[arg(long)]
    pub best: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SynthesizeArgs {
    /// Generator checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dmax: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Crank resolution of the exact evaluation.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct Nsga2Args {
    /// Predictor checkpoint used as the fitness oracle.
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    #[arg(long)]
    pub dmax: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub pop: Option<usize>,
    #[arg(long)]
    pub gens: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Generator checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset the k-NN condition sampler draws from (multi mode).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `multi` (sampled conditions) or `single` (one fixed target).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub dmax: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Optional CSV of every evaluated sample.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    /// Generator checkpoint; synthesis answers 503 without one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset for the condition-space statistics.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ReproArgs {
    /// `smoke` or `full`.
    #[arg(long)]
    pub scale: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Reuse an existing dataset instead of generating one.
    #[arg(long)]
    pub data: Option<PathBuf>,
}
