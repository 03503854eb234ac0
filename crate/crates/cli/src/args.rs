use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "frosketch", version, about = "Streaming matrix sketches and online sketching hashing")]
pub struct Cli {
    /// Worker threads for ground truth and distributed training.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data matrix.
    Synth(SynthArgs),
    /// Sketch a matrix with FD or FFD.
    Sketch(SketchArgs),
    /// Train a hash model on a single stream.
    Train(TrainArgs),
    /// Train a hash model across simulated workers and merge their sketches.
    Dfrosh(DfroshArgs),
    /// Sketch one worker's partition and write its summary.
    Worker(WorkerArgs),
    /// Merge worker summaries into a hash model.
    Merge(MergeArgs),
    /// Evaluate retrieval quality, optionally round by round.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Lowrank,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchMethod {
    Fd,
    Ffd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Report {
    None,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HashMethod {
    Lsh,
    Osh,
    Frosh,
    Dfrosh,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeedArg {
    /// Master seed.
    #[arg(long, env = "FROSKETCH_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, value_enum, default_value_t = DataKind::Lowrank)]
    pub kind: DataKind,
    /// Signal rank (lowrank).
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Noise divisor (lowrank).
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    /// Number of clusters (clustered).
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    /// Dimension of the shared cluster subspace (clustered) [default: min(64, d)].
    #[arg(long)]
    pub intrinsic_dim: Option<usize>,
    /// Scale of cluster centers (clustered).
    #[arg(long, default_value_t = 0.5)]
    pub center_scale: f64,
    /// Within-cluster standard deviation (clustered).
    #[arg(long, default_value_t = 0.5)]
    pub spread: f64,
    /// Ambient noise standard deviation (clustered).
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    /// Axis `i` of the subspace is scaled by `(i + 1)^-decay` (clustered).
    #[arg(long, default_value_t = 0.3)]
    pub decay: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output file; `.csv` selects CSV, anything else FSK1.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SketchArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SketchMethod::Ffd)]
    pub method: SketchMethod,
    #[arg(long)]
    pub ell: usize,
    /// Rows per streamed chunk and FFD buffer size [default: 4d rounded up to a power of two].
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
    /// `exact` makes a second pass to compute the relative Gram error.
    #[arg(long, value_enum, default_value_t = Report::None)]
    pub report: Report,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelParams {
    #[arg(long, default_value_t = 32)]
    pub bits: usize,
    /// Sketch rows [default: 2 × bits].
    #[arg(long)]
    pub ell: Option<usize>,
    /// Rows per chunk and FFD buffer size [default: 4d rounded up to a power of two].
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = HashMethod::Frosh)]
    pub method: HashMethod,
    #[command(flatten)]
    pub params: ModelParams,
    /// Also write a model after every `eta` chunks.
    #[arg(long)]
    pub eta: Option<usize>,
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DfroshArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub workers: usize,
    #[command(flatten)]
    pub params: ModelParams,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Also write every worker summary into this directory.
    #[arg(long)]
    pub summaries: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WorkerArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub worker_id: usize,
    /// Take part `worker-id` of this many contiguous parts of the input
    /// instead of the whole file.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub params: ModelParams,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MergeArgs {
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub bits: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// Query rows; without it the last `query-fraction` of the database is held out.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub query_fraction: f64,
    /// Fraction of the database counted as true neighbours.
    #[arg(long, default_value_t = 0.02)]
    pub fraction: f64,
    /// Evaluate a saved model instead of training.
    #[arg(long, conflicts_with = "method")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<HashMethod>,
    #[command(flatten)]
    pub params: ModelParams,
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 5)]
    pub workers: usize,
    /// Number of points on the precision-recall curve.
    #[arg(long, default_value_t = 20)]
    pub pr_points: usize,
    /// JSON-lines output [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}
