//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "fibinetpp",
    version,
    about = "Train, evaluate and audit CTR models (dnn, fibinet, fibinetpp)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on a TSV dataset (8:1:1 split) and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a TSV dataset (AUC, log loss).
    Eval(EvalArgs),
    /// Score TSV rows with a checkpoint, one prediction per line.
    Predict(PredictArgs),
    /// Exact parameter accounting plus the closed-form size figures.
    CountParams(CountParamsArgs),
    /// Central-difference gradient checks per layer and for the full graph.
    Gradcheck(GradcheckArgs),
    /// Generate a planted-interaction synthetic dataset with its oracle.
    GenSynthetic(GenSyntheticArgs),
    /// Train across a list of values for one hyper-parameter (g, r or m).
    Sweep(SweepArgs),
}

/// Architecture hyper-parameter overrides shared by several commands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Architecture: dnn | fibinet | fibinetpp
    #[arg(long)]
    pub arch: Option<String>,
    /// Embedding dimension d
    #[arg(short = 'd', long)]
    pub embedding_dim: Option<usize>,
    /// Hidden layer widths, e.g. 400,400,400
    #[arg(long, value_delimiter = ',')]
    pub mlp: Option<Vec<usize>>,
    /// Compression layer size m
    #[arg(short = 'm', long)]
    pub compression_size: Option<usize>,
    /// Squeeze group count g
    #[arg(short = 'g', long)]
    pub groups: Option<usize>,
    /// Excitation reduction ratio r
    #[arg(short = 'r', long)]
    pub reduction: Option<usize>,
    /// Bilinear weight sharing: all | each | interaction
    #[arg(long)]
    pub bilinear_type: Option<String>,
}

/// Training protocol overrides.
#[derive(Args, Debug, Clone)]
pub struct ProtocolArgs {
    /// Learning rate; omitted tries the {1e-4, 1e-3} grid (best val AUC wins)
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum token frequency for the vocabulary
    #[arg(long)]
    pub min_token_freq: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training TSV (label, numeric columns, categorical columns)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Leading numerical column count
    #[arg(long)]
    pub num_fields: Option<usize>,
    /// Trailing categorical column count
    #[arg(long)]
    pub cat_fields: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Checkpoint base path (writes <out>.json and <out>.bin)
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
    /// Metrics stream file (one JSON object per epoch); stdout if omitted
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Directory for one vocabulary file per categorical field
    #[arg(long)]
    pub vocab_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct CountParamsArgs {
    /// Architecture: dnn | fibinet | fibinetpp
    #[arg(long, default_value = "fibinetpp")]
    pub arch: String,
    /// Field count f
    #[arg(short = 'f', long)]
    pub fields: usize,
    #[arg(short = 'd', long, default_value_t = 10)]
    pub embedding_dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "400,400,400")]
    pub mlp: Vec<usize>,
    #[arg(short = 'm', long, default_value_t = 50)]
    pub compression_size: usize,
    #[arg(short = 'g', long, default_value_t = 2)]
    pub groups: usize,
    #[arg(short = 'r', long, default_value_t = 3)]
    pub reduction: usize,
    #[arg(long, default_value = "interaction")]
    pub bilinear_type: String,
    /// Total feature count t; vocabularies are sized so the schema matches
    #[arg(short = 't', long)]
    pub features_total: Option<usize>,
    /// Per-field vocabulary size when --features-total is omitted
    #[arg(long, default_value_t = 100)]
    pub vocab_size: usize,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "fibinetpp")]
    pub arch: String,
    #[arg(short = 'f', long, default_value_t = 4)]
    pub fields: usize,
    #[arg(short = 'd', long, default_value_t = 4)]
    pub embedding_dim: usize,
    #[arg(short = 'g', long, default_value_t = 2)]
    pub groups: usize,
    #[arg(short = 'r', long, default_value_t = 3)]
    pub reduction: usize,
    #[arg(short = 'm', long, default_value_t = 5)]
    pub compression_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub mlp: Vec<usize>,
    #[arg(long, default_value = "interaction")]
    pub bilinear_type: String,
    #[arg(long, default_value_t = 2)]
    pub seed: u64,
    /// Batch rows pushed through the checks
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Maximum accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct GenSyntheticArgs {
    /// Output directory (writes data.tsv and oracle.json)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 2)]
    pub num_fields: usize,
    #[arg(long, default_value_t = 6)]
    pub cat_fields: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab_size: usize,
    /// Planted pairs over categorical field ordinals, e.g. 0:1,2:3
    #[arg(long, default_value = "0:1,2:3,4:5")]
    pub pairs: String,
    #[arg(long, default_value_t = 3.0)]
    pub pair_weight: f64,
    #[arg(long, default_value_t = 0.0)]
    pub linear_scale: f64,
    /// Logit noise standard deviation
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Hyper-parameter to vary: g | r | m
    #[arg(long)]
    pub param: String,
    /// Values to try, e.g. 1,2,4
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub num_fields: Option<usize>,
    #[arg(long)]
    pub cat_fields: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}
