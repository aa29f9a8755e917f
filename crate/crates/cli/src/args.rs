use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use excon_core::data::DEFAULT_IMPUTE_K;
use excon_core::embedder::{CellKind, TrainConfig};
use excon_core::heads::LogisticConfig;
use excon_core::pipeline::{BaselineKind, HeadConfig, PipelineConfig};
use excon_core::heads::rocket::DEFAULT_NUM_KERNELS;
use excon_core::LabelScheme;

/// Extreme-instance contrastive representations for imbalanced
/// multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "excon", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic imbalanced two-class dataset.
    Synth(SynthArgs),
    /// Preprocess a dataset and write its feature vectors.
    Extract(ExtractArgs),
    /// Derive one extreme instance per class from feature vectors.
    Extremes(ExtremesArgs),
    /// Train the embedder against a set of extremes.
    Train(TrainArgs),
    /// Embed a dataset with a trained model.
    Embed(EmbedArgs),
    /// Fit a classification head on vectors.
    FitHead(FitHeadArgs),
    /// Predict with a fitted head.
    Predict(PredictArgs),
    /// Compute metric reports from prediction files.
    Eval(EvalArgs),
    /// Run the full method from train/test datasets to a metric report.
    Pipeline(PipelineArgs),
    /// Run a comparison method with the same preprocessing and metrics.
    Baseline(BaselineArgs),
    /// Project vectors onto their top principal directions.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the manifest and instance files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Fraction of positive instances.
    #[arg(long, default_value_t = 0.05)]
    pub imbalance: f64,
    #[arg(long, default_value_t = 64)]
    pub tau: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 0.2)]
    pub ar_neg: f64,
    #[arg(long, default_value_t = 0.9)]
    pub ar_pos: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sin_amp: f64,
    #[arg(long, default_value_t = 20.0)]
    pub sin_period: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// How instances are loaded and preprocessed.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Category-to-label mapping: `flare` or `CAT=LABEL,...`. Without it,
    /// the labels stored in the manifest are used.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long, default_value = "F")]
    pub positive_class: String,
    /// Train-side category filter; positive-class categories are always kept.
    #[arg(long, value_delimiter = ',')]
    pub keep_categories: Option<Vec<String>>,
    /// Donor count for imputing missing entries.
    #[arg(long, default_value_t = DEFAULT_IMPUTE_K)]
    pub impute_k: usize,
}

impl DataArgs {
    pub fn scheme(&self) -> excon_core::Result<Option<LabelScheme>> {
        match self.labels.as_deref() {
            None => Ok(None),
            Some("flare") => LabelScheme::new(LabelScheme::flare().mapping, self.positive_class.as_str()).map(Some),
            Some(spec) => LabelScheme::parse(spec, &self.positive_class).map(Some),
        }
    }

    pub fn keep(&self) -> Option<BTreeSet<String>> {
        self.keep_categories.as_ref().map(|v| v.iter().cloned().collect())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Cell {
    Lstm,
    Gru,
    Rnn,
}

impl From<Cell> for CellKind {
    fn from(c: Cell) -> Self {
        match c {
            Cell::Lstm => CellKind::Lstm,
            Cell::Gru => CellKind::Gru,
            Cell::Rnn => CellKind::Rnn,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "lstm")]
    pub cell: Cell,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            dropout: self.dropout,
            hidden_dim: self.hidden,
            cell_kind: self.cell.into(),
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadKind {
    Lr,
    Knn,
}

#[derive(Debug, Clone, Args)]
pub struct HeadArgs {
    #[arg(long, value_enum, default_value = "lr")]
    pub head: HeadKind,
    /// Neighbour count for the kNN head.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// L2 penalty for the logistic head.
    #[arg(long, default_value_t = LogisticConfig::default().lambda)]
    pub lambda: f64,
}

impl HeadArgs {
    pub fn head_config(&self) -> HeadConfig {
        match self.head {
            HeadKind::Lr => HeadConfig::Lr(LogisticConfig {
                lambda: self.lambda,
                ..LogisticConfig::default()
            }),
            HeadKind::Knn => HeadConfig::Knn { k: self.k },
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "c22")]
    pub bank: String,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Debug, Args)]
pub struct ExtremesArgs {
    /// Feature CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Output extremes JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Extremes JSON.
    #[arg(long)]
    pub extremes: PathBuf,
    /// Output model checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Output embedding CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Debug, Args)]
pub struct FitHeadArgs {
    /// Training vectors (features or embeddings CSV).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output head JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub head: HeadArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fitted head JSON.
    #[arg(long)]
    pub head: PathBuf,
    /// Vectors to classify.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction CSVs, optionally named as NAME=PATH.
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<String>,
    #[arg(long, default_value = "F")]
    pub positive_class: String,
    /// Directory for report.json and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Training dataset manifest.
    #[arg(long)]
    pub train: PathBuf,
    /// Test dataset manifest.
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory for artifacts; nothing is written without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "c22")]
    pub bank: String,
    #[command(flatten)]
    pub data_args: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub head: HeadArgs,
}

impl RunArgs {
    pub fn pipeline_config(&self, rocket_kernels: usize) -> PipelineConfig {
        PipelineConfig {
            bank: self.bank.clone(),
            train: self.model.train_config(),
            head: self.head.head_config(),
            positive_class: self.data_args.positive_class.clone(),
            keep_categories: self.data_args.keep(),
            impute_k: self.data_args.impute_k,
            seed: self.model.seed,
            rocket_kernels,
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    pub kind: Baseline,
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of random kernels for ROCKET.
    #[arg(long, default_value_t = DEFAULT_NUM_KERNELS)]
    pub kernels: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Baseline {
    Mvts2v,
    Lpvv,
    Seq,
    Rocket,
}

impl From<Baseline> for BaselineKind {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Mvts2v => BaselineKind::Mvts2v,
            Baseline::Lpvv => BaselineKind::Lpvv,
            Baseline::Seq => BaselineKind::Seq,
            Baseline::Rocket => BaselineKind::Rocket,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Vector CSV (features or embeddings).
    #[arg(long)]
    pub vectors: PathBuf,
    /// Output CSV of projected points.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
}
