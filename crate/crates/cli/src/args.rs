use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfd_core::dataset::LabelColumn;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "rfd", version, about = "Random forest distance: training, queries and benchmarks")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RFD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a distance model and save it.
    Train(TrainArgs),
    /// Print the distance between two points under a saved model.
    Dist(DistArgs),
    /// k-NN accuracy over a k grid with cross-validation.
    BenchKnn(KnnArgs),
    /// k-NN test error at one k, averaged over repeated cross-validation.
    BenchFixedK(FixedKArgs),
    /// Per-class precision of the nearest training points.
    BenchRetrieval(RetrievalArgs),
    /// k-NN accuracy as a function of forest size.
    ForestSweep(SweepArgs),
    /// Write a three-class swiss roll dataset.
    GenSwissroll(SwissArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    Rfd,
    Euclidean,
    Mahalanobis,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Dataset CSV; one sample per row.
    #[arg(long)]
    pub data: PathBuf,
    /// Whether the first CSV row is a header.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub header: Switch,
    /// Label column: "last" or a 0-based index.
    #[arg(long, default_value = "last")]
    #[serde(serialize_with = "label_column")]
    pub label: LabelColumn,
}

fn label_column<S: serde::Serializer>(c: &LabelColumn, s: S) -> Result<S::Ok, S::Error> {
    match c {
        LabelColumn::Last => s.serialize_str("last"),
        LabelColumn::Index(i) => s.serialize_str(&i.to_string()),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ForestArgs {
    /// Trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Maximum tree depth (default: unlimited).
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Minimum rows per leaf.
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    /// Candidate features per split (default: ceil(sqrt(features))).
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Grow each tree on a bootstrap resample.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub bootstrap: Switch,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstraintArgs {
    /// Similar pairs drawn per class.
    #[arg(long)]
    pub pos_per_class: Option<usize>,
    /// Dissimilar pairs drawn per class.
    #[arg(long)]
    pub neg_per_class: Option<usize>,
    /// Fraction of all similar pairs to draw (excludes the per-class flags).
    #[arg(long)]
    pub pos_frac: Option<f64>,
    /// Fraction of all dissimilar pairs to draw.
    #[arg(long)]
    pub neg_frac: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = TrainMethod::Rfd)]
    pub method: TrainMethod,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    /// Include the pair midpoint in the pair features.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub position: Switch,
    /// Z-score features before training; the scaling is stored in the model.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub normalize: Switch,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DistArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset holding rows --i and --j.
    #[arg(long, requires_all = ["i", "j"])]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub header: Switch,
    #[arg(long, default_value = "last")]
    #[serde(serialize_with = "label_column")]
    pub label: LabelColumn,
    #[arg(long, requires = "data")]
    pub i: Option<usize>,
    #[arg(long, requires = "data")]
    pub j: Option<usize>,
    /// First point, comma-separated.
    #[arg(long, conflicts_with = "data", requires = "b", allow_hyphen_values = true)]
    pub a: Option<String>,
    /// Second point, comma-separated.
    #[arg(long, conflicts_with = "data", requires = "a", allow_hyphen_values = true)]
    pub b: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cross-validation folds (default depends on the command)
    #[arg(long)]
    pub folds: Option<usize>,
    /// Repetitions with fresh fold assignments (default depends on the command)
    #[arg(long)]
    pub runs: Option<usize>,
    /// Z-score features with each training partition's statistics.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub normalize: Switch,
    /// Comma-separated: rfd+p, rfd-p, euclidean, mahalanobis, mahalanobis-cov.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    /// Output directory for the report CSVs.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KGridArgs {
    /// Spacing of the k grid.
    #[arg(long, default_value_t = 5)]
    pub k_step: usize,
    /// Largest k (default: size of the smallest class).
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KnnArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[command(flatten)]
    pub grid: KGridArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FixedKArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, default_value_t = 11)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RetrievalArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Neighbors retrieved per query.
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[command(flatten)]
    pub grid: KGridArgs,
    /// Forest sizes to evaluate, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "10,100,500")]
    pub tree_counts: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SwissArgs {
    #[arg(long, default_value_t = 900)]
    pub n: usize,
    /// Standard deviation of the Gaussian noise added to every coordinate.
    #[arg(long, default_value_t = rfd_core::dataset::SWISS_ROLL_NOISE)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "swissroll.csv")]
    pub out: PathBuf,
}
