use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ucosda_core::datasets::DEFAULT_PER_SOURCE;
use ucosda_core::pseudolabel::{DEFAULT_ITERATIONS, DEFAULT_TAU};

#[derive(Debug, Parser)]
#[command(name = "ucosda", version, about = "Unsupervised camouflaged object segmentation pipeline")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the training split from camouflage and salient-object datasets.
    Split(SplitArgs),
    /// Generate (or reuse) cached pseudo-labels for every image of a split.
    PseudoLabel(PseudoLabelArgs),
    /// Train the segmentation head and FBA module on pseudo-labels.
    Train(TrainArgs),
    /// Write probability maps for a directory of images.
    Predict(PredictArgs),
    /// Score predictions against ground truth and print the benchmark table.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Camouflaged-object dataset roots (each holding images/ and gt/).
    #[arg(long, required = true, num_args = 1..)]
    pub cod: Vec<PathBuf>,
    /// Salient-object dataset roots (each holding images/ and gt/).
    #[arg(long, required = true, num_args = 1..)]
    pub sod: Vec<PathBuf>,
    /// Images drawn from each of the two sources.
    #[arg(long, default_value_t = DEFAULT_PER_SOURCE)]
    pub per_source: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest file to write.
    #[arg(long, default_value = "split.tsv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BackboneArgs {
    /// Feature extractor: vit_small_8, vit_base_8, or patch_stats_<N> (a
    /// weight-free stand-in with patch size N, a multiple of 4).
    #[arg(long, default_value = "vit_small_8")]
    pub arch: String,
    /// Safetensors weights for the ViT architectures [default: none].
    #[arg(long)]
    pub backbone_weights: Option<PathBuf>,
    /// Directory for cached patch features [default: no caching].
    #[arg(long)]
    pub feature_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    /// Cosine-similarity threshold of the patch affinity graph.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Normalized-cut rounds whose foregrounds are merged.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub ncut_iters: usize,
    /// Root of the pseudo-label cache.
    #[arg(long, default_value = "cache/pseudo")]
    pub pl_cache: PathBuf,
}

#[derive(Debug, Args)]
pub struct PseudoLabelArgs {
    /// Split manifest written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    /// Training config; only image_size is used here [default: built-in defaults].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub backbone: BackboneArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key=value config file [default: built-in defaults].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split manifest written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    /// Output directory for checkpoint.json, loss.csv and config.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed [default: value from config].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config FBA widths, as C1,C2 [default: value from config].
    #[arg(long)]
    pub fba_channels: Option<String>,
    /// Continue from <out>/checkpoint.json [default: off].
    #[arg(long, default_value_t = false)]
    pub resume: bool,
    /// Resume even if the config or split changed since the checkpoint [default: off].
    #[arg(long, default_value_t = false)]
    pub force: bool,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub backbone: BackboneArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of input images (jpg or png).
    #[arg(long)]
    pub images: PathBuf,
    /// Directory that receives one grayscale PNG per input.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backbone: BackboneArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction directory (or parent of per-dataset directories with --datasets).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth directory (or parent of per-dataset directories with --datasets).
    #[arg(long)]
    pub gt: PathBuf,
    /// Comma-separated dataset names, each a subdirectory of --pred and --gt [default: evaluate --pred against --gt directly].
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
    /// CSV report path.
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
}
