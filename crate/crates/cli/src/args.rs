use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "catvrnn", version, about = "Category-aware variational recurrent text generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, relabel or synthesize a labeled corpus and write its manifest.
    BuildData(BuildDataArgs),
    /// Train a model and write checkpoints plus per-epoch statistics.
    Train(TrainArgs),
    /// Sample sentences per category from a checkpoint.
    Generate(GenerateArgs),
    /// Compute category accuracy, perplexity and BLEU.
    Evaluate(EvaluateArgs),
    /// Run the finite-difference gradient suite.
    GradCheck(GradCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildData(_) => "build-data",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Evaluate(_) => "evaluate",
            Command::GradCheck(_) => "grad-check",
        }
    }

    pub fn settings(&self) -> serde_json::Value {
        let v = match self {
            Command::BuildData(a) => serde_json::to_value(a),
            Command::Train(a) => serde_json::to_value(a),
            Command::Generate(a) => serde_json::to_value(a),
            Command::Evaluate(a) => serde_json::to_value(a),
            Command::GradCheck(a) => serde_json::to_value(a),
        };
        v.unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct BuildDataArgs {
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input corpus (TSV: category TAB tokens).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output corpus path.
    #[arg(long)]
    pub output: PathBuf,
    /// Manifest path; defaults to `<output>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Keep sentences with MIN <= length <= MAX, written `MIN:MAX`.
    #[arg(long, value_name = "MIN:MAX")]
    pub filter_len: Option<String>,
    /// Relabel a 10-cell quality base: icq-1c, icq-2c, icq-5c or icq-10c.
    #[arg(long)]
    pub variant: Option<String>,
    /// Take the first K products for the accuracy series.
    #[arg(long, value_name = "K")]
    pub ica: Option<usize>,
    /// Randomly keep at most N sentences per category.
    #[arg(long, value_name = "N")]
    pub subsample: Option<usize>,
    /// Generate a disjoint-vocabulary synthetic corpus instead of reading input.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 2)]
    pub categories: usize,
    #[arg(long, default_value_t = 200)]
    pub per_category: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab_per_category: usize,
    #[arg(long, default_value_t = 4)]
    pub min_len: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Initial hidden state: static, adaptive or none (zero while training).
    #[arg(long, default_value = "static")]
    pub init: String,
    /// Scale of the static initializer.
    #[arg(long, default_value_t = 8.5)]
    pub omega: f64,
    /// Add the conditional prior and its KL penalty.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub kl: bool,
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub feature_extractors: bool,
    /// Detach the classifier input (single-task variant).
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub single_task: bool,
    /// Drop PAD targets after the terminating one from the loss.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub mask_padding: bool,
    /// Uniform noise on the adaptive initial state while training.
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = ArgAction::Set)]
    pub adaptive_noise: bool,
    #[arg(long, default_value_t = 300)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub latent_dim: usize,
    /// Sequence length T.
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
    /// Comma-separated encoder widths.
    #[arg(long, default_value = "512,256")]
    pub encoder_widths: String,
    /// Comma-separated decoder widths.
    #[arg(long, default_value = "256,300")]
    pub decoder_widths: String,
    #[arg(long, default_value_t = 256)]
    pub prior_width: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus (TSV).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint directory.
    #[arg(long, default_value = "runs/catvrnn")]
    pub out: PathBuf,
    /// Per-epoch JSON lines; defaults to `<out>/metrics.jsonl`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    /// Write `epoch-NNNN.ckpt` every N epochs (0 disables).
    #[arg(long, default_value_t = 10)]
    pub save_every: usize,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Samples per category.
    #[arg(short = 'n', long = "count", default_value_t = 100)]
    pub count: usize,
    /// Comma-separated categories; all categories when omitted.
    #[arg(short = 'c', long = "categories")]
    pub categories: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the sampling temperature stored in the checkpoint.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Output TSV; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Real training corpus (BLEU references, perplexity, classifier data).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model to sample from and score.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Externally generated sentences (TSV: intended category TAB text).
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// Samples per category when sampling from a checkpoint.
    #[arg(short = 'n', long = "count", default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Load a trained CNN classifier.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Train the CNN classifier on the corpus.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub train_classifier: bool,
    /// Save the trained classifier here.
    #[arg(long)]
    pub classifier_out: Option<PathBuf>,
    /// Score with exact word membership (disjoint-vocabulary corpora).
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub oracle: bool,
    #[arg(long, default_value_t = 128)]
    pub cnn_embed: usize,
    #[arg(long, default_value_t = 100)]
    pub cnn_maps: usize,
    #[arg(long, default_value_t = 10)]
    pub cnn_epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub cnn_max_len: usize,
    /// Comma-separated BLEU orders.
    #[arg(long, default_value = "2,3,4,5")]
    pub orders: String,
    /// Cap on training sentences scored by backward BLEU.
    #[arg(long, default_value_t = 5000)]
    pub max_backward_refs: usize,
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
    /// Report path; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Also write the sampled sentences as TSV.
    #[arg(long)]
    pub write_generated: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Debug aid: perturb the matmul backward pass so the suite must fail.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub corrupt_backward: bool,
    /// JSON report path.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}
