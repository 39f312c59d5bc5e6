use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "scope", version, about = "Find and clamp the protected-text subspace of an SAE")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic activation dump with known protected dimensions.
    GenPlanted(GenPlantedArgs),
    /// Train the toy character-level LM and check that it memorized its passages.
    TrainLm(TrainLmArgs),
    /// Dump toy-LM hook-layer activations for protected and filler windows.
    Extract(ExtractArgs),
    /// Train a JumpReLU SAE on an activation dump.
    TrainSae(TrainSaeArgs),
    /// Score every SAE dimension with the alignment score.
    Score(ScoreArgs),
    /// Select the top-n dimensions as the protected subspace.
    Select(SelectArgs),
    /// Greedy-decode protected-passage prompts with an optional intervention.
    ClampDecode(ClampDecodeArgs),
    /// Score generations against their references.
    Evaluate(EvaluateArgs),
    /// Aggregate metrics into win rates, and planted recall when available.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenPlantedArgs {
    /// Activation dump to write. Ground truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    /// Planted dimensions, comma separated [default: 16 evenly spaced dims].
    #[arg(long, value_delimiter = ',')]
    pub planted: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3)]
    pub density: usize,
    #[arg(long, default_value_t = 10.0)]
    pub scale_lo: f64,
    #[arg(long, default_value_t = 20.0)]
    pub scale_hi: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 8)]
    pub tokens_per_sample: usize,
    #[arg(long, default_value_t = 5.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 200)]
    pub n_cr: usize,
    #[arg(long, default_value_t = 200)]
    pub n_gen: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Protected passages, one per blank-line-separated block [default: built-in samples].
    #[arg(long)]
    pub protected: Option<PathBuf>,
    /// Training text [default: the passages repeated among generated filler].
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub repeats: usize,
    #[arg(long, default_value_t = 200)]
    pub filler_chars: usize,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub n_layers: usize,
    #[arg(long, default_value_t = 4)]
    pub n_heads: usize,
    #[arg(long, default_value_t = 128)]
    pub context_len: usize,
    #[arg(long, default_value_t = 1)]
    pub hook_layer: usize,
    /// Peak learning rate, cosine-decayed to zero.
    #[arg(long = "lr", default_value_t = 3e-3)]
    pub learning_rate: f32,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub lm: PathBuf,
    /// Activation dump to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub protected: Option<PathBuf>,
    /// Characters per sample window.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Windows per label.
    #[arg(long, default_value_t = 200)]
    pub per_label: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainSaeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    #[arg(long, default_value_t = 5.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long = "lr", default_value_t = 3e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long)]
    pub normalize_decoder: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub sae: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Alignment CSV written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Threshold recorded in the spec [default: the SAE's, if --sae is given, else 5].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sae: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMode {
    /// No hook at all.
    None,
    Clamp,
    Amplify,
    Passthrough,
}

#[derive(Debug, Args)]
pub struct ClampDecodeArgs {
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = DecodeMode::Clamp)]
    pub mode: DecodeMode,
    /// Required unless --mode none.
    #[arg(long)]
    pub sae: Option<PathBuf>,
    /// Required unless --mode none.
    #[arg(long)]
    pub subspace: Option<PathBuf>,
    /// Clamp threshold [default: the subspace spec's].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Edit prompt positions as well as generated ones.
    #[arg(long)]
    pub hook_prompt: bool,
    #[arg(long)]
    pub protected: Option<PathBuf>,
    /// Prompt lengths (characters) cut from the start of each passage.
    #[arg(long, value_delimiter = ',', default_value = "60,100,140")]
    pub cuts: Vec<usize>,
    #[arg(long, default_value_t = 60)]
    pub max_tokens: usize,
    /// Method label in the output [default: derived from the mode].
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generation CSVs written by `clamp-decode`.
    #[arg(long, required = true, num_args = 1..)]
    pub generations: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Seed for the MinHash permutations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Metric CSVs written by `evaluate`.
    #[arg(long, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    /// Ground truth from `gen-planted`; needs --sae and --subspace.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub sae: Option<PathBuf>,
    #[arg(long)]
    pub subspace: Option<PathBuf>,
}
