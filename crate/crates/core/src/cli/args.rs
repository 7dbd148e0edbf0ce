use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::eval::FoldMode;
use crate::pipeline::Preset;

#[derive(Debug, Parser)]
#[command(name = "seizure-forge", version, about = "Seizure-type classification from scalp EEG")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic EDF dataset and manifest.
    Synth(SynthArgs),
    /// Draw sampling parameters and build the feature cache.
    Featurize(FeaturizeArgs),
    /// Train the three-member ensemble.
    Train(TrainArgs),
    /// Train the compact student against a trained ensemble.
    Distill(DistillArgs),
    /// Cross-validate, or score a checkpoint.
    Evaluate(EvaluateArgs),
    /// Print the architecture tables.
    Describe(DescribeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FoldArg {
    Seizure,
    Patient,
}

impl From<FoldArg> for FoldMode {
    fn from(f: FoldArg) -> Self {
        match f {
            FoldArg::Seizure => FoldMode::Seizure,
            FoldArg::Patient => FoldMode::Patient,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 6)]
    pub patients: usize,
    /// Seizures per class.
    #[arg(long, default_value_t = 10)]
    pub seizures: usize,
    /// Seizure length in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 20.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 256.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// Force every member's resampling frequency (Hz).
    #[arg(long)]
    pub frequency: Option<u32>,
    /// Force every member's window step (s).
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature cache to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side of the square feature maps.
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    /// Add the phase outside the exponential in the saliency reconstruction.
    #[arg(long)]
    pub literal_s1: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub decay: f64,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub config: Preset,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Train on one fold's training split and score its held-out split.
    #[arg(long, value_enum)]
    pub folds: Option<FoldArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, requires = "folds")]
    pub fold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Each member minimizes its own loss instead of the averaged logits' loss.
    #[arg(long)]
    pub independent: bool,
    /// Continue from the checkpoint and history in `--out`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    /// Ensemble checkpoint written by `train`.
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub temperature: f64,
    #[arg(long)]
    pub literal_kl: bool,
    /// Which member's windows the student sees.
    #[arg(long, default_value_t = 0)]
    pub student_member: usize,
    /// Try every weighting in {0, 0.5, 1}^3 and T in {1, 2, 4}.
    #[arg(long, requires = "fold", conflicts_with = "resume")]
    pub sweep: bool,
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_enum, default_value_t = FoldArg::Seizure)]
    pub folds: FoldArg,
    /// Number of folds; 5 seizure-wise, 3 patient-wise by default.
    #[arg(long)]
    pub k: Option<usize>,
    /// Score this checkpoint instead of cross-validating.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Restrict `--checkpoint` scoring to this fold's held-out split.
    #[arg(long, requires = "checkpoint")]
    pub fold: Option<usize>,
    /// The checkpoint holds a student rather than an ensemble.
    #[arg(long, requires = "checkpoint")]
    pub student: bool,
    #[arg(long, default_value_t = 0)]
    pub student_member: usize,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub config: Preset,
    /// Input side; the preset's default if absent.
    #[arg(long)]
    pub size: Option<usize>,
    /// Also write the summaries and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn default_k(mode: FoldMode) -> usize {
    match mode {
        FoldMode::Seizure => 5,
        FoldMode::Patient => 3,
    }
}
