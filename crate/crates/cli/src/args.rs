use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fpgm::augment::DEFAULT_GAMMA;
use fpgm::io::DEFAULT_MASK_THRESHOLD;
use fpgm::prior::{DEFAULT_DILATION_RADIUS, DEFAULT_MOMENTUM};
use fpgm::ssl::{DEFAULT_DICE_SMOOTH, DEFAULT_LAMBDA, DEFAULT_TAU_C};
use fpgm::{AggregationMode, AlignmentMode};

/// Frequency-prior guided augmentation for semi-supervised segmentation.
#[derive(Debug, Parser)]
#[command(name = "fpgm", version)]
pub struct Cli {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for per-image work.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Resize inputs to N x N on load (256 when given without a value).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "256")]
    pub resize: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a frequency prior from labeled images.
    LearnPrior(LearnPriorArgs),
    /// Align images toward a learned prior.
    Augment(AugmentArgs),
    /// Mean and spread of edge signatures over a dataset.
    Signature(SignatureArgs),
    /// Edge versus background signatures.
    Specificity(SpecificityArgs),
    /// Dice, Jaccard, HD95 and ASD between prediction and ground-truth masks.
    Metrics(MetricsArgs),
    /// Evaluate the training objective on stored probability maps.
    Loss(LossArgs),
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Masks are binarised with `value >= threshold`.
    #[arg(long, default_value_t = DEFAULT_MASK_THRESHOLD)]
    pub mask_threshold: f64,
}

#[derive(Debug, Args)]
pub struct LearnPriorArgs {
    /// Directory of image PNGs.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Directory of mask PNGs, paired with images by file stem.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output prior JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// EMA momentum.
    #[arg(long, default_value_t = DEFAULT_MOMENTUM)]
    pub momentum: f64,
    /// Aggregation: ema or mean.
    #[arg(long, default_value_t = AggregationMode::Ema)]
    pub mode: AggregationMode,
    /// Edge band dilation radius in pixels.
    #[arg(long, default_value_t = DEFAULT_DILATION_RADIUS)]
    pub dilation_radius: usize,
    #[command(flatten)]
    pub mask: MaskArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of image PNGs.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Prior JSON written by learn-prior.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Guidance strength.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Stabiliser for shape normalisation.
    #[arg(long, default_value = "1e-8")]
    pub epsilon: f64,
    /// Amplitude construction: radial_broadcast or annulus_gain.
    #[arg(long, default_value_t = AlignmentMode::RadialBroadcast)]
    pub alignment: AlignmentMode,
    /// Keep values outside [0, 1] before quantisation.
    #[arg(long)]
    pub no_clip: bool,
    /// Per-image uniform jitter added to gamma.
    #[arg(long, default_value_t = 0.0)]
    pub gamma_jitter: f64,
}

#[derive(Debug, Args)]
pub struct SignatureArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label used for the CSV file name.
    #[arg(long, default_value = "dataset")]
    pub label: String,
    /// Also summarise two disjoint random halves.
    #[arg(long)]
    pub halves: bool,
    #[arg(long, default_value_t = DEFAULT_DILATION_RADIUS)]
    pub dilation_radius: usize,
    #[command(flatten)]
    pub mask: MaskArgs,
}

#[derive(Debug, Args)]
pub struct SpecificityArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Images sampled for the study.
    #[arg(long, default_value_t = fpgm::analysis::DEFAULT_SPECIFICITY_IMAGES)]
    pub n_images: usize,
    #[arg(long, default_value_t = DEFAULT_DILATION_RADIUS)]
    pub dilation_radius: usize,
    #[command(flatten)]
    pub mask: MaskArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of predicted mask PNGs.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth mask PNGs.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskArgs,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Prediction on the labeled image (float grid).
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Ground truth: mask PNG or single-channel float grid.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Prediction on the weakly augmented unlabeled view; source of pseudo-labels.
    #[arg(long)]
    pub weak: Option<PathBuf>,
    /// Prediction on the strongly augmented view.
    #[arg(long)]
    pub strong: Option<PathBuf>,
    /// Prediction on the frequency-aligned view.
    #[arg(long)]
    pub freq: Option<PathBuf>,
    /// Pseudo-label confidence threshold.
    #[arg(long, default_value_t = DEFAULT_TAU_C)]
    pub tau_c: f64,
    /// Weight of the strong-view consistency loss.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda_unsup: f64,
    /// Weight of the frequency-view consistency loss.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda_freq: f64,
    /// Dice smoothing.
    #[arg(long, default_value_t = DEFAULT_DICE_SMOOTH)]
    pub smooth: f64,
    /// Output JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskArgs,
}
