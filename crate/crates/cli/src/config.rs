//! Config file schema and flag-over-file resolution.

use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use fpgm::{AggregationMode, AlignmentMode};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub resize: Option<usize>,
    pub mask_threshold: Option<f64>,
    pub dilation_radius: Option<usize>,
    pub learn_prior: LearnPriorFile,
    pub augment: AugmentFile,
    pub signature: SignatureFile,
    pub specificity: SpecificityFile,
    pub metrics: MetricsFile,
    pub loss: LossFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnPriorFile {
    pub images: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub momentum: Option<f64>,
    pub mode: Option<AggregationMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFile {
    pub images: Option<PathBuf>,
    pub prior: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub alignment: Option<AlignmentMode>,
    pub clip: Option<bool>,
    pub gamma_jitter: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignatureFile {
    pub images: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub label: Option<String>,
    pub halves: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecificityFile {
    pub images: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n_images: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsFile {
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossFile {
    pub probs: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub weak: Option<PathBuf>,
    pub strong: Option<PathBuf>,
    pub freq: Option<PathBuf>,
    pub tau_c: Option<f64>,
    pub lambda_unsup: Option<f64>,
    pub lambda_freq: Option<f64>,
    pub smooth: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Flag value when given on the command line, else the file value, else
/// the flag's built-in default.
pub fn pick<T>(m: &ArgMatches, id: &str, flag: T, file: Option<T>) -> T {
    if m.value_source(id) == Some(ValueSource::CommandLine) {
        flag
    } else {
        file.unwrap_or(flag)
    }
}

/// Like [`pick`] for settings without a default.
pub fn require(name: &str, flag: Option<PathBuf>, file: Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Config(format!("missing --{}", name.replace('_', "-"))))
}
