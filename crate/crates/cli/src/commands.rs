use std::fs;
use std::path::{Path, PathBuf};

use clap::ArgMatches;
use fpgm::analysis::{dataset_signature, specificity_study, subset_consistency};
use fpgm::augment::{batch_gamma, fpgm_augment_detailed};
use fpgm::io::{
    self, load_image, load_mask, read_float_grid, write_atomic, DatasetManifest, ManifestEntry,
};
use fpgm::metrics::{evaluate_pair, SegMetricsReport};
use fpgm::prior::{learn_prior, LabeledSample};
use fpgm::ssl::{
    cross_entropy_loss, pseudo_label, soft_dice_loss, total_loss, LossWeights, ProbabilityMap,
};
use fpgm::{AlignmentConfig, BinaryMask, FpgmError, RasterImage};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::config::{self, pick, require, FileConfig};
use crate::{CliError, Outcome};

/// Settings shared by every command, after resolution.
#[derive(Debug, Clone, Serialize)]
struct Globals {
    seed: u64,
    jobs: usize,
    resize: Option<usize>,
}

pub fn run(cli: Cli, matches: &ArgMatches) -> Result<Outcome, CliError> {
    let file = match &cli.config {
        Some(path) => config::load(path)?,
        None => FileConfig::default(),
    };
    let globals = Globals {
        seed: pick(matches, "seed", cli.seed, file.seed),
        jobs: pick(matches, "jobs", cli.jobs, file.jobs),
        resize: cli.resize.or(file.resize),
    };
    if globals.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    log::debug!("running {name}");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(globals.jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::LearnPrior(a) => learn_prior_cmd(a, sub, &file, &globals),
        Command::Augment(a) => augment_cmd(a, sub, &file, &globals),
        Command::Signature(a) => signature_cmd(a, sub, &file, &globals),
        Command::Specificity(a) => specificity_cmd(a, sub, &file, &globals),
        Command::Metrics(a) => metrics_cmd(a, sub, &file, &globals),
        Command::Loss(a) => loss_cmd(a, sub, &file),
    })
}

fn mask_threshold(m: &ArgMatches, a: &MaskArgs, file: &FileConfig) -> Result<f64, CliError> {
    let t = pick(m, "mask_threshold", a.mask_threshold, file.mask_threshold);
    if !(0.0..=1.0).contains(&t) {
        return Err(CliError::Config(format!("mask threshold must lie in [0, 1], got {t}")));
    }
    Ok(t)
}

fn resize_dims(g: &Globals) -> Option<(usize, usize)> {
    g.resize.map(|n| (n, n))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Run(FpgmError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

/// Load paired samples in parallel. Items that fail to load are logged and
/// returned separately; order follows the manifest.
fn load_samples(
    manifest: &DatasetManifest,
    threshold: f64,
    g: &Globals,
) -> (Vec<LabeledSample>, Vec<String>) {
    let loaded: Vec<(String, fpgm::Result<LabeledSample>)> = manifest
        .entries
        .par_iter()
        .map(|e| (e.id.clone(), load_sample(e, threshold, g)))
        .collect();
    let mut samples = Vec::with_capacity(loaded.len());
    let mut failed = Vec::new();
    for (id, res) in loaded {
        match res {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::error!("{e}");
                failed.push(id);
            }
        }
    }
    (samples, failed)
}

fn load_sample(e: &ManifestEntry, threshold: f64, g: &Globals) -> fpgm::Result<LabeledSample> {
    let size = resize_dims(g);
    let mask_path = e.mask_path.as_ref().expect("paired manifest");
    let image = load_image(&e.image_path, size).map_err(|err| err.for_item(&e.id))?;
    let mask = load_mask(mask_path, threshold, size).map_err(|err| err.for_item(&e.id))?;
    if image.dims() != mask.dims() {
        return Err(FpgmError::InvalidInput(format!(
            "image is {:?} but mask is {:?}",
            image.dims(),
            mask.dims()
        ))
        .for_item(&e.id));
    }
    Ok(LabeledSample {
        id: e.id.clone(),
        image,
        mask,
    })
}

fn outcome(failed: &[String]) -> Outcome {
    if failed.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Partial
    }
}

fn learn_prior_cmd(
    a: LearnPriorArgs,
    m: &ArgMatches,
    file: &FileConfig,
    g: &Globals,
) -> Result<Outcome, CliError> {
    let f = &file.learn_prior;
    let images = require("images", a.images, f.images.clone())?;
    let masks = require("masks", a.masks, f.masks.clone())?;
    let out = require("out", a.out, f.out.clone())?;
    let momentum = pick(m, "momentum", a.momentum, f.momentum);
    let mode = pick(m, "mode", a.mode, f.mode);
    let radius = pick(m, "dilation_radius", a.dilation_radius, file.dilation_radius);
    let threshold = mask_threshold(m, &a.mask, file)?;

    let manifest = DatasetManifest::paired(&images, &masks)?;
    if manifest.is_empty() {
        return Err(CliError::Run(FpgmError::NoUsableSamples));
    }
    let (samples, failed) = load_samples(&manifest, threshold, g);
    let prior = learn_prior(&samples, momentum, radius, mode)?;
    let used = prior.samples_seen();
    let provenance = json!({
        "tool": concat!("fpgm ", env!("CARGO_PKG_VERSION")),
        "command": "learn-prior",
        "images": images,
        "masks": masks,
        "momentum": momentum,
        "mode": mode,
        "dilation_radius": radius,
        "mask_threshold": threshold,
        "globals": g,
        "pairs": manifest.len(),
        "samples_used": used,
        "failed": failed,
    });
    io::save_prior(&prior, &out, Some(provenance))?;
    println!(
        "prior written to {}: {used} samples used, {} skipped, {} failed",
        out.display(),
        samples.len() - used as usize,
        failed.len()
    );
    Ok(outcome(&failed))
}

#[derive(Serialize)]
struct AugmentRecord<'a> {
    id: &'a str,
    status: &'a str,
    mode: fpgm::AlignmentMode,
    gamma: f64,
    epsilon: f64,
    energies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn augment_cmd(
    a: AugmentArgs,
    m: &ArgMatches,
    file: &FileConfig,
    g: &Globals,
) -> Result<Outcome, CliError> {
    let f = &file.augment;
    let images = require("images", a.images, f.images.clone())?;
    let prior_path = require("prior", a.prior, f.prior.clone())?;
    let out = require("out", a.out, f.out.clone())?;
    let cfg = AlignmentConfig {
        gamma: pick(m, "gamma", a.gamma, f.gamma),
        epsilon: pick(m, "epsilon", a.epsilon, f.epsilon),
        mode: pick(m, "alignment", a.alignment, f.alignment),
        clip_output: if a.no_clip { false } else { f.clip.unwrap_or(true) },
        gamma_jitter: pick(m, "gamma_jitter", a.gamma_jitter, f.gamma_jitter),
    };
    cfg.validate()?;
    let prior = io::load_prior(&prior_path)?;
    let manifest = DatasetManifest::from_dir(&images)?;
    create_dir(&out)?;

    let size = resize_dims(g);
    let results: Vec<(String, f64, fpgm::Result<(RasterImage, Vec<f64>)>)> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let gamma = batch_gamma(&cfg, g.seed, i);
            let item_cfg = AlignmentConfig { gamma, ..cfg };
            let res = load_image(&e.image_path, size)
                .and_then(|img| fpgm_augment_detailed(&img, &prior, &item_cfg))
                .and_then(|aug| {
                    io::save_image(&aug.image, &out.join(format!("{}.png", e.id)))?;
                    Ok((aug.image.clone(), aug.energies()))
                })
                .map_err(|err| err.for_item(&e.id));
            (e.id.clone(), gamma, res)
        })
        .collect();

    let mut sidecar = String::new();
    let mut failed = Vec::new();
    for (id, gamma, res) in &results {
        let record = match res {
            Ok((_, energies)) => AugmentRecord {
                id,
                status: "ok",
                mode: cfg.mode,
                gamma: *gamma,
                epsilon: cfg.epsilon,
                energies: energies.clone(),
                error: None,
            },
            Err(e) => {
                log::error!("{e}");
                failed.push(id.clone());
                AugmentRecord {
                    id,
                    status: "error",
                    mode: cfg.mode,
                    gamma: *gamma,
                    epsilon: cfg.epsilon,
                    energies: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        };
        sidecar.push_str(&serde_json::to_string(&record).expect("plain data serializes"));
        sidecar.push('\n');
    }
    write_atomic(&out.join("augment.jsonl"), sidecar.as_bytes())?;
    write_json(
        &out.join("run.json"),
        &json!({
            "tool": concat!("fpgm ", env!("CARGO_PKG_VERSION")),
            "command": "augment",
            "images": images,
            "prior": prior_path,
            "alignment": cfg,
            "globals": g,
            "processed": results.len() - failed.len(),
            "failed": failed,
        }),
    )?;
    println!(
        "{} images written to {}, {} failed",
        results.len() - failed.len(),
        out.display(),
        failed.len()
    );
    Ok(outcome(&failed))
}

fn signature_cmd(
    a: SignatureArgs,
    m: &ArgMatches,
    file: &FileConfig,
    g: &Globals,
) -> Result<Outcome, CliError> {
    let f = &file.signature;
    let images = require("images", a.images, f.images.clone())?;
    let masks = require("masks", a.masks, f.masks.clone())?;
    let out = require("out", a.out, f.out.clone())?;
    let label = pick(m, "label", a.label, f.label.clone());
    let halves = a.halves || f.halves.unwrap_or(false);
    let radius = pick(m, "dilation_radius", a.dilation_radius, file.dilation_radius);
    let threshold = mask_threshold(m, &a.mask, file)?;
    if label.is_empty() || label.contains(['/', '\\']) {
        return Err(CliError::Config(format!("label {label:?} is not a usable file name")));
    }

    let manifest = DatasetManifest::paired(&images, &masks)?;
    let (samples, failed) = load_samples(&manifest, threshold, g);
    let summary = dataset_signature(&samples, &label, radius)?;
    create_dir(&out)?;
    io::write_summary_csv(&summary, &out.join(format!("{label}.csv")))?;
    let mut report = json!({
        "tool": concat!("fpgm ", env!("CARGO_PKG_VERSION")),
        "command": "signature",
        "images": images,
        "masks": masks,
        "label": label,
        "dilation_radius": radius,
        "mask_threshold": threshold,
        "globals": g,
        "samples_used": summary.n,
        "failed": failed,
    });
    if halves {
        let (sa, sb) = subset_consistency(&samples, g.seed, radius)?;
        io::write_summary_csv(&sa, &out.join("subset_a.csv"))?;
        io::write_summary_csv(&sb, &out.join("subset_b.csv"))?;
        report["halves"] = json!({
            "n": sa.n,
            "max_relative_gap": sa.max_relative_gap(&sb),
        });
    }
    write_json(&out.join("signature.run.json"), &report)?;
    println!("signature of {} samples written to {}", summary.n, out.display());
    Ok(outcome(&failed))
}

fn specificity_cmd(
    a: SpecificityArgs,
    m: &ArgMatches,
    file: &FileConfig,
    g: &Globals,
) -> Result<Outcome, CliError> {
    let f = &file.specificity;
    let images = require("images", a.images, f.images.clone())?;
    let masks = require("masks", a.masks, f.masks.clone())?;
    let out = require("out", a.out, f.out.clone())?;
    let n_images = pick(m, "n_images", a.n_images, f.n_images);
    let radius = pick(m, "dilation_radius", a.dilation_radius, file.dilation_radius);
    let threshold = mask_threshold(m, &a.mask, file)?;

    let manifest = DatasetManifest::paired(&images, &masks)?;
    let (samples, failed) = load_samples(&manifest, threshold, g);
    if n_images > samples.len() {
        return Err(CliError::Config(format!(
            "--n-images {n_images} exceeds the {} loadable pairs",
            samples.len()
        )));
    }
    let result = specificity_study(&samples, n_images, g.seed, radius)?;
    create_dir(&out)?;
    io::write_summary_csv(&result.edge, &out.join("edge.csv"))?;
    io::write_summary_csv(&result.background, &out.join("background.csv"))?;
    write_json(
        &out.join("specificity.run.json"),
        &json!({
            "tool": concat!("fpgm ", env!("CARGO_PKG_VERSION")),
            "command": "specificity",
            "images": images,
            "masks": masks,
            "n_images": n_images,
            "dilation_radius": radius,
            "mask_threshold": threshold,
            "globals": g,
            "used": result.used,
            "skipped": result.skipped,
            "failed": failed,
        }),
    )?;
    println!(
        "specificity over {} images ({} skipped) written to {}",
        result.used.len(),
        result.skipped.len(),
        out.display()
    );
    Ok(outcome(&failed))
}

fn metrics_cmd(
    a: MetricsArgs,
    m: &ArgMatches,
    file: &FileConfig,
    g: &Globals,
) -> Result<Outcome, CliError> {
    let f = &file.metrics;
    let pred = require("pred", a.pred, f.pred.clone())?;
    let gt = require("gt", a.gt, f.gt.clone())?;
    let out = require("out", a.out, f.out.clone())?;
    let threshold = mask_threshold(m, &a.mask, file)?;
    let size = resize_dims(g);

    let manifest = DatasetManifest::paired(&pred, &gt)?;
    let rows: Vec<(String, fpgm::Result<fpgm::metrics::PairMetrics>)> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let res = load_mask(&e.image_path, threshold, size)
                .and_then(|p| {
                    let t = load_mask(e.mask_path.as_ref().expect("paired"), threshold, size)?;
                    evaluate_pair(&e.id, &p, &t)
                })
                .map_err(|err| err.for_item(&e.id));
            (e.id.clone(), res)
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, res) in rows {
        match res {
            Ok(r) => ok.push(r),
            Err(e) => {
                log::error!("{e}");
                failed.push(id);
            }
        }
    }
    let report = SegMetricsReport::from_rows(ok);
    io::write_atomic(&out, &io::metrics_csv(&report))?;
    write_json(
        &sidecar_path(&out),
        &json!({
            "tool": concat!("fpgm ", env!("CARGO_PKG_VERSION")),
            "command": "metrics",
            "pred": pred,
            "gt": gt,
            "mask_threshold": threshold,
            "globals": g,
            "aggregate": report.aggregate,
            "failed": failed,
        }),
    )?;
    println!("{} rows written to {}", report.per_image.len(), out.display());
    Ok(outcome(&failed))
}

/// `dir/name.csv` -> `dir/name.run.json`.
fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "metrics".into());
    out.with_file_name(format!("{stem}.run.json"))
}

fn read_probs(path: &Path) -> Result<ProbabilityMap, CliError> {
    Ok(read_float_grid(path)?.to_probability_map().map_err(|e| e.for_item(path.display().to_string()))?)
}

fn read_target(path: &Path, threshold: f64) -> Result<BinaryMask, CliError> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        Ok(load_mask(path, threshold, None)?)
    } else {
        Ok(read_float_grid(path)?.to_mask(threshold)?)
    }
}

/// Supervised objective against pseudo-labels; no confident pixel means no
/// contribution.
fn consistency(
    probs: &ProbabilityMap,
    target: &fpgm::ssl::PseudoLabel,
    smooth: f64,
) -> Result<f64, CliError> {
    match (cross_entropy_loss(probs, target), soft_dice_loss(probs, target, smooth)) {
        (Ok(ce), Ok(dice)) => Ok(0.5 * (ce + dice)),
        (Err(FpgmError::EmptyTarget), _) | (_, Err(FpgmError::EmptyTarget)) => Ok(0.0),
        (Err(e), _) | (_, Err(e)) => Err(e.into()),
    }
}

fn loss_cmd(a: LossArgs, m: &ArgMatches, file: &FileConfig) -> Result<Outcome, CliError> {
    let f = &file.loss;
    let probs_path = require("probs", a.probs, f.probs.clone())?;
    let target_path = require("target", a.target, f.target.clone())?;
    let weak = a.weak.or(f.weak.clone());
    let strong = a.strong.or(f.strong.clone());
    let freq = a.freq.or(f.freq.clone());
    let out = a.out.or(f.out.clone());
    let weights = LossWeights {
        lambda_unsup: pick(m, "lambda_unsup", a.lambda_unsup, f.lambda_unsup),
        lambda_freq: pick(m, "lambda_freq", a.lambda_freq, f.lambda_freq),
        tau_c: pick(m, "tau_c", a.tau_c, f.tau_c),
    };
    weights.validate()?;
    let smooth = pick(m, "smooth", a.smooth, f.smooth);
    let threshold = mask_threshold(m, &a.mask, file)?;
    if weak.is_none() && (strong.is_some() || freq.is_some()) {
        return Err(CliError::Config("--strong and --freq need --weak for pseudo-labels".into()));
    }

    let probs = read_probs(&probs_path)?;
    let target = read_target(&target_path, threshold)?;
    let ce = cross_entropy_loss(&probs, &target)?;
    let dice = soft_dice_loss(&probs, &target, smooth)?;
    let sup = 0.5 * (ce + dice);

    let (mut unsup, mut freq_loss, mut valid_fraction) = (0.0, 0.0, None);
    if let Some(weak) = &weak {
        let labels = pseudo_label(&read_probs(weak)?, weights.tau_c)?;
        valid_fraction = Some(labels.valid_fraction());
        if let Some(p) = &strong {
            unsup = consistency(&read_probs(p)?, &labels, smooth)?;
        }
        if let Some(p) = &freq {
            freq_loss = consistency(&read_probs(p)?, &labels, smooth)?;
        }
    }
    let report = json!({
        "tool": concat!("fpgm ", env!("CARGO_PKG_VERSION")),
        "command": "loss",
        "inputs": {
            "probs": probs_path,
            "target": target_path,
            "weak": weak,
            "strong": strong,
            "freq": freq,
        },
        "weights": weights,
        "smooth": smooth,
        "mask_threshold": threshold,
        "cross_entropy": ce,
        "dice": dice,
        "supervised": sup,
        "unsupervised": unsup,
        "frequency": freq_loss,
        "pseudo_label_valid_fraction": valid_fraction,
        "total": total_loss(sup, unsup, freq_loss, &weights),
    });
    match out {
        Some(path) => write_json(&path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("plain data serializes")),
    }
    Ok(Outcome::Complete)
}
