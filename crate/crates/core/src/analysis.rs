//! Frequency-signature studies over labeled datasets: split-half
//! consistency, per-dataset mean/std bands and edge-vs-background
//! specificity.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FpgmError, Result};
use crate::prior::{
    collect_signatures, dilate, edge_mask, fold_signatures, region_signature, AggregationMode,
    LabeledSample,
};
use crate::raster::BinaryMask;
use crate::spectral::RadialProfile;

pub const DEFAULT_SPECIFICITY_IMAGES: usize = 500;

/// Mean and population standard deviation of a set of radial profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSummary {
    pub label: String,
    pub mean: RadialProfile,
    pub std: RadialProfile,
    pub n: usize,
}

impl SignatureSummary {
    /// The mean is accumulated with the same running-mean fold as a
    /// mean-mode prior, so the two agree bit for bit.
    pub fn from_profiles(label: impl Into<String>, profiles: &[RadialProfile]) -> Result<Self> {
        let first = profiles.first().ok_or(FpgmError::NoUsableSamples)?;
        let len = first.len();
        if profiles.iter().any(|p| p.len() != len) {
            return Err(FpgmError::invalid("profiles differ in length"));
        }
        let mut mean = vec![0.0; len];
        for (k, p) in profiles.iter().enumerate() {
            let n = (k + 1) as f64;
            for (m, &v) in mean.iter_mut().zip(p.values()) {
                *m = if k == 0 { v } else { *m + (v - *m) / n };
            }
        }
        let n = profiles.len() as f64;
        let std = (0..len)
            .map(|r| {
                let var = profiles
                    .iter()
                    .map(|p| (p.values()[r] - mean[r]).powi(2))
                    .sum::<f64>()
                    / n;
                var.sqrt()
            })
            .collect();
        Ok(SignatureSummary {
            label: label.into(),
            mean: RadialProfile::new(mean)?,
            std: RadialProfile::new(std)?,
            n: profiles.len(),
        })
    }

    /// Largest `|a - b| / max(|a|, |b|)` between two means, over radii where
    /// either is nonzero.
    pub fn max_relative_gap(&self, other: &SignatureSummary) -> f64 {
        self.mean
            .values()
            .iter()
            .zip(other.mean.values())
            .filter(|(a, b)| a.abs().max(b.abs()) > 0.0)
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
            .fold(0.0, f64::max)
    }
}

/// Edge signatures of every usable sample, summarised.
pub fn dataset_signature(
    samples: &[LabeledSample],
    label: &str,
    dilation_radius: usize,
) -> Result<SignatureSummary> {
    let (used, _) = collect_signatures(samples, dilation_radius)?;
    let profiles: Vec<RadialProfile> = used.into_iter().map(|(_, p)| p).collect();
    SignatureSummary::from_profiles(label, &profiles)
}

/// Same mean as [`dataset_signature`], obtained through the prior fold.
pub fn mean_prior_profile(
    samples: &[LabeledSample],
    dilation_radius: usize,
) -> Result<RadialProfile> {
    let (used, _) = collect_signatures(samples, dilation_radius)?;
    let first = samples
        .iter()
        .find(|s| used.first().is_some_and(|(id, _)| *id == s.id))
        .ok_or(FpgmError::NoUsableSamples)?;
    let prior = fold_signatures(
        used.iter().map(|(_, p)| p),
        first.image.dims(),
        0.0,
        AggregationMode::Mean,
    )?;
    Ok(prior.profile().clone())
}

/// Shuffle the usable signatures with `seed`, then summarise the first
/// `n / 2` and the next `n / 2` separately.
pub fn subset_consistency(
    samples: &[LabeledSample],
    seed: u64,
    dilation_radius: usize,
) -> Result<(SignatureSummary, SignatureSummary)> {
    let (used, _) = collect_signatures(samples, dilation_radius)?;
    if used.len() < 2 {
        return Err(FpgmError::NoUsableSamples);
    }
    let mut profiles: Vec<RadialProfile> = used.into_iter().map(|(_, p)| p).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    profiles.shuffle(&mut rng);
    let half = profiles.len() / 2;
    Ok((
        SignatureSummary::from_profiles("subset_a", &profiles[..half])?,
        SignatureSummary::from_profiles("subset_b", &profiles[half..2 * half])?,
    ))
}

/// Outcome of [`specificity_study`].
#[derive(Debug, Clone)]
pub struct SpecificityResult {
    pub edge: SignatureSummary,
    pub background: SignatureSummary,
    pub used: Vec<String>,
    pub skipped: Vec<String>,
}

/// Background sampling mask for one image: `count` pixels drawn uniformly
/// without replacement from outside the mask dilated past its edge band.
pub fn sample_background(
    mask: &BinaryMask,
    dilation_radius: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Option<BinaryMask> {
    let excluded = dilate(mask, dilation_radius + 1);
    let candidates: Vec<usize> = excluded
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &m)| !m)
        .map(|(i, _)| i)
        .collect();
    if candidates.len() < count {
        return None;
    }
    let (h, w) = mask.dims();
    let mut data = vec![false; h * w];
    for i in index::sample(rng, candidates.len(), count) {
        data[candidates[i]] = true;
    }
    Some(BinaryMask::new(h, w, data).expect("dims match"))
}

/// Compare edge-band signatures against signatures of equally many
/// background pixels on `n_images` images drawn with `seed`.
///
/// Images without an edge band, or with fewer background pixels than edge
/// pixels, are skipped.
pub fn specificity_study(
    samples: &[LabeledSample],
    n_images: usize,
    seed: u64,
    dilation_radius: usize,
) -> Result<SpecificityResult> {
    if n_images > samples.len() {
        return Err(FpgmError::invalid(format!(
            "requested {n_images} images but the dataset has {}",
            samples.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, samples.len(), n_images).into_vec();
    chosen.sort_unstable();

    let mut edges = Vec::new();
    let mut backgrounds = Vec::new();
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for idx in chosen {
        let s = &samples[idx];
        if s.image.dims() != s.mask.dims() {
            return Err(FpgmError::invalid("image and mask sizes differ").for_item(&s.id));
        }
        let band = edge_mask(&s.mask, dilation_radius);
        let k = band.count();
        if k == 0 {
            log::info!("{}: no edge pixels, skipped", s.id);
            skipped.push(s.id.clone());
            continue;
        }
        let mut img_rng = ChaCha8Rng::seed_from_u64(seed);
        img_rng.set_stream(idx as u64 + 1);
        let Some(background) = sample_background(&s.mask, dilation_radius, k, &mut img_rng) else {
            log::info!("{}: fewer than {k} background pixels, skipped", s.id);
            skipped.push(s.id.clone());
            continue;
        };
        edges.push(region_signature(&s.image, &band).map_err(|e| e.for_item(&s.id))?);
        backgrounds.push(region_signature(&s.image, &background).map_err(|e| e.for_item(&s.id))?);
        used.push(s.id.clone());
    }
    Ok(SpecificityResult {
        edge: SignatureSummary::from_profiles("edge", &edges)?,
        background: SignatureSummary::from_profiles("background", &backgrounds)?,
        used,
        skipped,
    })
}
