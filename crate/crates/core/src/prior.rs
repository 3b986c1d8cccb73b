//! Edge-region frequency signatures and the aggregated frequency prior.
//!
//! A signature is the radial amplitude profile of a grayscale image masked to
//! the band around an object's boundary. Signatures from a labeled dataset
//! are folded into a [`FrequencyPrior`] either with an exponential moving
//! average or a plain running mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FpgmError, Result};
use crate::raster::{BinaryMask, RasterImage};
use crate::spectral::{centered_fft, corner_radius, dc_of, radial_profile, RadialProfile};

pub const DEFAULT_MOMENTUM: f64 = 0.999;
pub const DEFAULT_DILATION_RADIUS: usize = 2;
pub const DEFAULT_LOWPASS_CUTOFF: usize = 16;

/// Version written to and accepted from prior files.
pub const PRIOR_FORMAT_VERSION: u32 = 1;
pub const SPECTRUM_CONVENTION: &str = "forward-unnormalized, dc-centered";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Ema,
    Mean,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Ema => "ema",
            AggregationMode::Mean => "mean",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = FpgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ema" => Ok(AggregationMode::Ema),
            "mean" => Ok(AggregationMode::Mean),
            other => Err(FpgmError::invalid(format!(
                "unknown aggregation mode {other:?}, expected ema or mean"
            ))),
        }
    }
}

/// An image and its foreground mask.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub id: String,
    pub image: RasterImage,
    pub mask: BinaryMask,
}

/// Aggregated radial profile of edge regions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPrior {
    profile: RadialProfile,
    momentum: f64,
    samples_seen: u64,
    source_dims: (usize, usize),
    mode: AggregationMode,
}

impl FrequencyPrior {
    /// An empty accumulator for signatures of `height x width` images.
    pub fn empty(height: usize, width: usize, momentum: f64, mode: AggregationMode) -> Result<Self> {
        check_momentum(momentum)?;
        Ok(FrequencyPrior {
            profile: RadialProfile::from_trusted(vec![0.0; corner_radius(height, width) + 1]),
            momentum,
            samples_seen: 0,
            source_dims: (height, width),
            mode,
        })
    }

    /// A ready-to-use prior wrapping a fixed profile, e.g. an ablation prior.
    pub fn fixed(profile: RadialProfile, height: usize, width: usize) -> Result<Self> {
        if profile.len() != corner_radius(height, width) + 1 {
            return Err(FpgmError::invalid(format!(
                "profile of length {} does not fit a {height}x{width} grid (expected {})",
                profile.len(),
                corner_radius(height, width) + 1
            )));
        }
        Ok(FrequencyPrior {
            profile,
            momentum: 0.0,
            samples_seen: 1,
            source_dims: (height, width),
            mode: AggregationMode::Mean,
        })
    }

    /// Rebuild a prior from stored fields, checking every invariant.
    pub fn from_parts(
        profile: RadialProfile,
        momentum: f64,
        samples_seen: u64,
        source_dims: (usize, usize),
        mode: AggregationMode,
    ) -> Result<Self> {
        check_momentum(momentum)?;
        let expected = corner_radius(source_dims.0, source_dims.1) + 1;
        if profile.len() != expected {
            return Err(FpgmError::invalid(format!(
                "profile length {} inconsistent with source dims {}x{} (expected {expected})",
                profile.len(),
                source_dims.0,
                source_dims.1
            )));
        }
        Ok(FrequencyPrior {
            profile,
            momentum,
            samples_seen,
            source_dims,
            mode,
        })
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn mode(&self) -> AggregationMode {
        self.mode
    }

    pub fn is_usable(&self) -> bool {
        self.samples_seen >= 1
    }

    /// Fold one signature into the prior.
    ///
    /// EMA starts from the first sample rather than from zeros. Each EMA
    /// entry is clamped to the envelope of the old value and the sample so
    /// rounding can never leave it.
    pub fn update(&mut self, sample: &RadialProfile) -> Result<()> {
        if sample.len() != self.profile.len() {
            return Err(FpgmError::invalid(format!(
                "signature length {} does not match prior length {}",
                sample.len(),
                self.profile.len()
            )));
        }
        let values = if self.samples_seen == 0 {
            sample.values().to_vec()
        } else {
            match self.mode {
                AggregationMode::Ema => {
                    let mu = self.momentum;
                    self.profile
                        .values()
                        .iter()
                        .zip(sample.values())
                        .map(|(&p, &s)| ((1.0 - mu) * s + mu * p).clamp(p.min(s), p.max(s)))
                        .collect()
                }
                AggregationMode::Mean => {
                    let n = (self.samples_seen + 1) as f64;
                    self.profile
                        .values()
                        .iter()
                        .zip(sample.values())
                        .map(|(&p, &s)| p + (s - p) / n)
                        .collect()
                }
            }
        };
        self.profile = RadialProfile::from_trusted(values);
        self.samples_seen += 1;
        Ok(())
    }
}

fn check_momentum(momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(FpgmError::invalid(format!(
            "momentum must lie in [0, 1], got {momentum}"
        )));
    }
    Ok(())
}

/// Functional form of [`FrequencyPrior::update`].
pub fn update_prior(prior: &FrequencyPrior, sample: &RadialProfile) -> Result<FrequencyPrior> {
    let mut next = prior.clone();
    next.update(sample)?;
    Ok(next)
}

fn clamped(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Pixels where the Sobel gradient magnitude of `mask` is nonzero.
///
/// Borders replicate the outermost row/column.
pub fn sobel_support(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.dims();
    let at = |r: isize, c: isize| mask.get(clamped(r, h), clamped(c, w)) as i32;
    // Separable: [1 2 1] smoothing across, [-1 0 1] difference along.
    let mut dx = vec![0i32; h * w];
    let mut dy = vec![0i32; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            dx[i] = at(r, c + 1) - at(r, c - 1);
            dy[i] = at(r + 1, c) - at(r - 1, c);
        }
    }
    BinaryMask::from_fn(h, w, |r, c| {
        let (up, down) = (clamped(r as isize - 1, h), clamped(r as isize + 1, h));
        let (left, right) = (clamped(c as isize - 1, w), clamped(c as isize + 1, w));
        let gx = dx[up * w + c] + 2 * dx[r * w + c] + dx[down * w + c];
        let gy = dy[r * w + left] + 2 * dy[r * w + c] + dy[r * w + right];
        gx != 0 || gy != 0
    })
}

/// Binary dilation with a `(2 * radius + 1)` square structuring element.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let rows = BinaryMask::from_fn(h, w, |r, c| {
        let lo = c.saturating_sub(radius);
        let hi = (c + radius).min(w - 1);
        (lo..=hi).any(|cc| mask.get(r, cc))
    });
    BinaryMask::from_fn(h, w, |r, c| {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(h - 1);
        (lo..=hi).any(|rr| rows.get(rr, c))
    })
}

/// Band around the foreground boundary: Sobel support, then dilation.
///
/// Masks without a boundary (all background or all foreground) give an
/// empty band.
pub fn edge_mask(mask: &BinaryMask, dilation_radius: usize) -> BinaryMask {
    dilate(&sobel_support(mask), dilation_radius)
}

/// Radial amplitude profile of the grayscale image restricted to an arbitrary region.
pub fn region_signature(img: &RasterImage, region: &BinaryMask) -> Result<RadialProfile> {
    if img.dims() != region.dims() {
        return Err(FpgmError::invalid(format!(
            "image is {}x{} but mask is {}x{}",
            img.height(),
            img.width(),
            region.height(),
            region.width()
        )));
    }
    if region.is_empty() {
        return Err(FpgmError::EmptyEdgeRegion);
    }
    let masked = region.apply(&img.to_gray())?;
    let (h, w) = masked.dims();
    let amplitude = crate::raster::Grid::new(
        h,
        w,
        centered_fft(&masked).iter().map(|c| c.norm()).collect(),
    )?;
    radial_profile(&amplitude, dc_of(h, w))
}

/// Radial amplitude profile of the image's edge band.
pub fn edge_signature(
    img: &RasterImage,
    mask: &BinaryMask,
    dilation_radius: usize,
) -> Result<RadialProfile> {
    if img.dims() != mask.dims() {
        return Err(FpgmError::invalid(format!(
            "image is {}x{} but mask is {}x{}",
            img.height(),
            img.width(),
            mask.height(),
            mask.width()
        )));
    }
    region_signature(img, &edge_mask(mask, dilation_radius))
}

/// Fold precomputed signatures, in order, into a fresh prior.
pub fn fold_signatures<'a>(
    signatures: impl IntoIterator<Item = &'a RadialProfile>,
    dims: (usize, usize),
    momentum: f64,
    mode: AggregationMode,
) -> Result<FrequencyPrior> {
    let mut prior = FrequencyPrior::empty(dims.0, dims.1, momentum, mode)?;
    for sig in signatures {
        prior.update(sig)?;
    }
    if !prior.is_usable() {
        return Err(FpgmError::NoUsableSamples);
    }
    Ok(prior)
}

/// Compute every sample's signature, skipping samples without an edge band.
///
/// Returns `(id, signature)` for the usable samples and the ids that were
/// skipped, both in input order.
pub fn collect_signatures(
    samples: &[LabeledSample],
    dilation_radius: usize,
) -> Result<(Vec<(String, RadialProfile)>, Vec<String>)> {
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for s in samples {
        match edge_signature(&s.image, &s.mask, dilation_radius) {
            Ok(sig) => used.push((s.id.clone(), sig)),
            Err(FpgmError::EmptyEdgeRegion) => skipped.push(s.id.clone()),
            Err(e) => return Err(e.for_item(&s.id)),
        }
    }
    if !skipped.is_empty() {
        log::info!("skipped {} samples with an empty edge region", skipped.len());
    }
    Ok((used, skipped))
}

/// Learn a prior from labeled samples in the given order.
///
/// EMA results depend on that order; mean results do not.
pub fn learn_prior(
    samples: &[LabeledSample],
    momentum: f64,
    dilation_radius: usize,
    mode: AggregationMode,
) -> Result<FrequencyPrior> {
    check_momentum(momentum)?;
    let (used, _) = collect_signatures(samples, dilation_radius)?;
    let first = used.first().ok_or(FpgmError::NoUsableSamples)?;
    let dims = samples
        .iter()
        .find(|s| s.id == first.0)
        .map(|s| s.image.dims())
        .expect("signature came from a sample");
    fold_signatures(used.iter().map(|(_, sig)| sig), dims, momentum, mode)
}

/// Pink-noise style profile `1 / (r + 1)`.
pub fn generic_prior(length: usize) -> RadialProfile {
    RadialProfile::from_trusted((0..length).map(|r| 1.0 / (r as f64 + 1.0)).collect())
}

/// Ideal low-pass profile: ones up to and including `cutoff`, zeros after.
pub fn lowpass_prior(length: usize, cutoff: usize) -> Result<RadialProfile> {
    if cutoff >= length {
        return Err(FpgmError::invalid(format!(
            "cutoff {cutoff} must be below the profile length {length}"
        )));
    }
    Ok(RadialProfile::from_trusted(
        (0..length).map(|r| if r <= cutoff { 1.0 } else { 0.0 }).collect(),
    ))
}

/// On-disk JSON form of a [`FrequencyPrior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDocument {
    pub format_version: u32,
    pub aggregation_mode: AggregationMode,
    pub momentum: f64,
    pub samples_seen: u64,
    pub source_height: usize,
    pub source_width: usize,
    pub r_max: usize,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_convention: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl PriorDocument {
    pub fn from_prior(prior: &FrequencyPrior, provenance: Option<serde_json::Value>) -> Self {
        PriorDocument {
            format_version: PRIOR_FORMAT_VERSION,
            aggregation_mode: prior.mode,
            momentum: prior.momentum,
            samples_seen: prior.samples_seen,
            source_height: prior.source_dims.0,
            source_width: prior.source_dims.1,
            r_max: prior.profile.r_max(),
            values: prior.profile.values().to_vec(),
            spectrum_convention: Some(SPECTRUM_CONVENTION.to_string()),
            provenance,
        }
    }

    pub fn into_prior(self) -> Result<FrequencyPrior> {
        if self.format_version != PRIOR_FORMAT_VERSION {
            return Err(FpgmError::UnsupportedVersion(self.format_version));
        }
        if self.values.len() != self.r_max + 1 {
            return Err(FpgmError::invalid(format!(
                "r_max {} disagrees with {} stored values",
                self.r_max,
                self.values.len()
            )));
        }
        FrequencyPrior::from_parts(
            RadialProfile::new(self.values)?,
            self.momentum,
            self.samples_seen,
            (self.source_height, self.source_width),
            self.aggregation_mode,
        )
    }
}
