//! Spectral shape alignment.
//!
//! Each channel's radial amplitude profile is split into total energy and a
//! normalized shape. The shape is interpolated toward the prior's shape,
//! rescaled by the original energy and written back into the amplitude
//! spectrum. The phase is left untouched, so spatial structure survives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FpgmError, Result};
use crate::prior::FrequencyPrior;
use crate::raster::{Grid, RasterImage};
use crate::spectral::{
    annulus_indices, broadcast_profile, forward_spectrum, inverse_spectrum_with_residue,
    radial_profile, CenteredSpectrum, ChannelSpectrum, RadialProfile,
};

pub const DEFAULT_GAMMA: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// How a perturbed radial profile is turned back into a 2D amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Replace the amplitude with the profile evaluated at each bin's radius.
    /// Angular amplitude structure is discarded.
    #[default]
    RadialBroadcast,
    /// Rescale every bin by its annulus gain `P_pert(r) / (P_u(r) + eps)`,
    /// keeping angular amplitude structure.
    AnnulusGain,
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignmentMode::RadialBroadcast => "radial_broadcast",
            AlignmentMode::AnnulusGain => "annulus_gain",
        })
    }
}

impl FromStr for AlignmentMode {
    type Err = FpgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "radial_broadcast" => Ok(AlignmentMode::RadialBroadcast),
            "annulus_gain" => Ok(AlignmentMode::AnnulusGain),
            other => Err(FpgmError::invalid(format!(
                "unknown alignment mode {other:?}, expected radial_broadcast or annulus_gain"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    /// Guidance strength in `[0, 1]`.
    pub gamma: f64,
    pub epsilon: f64,
    pub mode: AlignmentMode,
    pub clip_output: bool,
    /// Half-width of the optional uniform jitter applied to `gamma` in batches.
    #[serde(default)]
    pub gamma_jitter: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            mode: AlignmentMode::RadialBroadcast,
            clip_output: true,
            gamma_jitter: 0.0,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(FpgmError::invalid(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(FpgmError::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma_jitter >= 0.0) || !self.gamma_jitter.is_finite() {
            return Err(FpgmError::invalid("gamma_jitter must be nonnegative"));
        }
        Ok(())
    }
}

/// L1 energy of a profile and the profile divided by `energy + epsilon`.
pub fn shape_energy(profile: &RadialProfile, epsilon: f64) -> (f64, RadialProfile) {
    let energy: f64 = profile.values().iter().sum();
    let denom = energy + epsilon;
    let shape = profile.values().iter().map(|v| v / denom).collect();
    (energy, RadialProfile::from_trusted(shape))
}

/// `(1 - gamma) * shape_u + gamma * shape_prior`, elementwise.
pub fn align_shape(
    shape_u: &RadialProfile,
    shape_prior: &RadialProfile,
    gamma: f64,
) -> Result<RadialProfile> {
    if shape_u.len() != shape_prior.len() {
        return Err(FpgmError::invalid(format!(
            "shape lengths differ: {} vs {}",
            shape_u.len(),
            shape_prior.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(FpgmError::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(RadialProfile::from_trusted(
        shape_u
            .values()
            .iter()
            .zip(shape_prior.values())
            .map(|(&u, &p)| (1.0 - gamma) * u + gamma * p)
            .collect(),
    ))
}

/// Stretch the prior's profile over `target_length` radii.
///
/// Target radius `j` reads the source at `j * (n_src - 1) / (n_tgt - 1)`
/// with linear interpolation. Matching lengths return the profile unchanged.
pub fn resample_prior(prior: &FrequencyPrior, target_length: usize) -> Result<RadialProfile> {
    resample_profile(prior.profile(), target_length)
}

pub fn resample_profile(profile: &RadialProfile, target_length: usize) -> Result<RadialProfile> {
    if target_length < 2 {
        return Err(FpgmError::invalid(format!(
            "target length must be >= 2, got {target_length}"
        )));
    }
    let src = profile.values();
    if src.len() < 2 {
        return Err(FpgmError::invalid("prior profile must have length >= 2"));
    }
    if src.len() == target_length {
        return Ok(profile.clone());
    }
    let scale = (src.len() - 1) as f64 / (target_length - 1) as f64;
    let last = src.len() - 1;
    let values = (0..target_length)
        .map(|j| {
            let x = j as f64 * scale;
            let lo = (x.floor() as usize).min(last);
            if lo == last {
                return src[last];
            }
            let t = x - lo as f64;
            src[lo] * (1.0 - t) + src[lo + 1] * t
        })
        .collect();
    Ok(RadialProfile::from_trusted(values))
}

/// Per-channel quantities of one alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAlignment {
    /// Radial profile of the input amplitude.
    pub profile: RadialProfile,
    /// L1 energy of [`Self::profile`].
    pub energy: f64,
    /// Perturbed profile, whose entries sum to `energy` up to `epsilon` terms.
    pub perturbed: RadialProfile,
}

/// Input spectrum, perturbed spectrum (same phase grids) and per-channel details.
#[derive(Debug, Clone)]
pub struct PerturbedSpectrum {
    pub source: CenteredSpectrum,
    pub perturbed: CenteredSpectrum,
    pub channels: Vec<ChannelAlignment>,
}

/// Output image plus diagnostics.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: RasterImage,
    pub channels: Vec<ChannelAlignment>,
    /// Largest imaginary part discarded by the inverse transform, per channel.
    pub max_imag: Vec<f64>,
}

impl Augmented {
    pub fn energies(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.energy).collect()
    }
}

/// Build the aligned spectrum of `img` without inverting it.
pub fn perturb_spectrum(
    img: &RasterImage,
    prior: &FrequencyPrior,
    cfg: &AlignmentConfig,
) -> Result<PerturbedSpectrum> {
    cfg.validate()?;
    if !prior.is_usable() {
        return Err(FpgmError::UnusablePrior);
    }
    let source = forward_spectrum(img)?;
    let (h, w) = img.dims();
    let dc = source.dc();
    let mut prior_shape: Option<RadialProfile> = None;
    let mut annuli: Option<Vec<usize>> = None;
    let mut out_channels = Vec::with_capacity(source.channels().len());
    let mut details = Vec::with_capacity(source.channels().len());

    for ch in source.channels() {
        let profile = radial_profile(&ch.amplitude, dc)?;
        let (energy, shape_u) = shape_energy(&profile, cfg.epsilon);
        let prior_shape = match &prior_shape {
            Some(s) => s,
            None => {
                let resampled = resample_prior(prior, profile.len())?;
                prior_shape.insert(shape_energy(&resampled, cfg.epsilon).1)
            }
        };
        let shape = align_shape(&shape_u, prior_shape, cfg.gamma)?;
        let perturbed = shape.scaled(energy);

        let amplitude = match cfg.mode {
            AlignmentMode::RadialBroadcast => broadcast_profile(&perturbed, h, w)?,
            AlignmentMode::AnnulusGain => {
                let annuli = annuli.get_or_insert_with(|| annulus_indices(h, w));
                let gains: Vec<f64> = perturbed
                    .values()
                    .iter()
                    .zip(profile.values())
                    .map(|(&p, &u)| p / (u + cfg.epsilon))
                    .collect();
                let data = ch
                    .amplitude
                    .as_slice()
                    .iter()
                    .zip(annuli.iter())
                    .map(|(&a, &r)| a * gains[r])
                    .collect();
                Grid::new(h, w, data)?
            }
        };
        out_channels.push(ChannelSpectrum {
            amplitude,
            phase: ch.phase.clone(),
        });
        details.push(ChannelAlignment {
            profile,
            energy,
            perturbed,
        });
    }

    Ok(PerturbedSpectrum {
        perturbed: CenteredSpectrum::new(h, w, out_channels)?,
        source,
        channels: details,
    })
}

/// Align one image toward the prior and return it with diagnostics.
pub fn fpgm_augment_detailed(
    img: &RasterImage,
    prior: &FrequencyPrior,
    cfg: &AlignmentConfig,
) -> Result<Augmented> {
    let spectra = perturb_spectrum(img, prior, cfg)?;
    let recon = inverse_spectrum_with_residue(&spectra.perturbed)?;
    let image = if cfg.clip_output {
        recon.image.clipped()
    } else {
        recon.image
    };
    Ok(Augmented {
        image,
        channels: spectra.channels,
        max_imag: recon.max_imag,
    })
}

pub fn fpgm_augment(
    img: &RasterImage,
    prior: &FrequencyPrior,
    cfg: &AlignmentConfig,
) -> Result<RasterImage> {
    fpgm_augment_detailed(img, prior, cfg).map(|a| a.image)
}

/// Guidance strength for item `index` of a batch.
///
/// Without jitter this is `cfg.gamma`. With jitter, a uniform offset in
/// `[-jitter, jitter]` drawn from a per-item stream seeded by `(seed, index)`
/// is added and the result clamped to `[0, 1]`.
pub fn batch_gamma(cfg: &AlignmentConfig, seed: u64, index: usize) -> f64 {
    if cfg.gamma_jitter == 0.0 {
        return cfg.gamma;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let offset = rng.random_range(-cfg.gamma_jitter..=cfg.gamma_jitter);
    (cfg.gamma + offset).clamp(0.0, 1.0)
}

/// Augment `(id, image)` pairs in order. The first failure is returned
/// tagged with its id.
pub fn augment_batch(
    images: &[(String, RasterImage)],
    prior: &FrequencyPrior,
    cfg: &AlignmentConfig,
    seed: u64,
) -> Result<Vec<RasterImage>> {
    cfg.validate()?;
    images
        .iter()
        .enumerate()
        .map(|(i, (id, img))| {
            let item_cfg = AlignmentConfig {
                gamma: batch_gamma(cfg, seed, i),
                ..*cfg
            };
            fpgm_augment(img, prior, &item_cfg).map_err(|e| e.for_item(id))
        })
        .collect()
}
