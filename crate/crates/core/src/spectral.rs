//! Centered 2D spectra, radial profiles and radial broadcast.
//!
//! Conventions used throughout the crate:
//!
//! * the forward transform is unnormalized, the inverse carries `1 / (H * W)`;
//! * spectra are stored with the zero-frequency bin at `(H / 2, W / 2)`
//!   (integer division), i.e. after a quadrant swap;
//! * a bin at offset `(du, dv)` from the center belongs to the annulus
//!   `floor(sqrt(du^2 + dv^2) + 0.5)`, clamped to the corner radius
//!   `floor(sqrt(dc_row^2 + dc_col^2))`.

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{FpgmError, Result};
use crate::raster::{Grid, RasterImage};

/// Amplitude and phase of one channel, both centered.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    pub amplitude: Grid,
    pub phase: Grid,
}

impl ChannelSpectrum {
    /// Polar pair from a centered complex grid.
    pub fn from_complex(height: usize, width: usize, bins: &[Complex64]) -> Self {
        let amplitude = bins.iter().map(|c| c.norm()).collect();
        let phase = bins.iter().map(|c| wrap_phase(c.arg())).collect();
        ChannelSpectrum {
            amplitude: Grid::new(height, width, amplitude).expect("dims match"),
            phase: Grid::new(height, width, phase).expect("dims match"),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.amplitude
            .as_slice()
            .iter()
            .zip(self.phase.as_slice())
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect()
    }
}

/// Per-channel centered spectrum of a [`RasterImage`].
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSpectrum {
    height: usize,
    width: usize,
    channels: Vec<ChannelSpectrum>,
}

impl CenteredSpectrum {
    pub fn new(height: usize, width: usize, channels: Vec<ChannelSpectrum>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(FpgmError::invalid(format!(
                "spectrum must be at least 2x2, got {height}x{width}"
            )));
        }
        if channels.len() != 1 && channels.len() != 3 {
            return Err(FpgmError::invalid(format!(
                "spectrum must have 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        for ch in &channels {
            if ch.amplitude.dims() != (height, width) || ch.phase.dims() != (height, width) {
                return Err(FpgmError::invalid("amplitude/phase grid size mismatch"));
            }
            if ch.amplitude.as_slice().iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
                return Err(FpgmError::invalid("amplitude must be finite and nonnegative"));
            }
        }
        Ok(CenteredSpectrum {
            height,
            width,
            channels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dc(&self) -> (usize, usize) {
        dc_of(self.height, self.width)
    }

    pub fn channels(&self) -> &[ChannelSpectrum] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &ChannelSpectrum {
        &self.channels[index]
    }
}

/// A radial curve indexed by integer radius, `values[r] >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FpgmError::invalid(
                "radial profile values must be finite and nonnegative",
            ));
        }
        Ok(RadialProfile { values })
    }

    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        RadialProfile { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest radius represented, `len - 1`.
    pub fn r_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> RadialProfile {
        RadialProfile::from_trusted(self.values.iter().map(|v| v * factor).collect())
    }
}

/// Zero-frequency position in a centered `height x width` grid.
pub fn dc_of(height: usize, width: usize) -> (usize, usize) {
    (height / 2, width / 2)
}

/// `floor(sqrt(dc_row^2 + dc_col^2))`, the distance from DC to the far corner.
pub fn corner_radius(height: usize, width: usize) -> usize {
    let (r, c) = dc_of(height, width);
    (r * r + c * c).isqrt()
}

/// Annulus index of every bin of a centered grid, row-major.
pub fn annulus_indices(height: usize, width: usize) -> Vec<usize> {
    let (dr, dc) = dc_of(height, width);
    let r_max = corner_radius(height, width);
    let mut out = Vec::with_capacity(height * width);
    for u in 0..height {
        for v in 0..width {
            let du = u as f64 - dr as f64;
            let dv = v as f64 - dc as f64;
            let r = ((du * du + dv * dv).sqrt() + 0.5).floor() as usize;
            out.push(r.min(r_max));
        }
    }
    out
}

fn wrap_phase(p: f64) -> f64 {
    if p <= -std::f64::consts::PI {
        p + 2.0 * std::f64::consts::PI
    } else {
        p
    }
}

fn fft_2d(height: usize, width: usize, buf: &mut [Complex64], direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(width, direction);
    let col_fft = planner.plan_fft(height, direction);
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::default(); height];
    for col in 0..width {
        for (row, slot) in column.iter_mut().enumerate() {
            *slot = buf[row * width + col];
        }
        col_fft.process(&mut column);
        for (row, value) in column.iter().enumerate() {
            buf[row * width + col] = *value;
        }
    }
}

/// Move the zero-frequency bin from `(0, 0)` to the grid center.
pub fn fftshift<T: Copy>(height: usize, width: usize, data: &[T]) -> Vec<T> {
    let (dr, dc) = dc_of(height, width);
    let mut out = Vec::with_capacity(data.len());
    for u in 0..height {
        let src_row = (u + height - dr) % height;
        for v in 0..width {
            let src_col = (v + width - dc) % width;
            out.push(data[src_row * width + src_col]);
        }
    }
    out
}

/// Inverse of [`fftshift`]; differs from it when a dimension is odd.
pub fn ifftshift<T: Copy>(height: usize, width: usize, data: &[T]) -> Vec<T> {
    let (dr, dc) = dc_of(height, width);
    let mut out = Vec::with_capacity(data.len());
    for u in 0..height {
        let src_row = (u + dr) % height;
        for v in 0..width {
            let src_col = (v + dc) % width;
            out.push(data[src_row * width + src_col]);
        }
    }
    out
}

/// Centered complex spectrum of one real grid.
pub fn centered_fft(grid: &Grid) -> Vec<Complex64> {
    let (h, w) = grid.dims();
    let mut buf: Vec<Complex64> = grid
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_2d(h, w, &mut buf, FftDirection::Forward);
    fftshift(h, w, &buf)
}

/// Inverse of [`centered_fft`], returning the complex spatial grid.
pub fn centered_ifft(height: usize, width: usize, centered: &[Complex64]) -> Vec<Complex64> {
    let mut buf = ifftshift(height, width, centered);
    fft_2d(height, width, &mut buf, FftDirection::Inverse);
    let norm = 1.0 / (height * width) as f64;
    for c in &mut buf {
        *c *= norm;
    }
    buf
}

/// Amplitude/phase decomposition of every channel of `img`.
pub fn forward_spectrum(img: &RasterImage) -> Result<CenteredSpectrum> {
    if img.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(FpgmError::invalid("image contains non-finite values"));
    }
    let (h, w) = img.dims();
    let channels = img
        .planes()
        .iter()
        .map(|plane| ChannelSpectrum::from_complex(h, w, &centered_fft(plane)))
        .collect();
    CenteredSpectrum::new(h, w, channels)
}

/// Inverse transform result with the per-channel largest discarded imaginary part.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: RasterImage,
    pub max_imag: Vec<f64>,
}

/// Recombine amplitude and phase, invert, keep the real part. No clipping.
pub fn inverse_spectrum(spec: &CenteredSpectrum) -> Result<RasterImage> {
    inverse_spectrum_with_residue(spec).map(|r| r.image)
}

pub fn inverse_spectrum_with_residue(spec: &CenteredSpectrum) -> Result<Reconstruction> {
    let (h, w) = (spec.height(), spec.width());
    let mut planes = Vec::with_capacity(spec.channels().len());
    let mut max_imag = Vec::with_capacity(spec.channels().len());
    for ch in spec.channels() {
        let spatial = centered_ifft(h, w, &ch.to_complex());
        max_imag.push(spatial.iter().map(|c| c.im.abs()).fold(0.0, f64::max));
        planes.push(Grid::new(h, w, spatial.iter().map(|c| c.re).collect())?);
    }
    Ok(Reconstruction {
        image: RasterImage::from_planes(&planes)?,
        max_imag,
    })
}

/// Mean amplitude per integer-radius annulus around `dc`.
///
/// Annuli that receive no bins (only possible near the corner radius on
/// non-square grids) are reported as 0.
pub fn radial_profile(amplitude: &Grid, dc: (usize, usize)) -> Result<RadialProfile> {
    let (h, w) = amplitude.dims();
    if amplitude.as_slice().iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
        return Err(FpgmError::invalid("amplitude must be finite and nonnegative"));
    }
    if dc != dc_of(h, w) {
        return Err(FpgmError::invalid(format!(
            "center {dc:?} does not match the {h}x{w} grid center {:?}",
            dc_of(h, w)
        )));
    }
    let r_max = corner_radius(h, w);
    let mut sums = vec![0.0; r_max + 1];
    let mut counts = vec![0usize; r_max + 1];
    for (&r, &a) in annulus_indices(h, w).iter().zip(amplitude.as_slice()) {
        sums[r] += a;
        counts[r] += 1;
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    Ok(RadialProfile::from_trusted(values))
}

/// Number of bins in each annulus of a centered `height x width` grid.
pub fn annulus_counts(height: usize, width: usize) -> Vec<usize> {
    let mut counts = vec![0usize; corner_radius(height, width) + 1];
    for r in annulus_indices(height, width) {
        counts[r] += 1;
    }
    counts
}

/// Evaluate a profile at the continuous radius of every bin.
///
/// Linear interpolation between `floor(d)` and `ceil(d)`; radii past the
/// last entry take the last value.
pub fn broadcast_profile(profile: &RadialProfile, height: usize, width: usize) -> Result<Grid> {
    let values = profile.values();
    if values.len() < 2 {
        return Err(FpgmError::invalid("broadcast needs a profile of length >= 2"));
    }
    let last = values.len() - 1;
    let (dr, dc) = dc_of(height, width);
    Ok(Grid::from_fn(height, width, |u, v| {
        let du = u as f64 - dr as f64;
        let dv = v as f64 - dc as f64;
        let d = (du * du + dv * dv).sqrt();
        if d >= last as f64 {
            return values[last];
        }
        let lo = d.floor() as usize;
        let t = d - lo as f64;
        if t == 0.0 {
            values[lo]
        } else {
            values[lo] * (1.0 - t) + values[lo + 1] * t
        }
    }))
}
