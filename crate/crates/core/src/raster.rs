//! Spatial-domain containers: real grids, multi-channel images and binary masks.
//!
//! Everything is stored row-major. Multi-channel images interleave their
//! channels per pixel (`HWC`), the same layout PNG decoders hand back.

use crate::error::{FpgmError, Result};

/// Luma weights used whenever a 3-channel image is reduced to one channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A single-channel `height x width` grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(FpgmError::invalid(format!(
                "grid payload has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Grid::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Grid {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// An `H x W x C` image with `C` in {1, 3}, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(FpgmError::invalid(format!(
                "image must be at least 2x2, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(FpgmError::invalid(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(FpgmError::invalid(format!(
                "image payload has {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FpgmError::invalid("image contains non-finite values"));
        }
        Ok(RasterImage {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_gray(grid: Grid) -> Result<Self> {
        let (h, w) = grid.dims();
        RasterImage::new(h, w, 1, grid.into_vec())
    }

    /// Interleave per-channel planes into one image.
    pub fn from_planes(planes: &[Grid]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| FpgmError::invalid("no channel planes given"))?;
        let (h, w) = first.dims();
        if planes.iter().any(|p| p.dims() != (h, w)) {
            return Err(FpgmError::invalid("channel planes differ in size"));
        }
        let channels = planes.len();
        let mut data = Vec::with_capacity(h * w * channels);
        for i in 0..h * w {
            for plane in planes {
                data.push(plane.as_slice()[i]);
            }
        }
        RasterImage::new(h, w, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn plane(&self, channel: usize) -> Grid {
        let data = self
            .data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect();
        Grid {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn planes(&self) -> Vec<Grid> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Single-channel luma view; a 1-channel image is returned as is.
    pub fn to_gray(&self) -> Grid {
        if self.channels == 1 {
            return self.plane(0);
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
            .collect();
        Grid {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn scaled(&self, factor: f64) -> RasterImage {
        RasterImage {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn clipped(&self) -> RasterImage {
        RasterImage {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &RasterImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A `{0, 1}` mask, foreground = 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(FpgmError::invalid(format!(
                "mask payload has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(BinaryMask {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        BinaryMask {
            height,
            width,
            data,
        }
    }

    /// Binarize a grid: values `>= threshold` become foreground.
    pub fn threshold(grid: &Grid, threshold: f64) -> Self {
        BinaryMask {
            height: grid.height(),
            width: grid.width(),
            data: grid.as_slice().iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            data: self.data.iter().map(|v| !v).collect(),
            ..self.clone()
        }
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Hadamard product of a grid with this mask.
    pub fn apply(&self, grid: &Grid) -> Result<Grid> {
        if grid.dims() != self.dims() {
            return Err(FpgmError::invalid(format!(
                "mask is {}x{} but grid is {}x{}",
                self.height,
                self.width,
                grid.height(),
                grid.width()
            )));
        }
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: grid
                .as_slice()
                .iter()
                .zip(&self.data)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect(),
        })
    }
}
