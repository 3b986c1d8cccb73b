//! Forward computation of the semi-supervised objectives: confidence-filtered
//! pseudo-labels, soft Dice, cross-entropy and their weighted total.
//!
//! Only the loss values are produced; there is no autograd here.

use serde::{Deserialize, Serialize};

use crate::error::{FpgmError, Result};
use crate::raster::BinaryMask;

pub const DEFAULT_TAU_C: f64 = 0.95;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_DICE_SMOOTH: f64 = 1.0;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before `ln`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Per-pixel class probabilities, stored pixel-major (`H x W x classes`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(FpgmError::invalid(format!(
                "probability map needs >= 2 classes, got {classes}"
            )));
        }
        if data.len() != height * width * classes {
            return Err(FpgmError::invalid(format!(
                "probability payload has {} values, expected {}",
                data.len(),
                height * width * classes
            )));
        }
        for (i, px) in data.chunks_exact(classes).enumerate() {
            let sum: f64 = px.iter().sum();
            if px.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
                return Err(FpgmError::invalid(format!(
                    "pixel {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(ProbabilityMap {
            height,
            width,
            classes,
            data,
        })
    }

    /// Two-class map from foreground probabilities.
    pub fn from_foreground(height: usize, width: usize, fg: &[f64]) -> Result<Self> {
        let data = fg.iter().flat_map(|&p| [1.0 - p, p]).collect();
        ProbabilityMap::new(height, width, 2, data)
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

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.classes..(index + 1) * self.classes]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.classes)
    }
}

/// Argmax labels and the confidence mask that gates them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabel {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    valid: Vec<bool>,
}

impl PseudoLabel {
    pub fn new(height: usize, width: usize, labels: Vec<usize>, valid: Vec<bool>) -> Result<Self> {
        if labels.len() != height * width || valid.len() != height * width {
            return Err(FpgmError::invalid("pseudo-label payload size mismatch"));
        }
        Ok(PseudoLabel {
            height,
            width,
            labels,
            valid,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }
}

/// Something a prediction can be scored against.
pub trait SegTarget {
    fn dims(&self) -> (usize, usize);
    fn class_at(&self, index: usize) -> usize;
    fn is_valid(&self, _index: usize) -> bool {
        true
    }
}

impl SegTarget for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        BinaryMask::dims(self)
    }

    fn class_at(&self, index: usize) -> usize {
        self.as_slice()[index] as usize
    }
}

impl SegTarget for PseudoLabel {
    fn dims(&self) -> (usize, usize) {
        PseudoLabel::dims(self)
    }

    fn class_at(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }
}

/// Geometric transform applied to a pseudo-label so it stays registered with
/// an augmented view. Spectral alignment itself maps to [`Identity`](Self::Identity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpatialTransform {
    #[default]
    Identity,
    FlipHorizontal,
    FlipVertical,
    Rotate180,
}

impl SpatialTransform {
    /// Source index that lands at `(row, col)` after the transform.
    fn source(&self, height: usize, width: usize, row: usize, col: usize) -> usize {
        let (r, c) = match self {
            SpatialTransform::Identity => (row, col),
            SpatialTransform::FlipHorizontal => (row, width - 1 - col),
            SpatialTransform::FlipVertical => (height - 1 - row, col),
            SpatialTransform::Rotate180 => (height - 1 - row, width - 1 - col),
        };
        r * width + c
    }

    fn remap<T: Clone>(&self, height: usize, width: usize, data: &[T], stride: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(data.len());
        for row in 0..height {
            for col in 0..width {
                let src = self.source(height, width, row, col) * stride;
                out.extend_from_slice(&data[src..src + stride]);
            }
        }
        out
    }

    pub fn apply_label(&self, label: &PseudoLabel) -> PseudoLabel {
        let (h, w) = label.dims();
        PseudoLabel {
            height: h,
            width: w,
            labels: self.remap(h, w, &label.labels, 1),
            valid: self.remap(h, w, &label.valid, 1),
        }
    }

    pub fn apply_probs(&self, probs: &ProbabilityMap) -> ProbabilityMap {
        let (h, w) = probs.dims();
        ProbabilityMap {
            data: self.remap(h, w, &probs.data, probs.classes),
            ..probs.clone()
        }
    }
}

/// Scalar weights of the combined objective plus the pseudo-label threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_unsup: f64,
    pub lambda_freq: f64,
    pub tau_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_unsup: DEFAULT_LAMBDA,
            lambda_freq: DEFAULT_LAMBDA,
            tau_c: DEFAULT_TAU_C,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_unsup >= 0.0) || !(self.lambda_freq >= 0.0) {
            return Err(FpgmError::invalid("loss weights must be nonnegative"));
        }
        check_tau(self.tau_c)
    }
}

fn check_tau(tau_c: f64) -> Result<()> {
    if !(tau_c > 0.0 && tau_c <= 1.0) {
        return Err(FpgmError::invalid(format!(
            "confidence threshold must lie in (0, 1], got {tau_c}"
        )));
    }
    Ok(())
}

fn check_dims(probs: &ProbabilityMap, target: &impl SegTarget) -> Result<()> {
    if probs.dims() != target.dims() {
        return Err(FpgmError::invalid(format!(
            "prediction is {:?} but target is {:?}",
            probs.dims(),
            target.dims()
        )));
    }
    Ok(())
}

/// Argmax labels; pixels whose top probability is below `tau_c` are invalid.
/// Ties go to the lowest class index.
pub fn pseudo_label(probs: &ProbabilityMap, tau_c: f64) -> Result<PseudoLabel> {
    check_tau(tau_c)?;
    let mut labels = Vec::with_capacity(probs.height * probs.width);
    let mut valid = Vec::with_capacity(labels.capacity());
    for px in probs.pixels() {
        let (best, conf) = px
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
                if p > bp {
                    (i, p)
                } else {
                    (bi, bp)
                }
            });
        labels.push(best);
        valid.push(conf >= tau_c);
    }
    PseudoLabel::new(probs.height, probs.width, labels, valid)
}

/// Soft Dice loss over the foreground classes `1..classes`, averaged.
///
/// For two classes this is `1 - (2 * sum(p * t) + s) / (sum(p) + sum(t) + s)`
/// with `p` the class-1 probability and `t` the class-1 indicator, summed over
/// valid pixels only.
pub fn soft_dice_loss(probs: &ProbabilityMap, target: &impl SegTarget, smooth: f64) -> Result<f64> {
    check_dims(probs, target)?;
    if !(smooth >= 0.0) {
        return Err(FpgmError::invalid("Dice smoothing must be nonnegative"));
    }
    let n = probs.height * probs.width;
    let fg_classes = probs.classes - 1;
    let mut inter = vec![0.0; fg_classes];
    let mut p_sum = vec![0.0; fg_classes];
    let mut t_sum = vec![0.0; fg_classes];
    let mut any_valid = false;
    for i in 0..n {
        if !target.is_valid(i) {
            continue;
        }
        any_valid = true;
        let px = probs.pixel(i);
        let label = target.class_at(i);
        for k in 0..fg_classes {
            let p = px[k + 1];
            let t = if label == k + 1 { 1.0 } else { 0.0 };
            inter[k] += p * t;
            p_sum[k] += p;
            t_sum[k] += t;
        }
    }
    if !any_valid {
        return Err(FpgmError::EmptyTarget);
    }
    let total: f64 = (0..fg_classes)
        .map(|k| {
            let denom = p_sum[k] + t_sum[k] + smooth;
            if denom == 0.0 {
                // Empty prediction and empty target with no smoothing: perfect agreement.
                0.0
            } else {
                1.0 - (2.0 * inter[k] + smooth) / denom
            }
        })
        .sum();
    Ok(total / fg_classes as f64)
}

/// Mean of `-ln p_target` over valid pixels, probabilities clamped first.
pub fn cross_entropy_loss(probs: &ProbabilityMap, target: &impl SegTarget) -> Result<f64> {
    check_dims(probs, target)?;
    let n = probs.height * probs.width;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        if !target.is_valid(i) {
            continue;
        }
        let label = target.class_at(i);
        if label >= probs.classes {
            return Err(FpgmError::invalid(format!(
                "target class {label} out of range for {} classes",
                probs.classes
            )));
        }
        let p = probs.pixel(i)[label].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        sum -= p.ln();
        count += 1;
    }
    if count == 0 {
        return Err(FpgmError::EmptyTarget);
    }
    Ok(sum / count as f64)
}

/// `(cross_entropy + dice) / 2`.
pub fn supervised_loss(probs: &ProbabilityMap, target: &impl SegTarget, smooth: f64) -> Result<f64> {
    let ce = cross_entropy_loss(probs, target)?;
    let dice = soft_dice_loss(probs, target, smooth)?;
    Ok(0.5 * (ce + dice))
}

/// `sup + lambda_unsup * unsup + lambda_freq * freq`.
pub fn total_loss(sup: f64, unsup: f64, freq: f64, w: &LossWeights) -> f64 {
    sup + w.lambda_unsup * unsup + w.lambda_freq * freq
}
