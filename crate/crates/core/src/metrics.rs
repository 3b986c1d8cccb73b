//! Overlap and boundary-distance metrics for binary segmentations.

use serde::Serialize;

use crate::error::{FpgmError, Result};
use crate::raster::BinaryMask;

fn check_dims(pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(FpgmError::invalid(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    Ok(())
}

/// Dice and Jaccard as fractions in `[0, 1]`. Two empty masks score 1.
pub fn dice_jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    check_dims(pred, gt)?;
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.as_slice().iter().zip(gt.as_slice()) {
        inter += (a && b) as usize;
        p += a as usize;
        g += b as usize;
    }
    if p + g == 0 {
        return Ok((1.0, 1.0));
    }
    let union = p + g - inter;
    Ok((
        2.0 * inter as f64 / (p + g) as f64,
        inter as f64 / union as f64,
    ))
}

/// Foreground pixels with at least one 4-neighbour in the background.
/// Pixels outside the frame count as background.
pub fn boundary_points(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (h, w) = mask.dims();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

/// Distance from each point of `from` to the nearest point of `to`.
fn directed_distances(from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    // Exhaustive search; a distance transform would be the faster route.
    from.iter()
        .map(|&(r, c)| {
            to.iter()
                .map(|&(tr, tc)| {
                    let dr = r.abs_diff(tr);
                    let dc = c.abs_diff(tc);
                    dr * dr + dc * dc
                })
                .min()
                .map_or(f64::INFINITY, |d2| (d2 as f64).sqrt())
        })
        .collect()
}

/// Percentile with linear interpolation between closest ranks, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// 95th percentile and mean of the pooled boundary distances in both directions.
pub fn hd95_asd(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    check_dims(pred, gt)?;
    let bp = boundary_points(pred);
    let bg = boundary_points(gt);
    if bp.is_empty() || bg.is_empty() {
        return Err(FpgmError::UndefinedDistance);
    }
    let mut pooled = directed_distances(&bp, &bg);
    pooled.extend(directed_distances(&bg, &bp));
    let asd = pooled.iter().sum::<f64>() / pooled.len() as f64;
    Ok((percentile(&pooled, 95.0), asd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricStatus {
    Ok,
    BothEmpty,
    PredEmpty,
    GtEmpty,
}

impl MetricStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricStatus::Ok => "ok",
            MetricStatus::BothEmpty => "both_empty",
            MetricStatus::PredEmpty => "pred_empty",
            MetricStatus::GtEmpty => "gt_empty",
        }
    }
}

/// Metrics for one pair. Dice and Jaccard are percentages, distances in pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    pub id: String,
    pub dice: f64,
    pub jaccard: f64,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub status: MetricStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAggregate {
    pub dice: f64,
    pub jaccard: f64,
    pub hd95: f64,
    pub asd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegMetricsReport {
    pub per_image: Vec<PairMetrics>,
    /// Means over `ok` rows; `None` when there are none.
    pub aggregate: Option<MetricAggregate>,
}

pub fn evaluate_pair(id: &str, pred: &BinaryMask, gt: &BinaryMask) -> Result<PairMetrics> {
    let (dice, jaccard) = dice_jaccard(pred, gt)?;
    let status = match (pred.is_empty(), gt.is_empty()) {
        (true, true) => MetricStatus::BothEmpty,
        (true, false) => MetricStatus::PredEmpty,
        (false, true) => MetricStatus::GtEmpty,
        (false, false) => MetricStatus::Ok,
    };
    let (hd95, asd) = match status {
        MetricStatus::Ok => {
            let (h, a) = hd95_asd(pred, gt)?;
            (Some(h), Some(a))
        }
        _ => (None, None),
    };
    Ok(PairMetrics {
        id: id.to_string(),
        dice: dice * 100.0,
        jaccard: jaccard * 100.0,
        hd95,
        asd,
        status,
    })
}

impl SegMetricsReport {
    /// Rows are sorted by id before aggregation.
    pub fn from_rows(mut rows: Vec<PairMetrics>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let ok: Vec<&PairMetrics> = rows
            .iter()
            .filter(|r| r.status == MetricStatus::Ok)
            .collect();
        let aggregate = (!ok.is_empty()).then(|| {
            let n = ok.len() as f64;
            MetricAggregate {
                dice: ok.iter().map(|r| r.dice).sum::<f64>() / n,
                jaccard: ok.iter().map(|r| r.jaccard).sum::<f64>() / n,
                hd95: ok.iter().filter_map(|r| r.hd95).sum::<f64>() / n,
                asd: ok.iter().filter_map(|r| r.asd).sum::<f64>() / n,
                count: ok.len(),
            }
        });
        SegMetricsReport {
            per_image: rows,
            aggregate,
        }
    }

    pub fn evaluate<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a BinaryMask, &'a BinaryMask)>,
    ) -> Result<Self> {
        let rows = pairs
            .into_iter()
            .map(|(id, p, g)| evaluate_pair(id, p, g).map_err(|e| e.for_item(id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SegMetricsReport::from_rows(rows))
    }
}
