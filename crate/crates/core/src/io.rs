//! File formats: PNG images and masks, prior JSON, the `FPGMGRID` float
//! grid, CSV reports and dataset manifests.
//!
//! Every writer goes through a temporary file in the destination directory
//! followed by a rename, so readers never observe a half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::imageops::FilterType;
use image::{DynamicImage, ExtendedColorType, ImageBuffer, ImageEncoder, Luma};

use crate::analysis::SignatureSummary;
use crate::error::{FpgmError, Result};
use crate::metrics::SegMetricsReport;
use crate::prior::{FrequencyPrior, PriorDocument, PRIOR_FORMAT_VERSION};
use crate::raster::{BinaryMask, Grid, RasterImage};
use crate::ssl::ProbabilityMap;

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;
/// Side length used when resizing is requested without an explicit size.
pub const DEFAULT_RESIZE: usize = 256;
pub const FLOAT_GRID_MAGIC: &[u8; 8] = b"FPGMGRID";

/// Write `bytes` to `path` through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FpgmError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| FpgmError::io(path, e))?;
    tmp.flush().map_err(|e| FpgmError::io(path, e))?;
    tmp.persist(path).map_err(|e| FpgmError::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FpgmError::io(path, e))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = read_bytes(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| FpgmError::UnsupportedFormat(format!("{}: {e}", path.display())))
}

fn resize_planes(planes: Vec<Grid>, size: (usize, usize)) -> Vec<Grid> {
    let (th, tw) = size;
    planes
        .into_iter()
        .map(|p| {
            if p.dims() == size {
                return p;
            }
            let buf: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_raw(
                p.width() as u32,
                p.height() as u32,
                p.as_slice().iter().map(|&v| v as f32).collect(),
            )
            .expect("buffer sized from grid");
            let out = image::imageops::resize(&buf, tw as u32, th as u32, FilterType::Triangle);
            Grid::new(th, tw, out.into_raw().into_iter().map(f64::from).collect())
                .expect("resize output sized by request")
        })
        .collect()
}

/// Load an 8- or 16-bit grayscale or RGB PNG with intensities scaled to
/// `[0, 1]`, optionally resized (bilinear) to `(height, width)`.
pub fn load_image(path: &Path, resize: Option<(usize, usize)>) -> Result<RasterImage> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (
            1,
            b.into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb16(b) => (
            3,
            b.into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        ),
        other => {
            return Err(FpgmError::UnsupportedFormat(format!(
                "{}: color type {:?} (need 1 or 3 channels, 8 or 16 bit)",
                path.display(),
                other.color()
            )))
        }
    };
    let img = RasterImage::new(h, w, channels, data).map_err(|e| e.for_item(path.display().to_string()))?;
    match resize {
        Some(size) if size != img.dims() => RasterImage::from_planes(&resize_planes(img.planes(), size)),
        _ => Ok(img),
    }
}

/// Load a mask PNG: luma conversion for RGB, then `value >= threshold`.
pub fn load_mask(path: &Path, threshold: f64, resize: Option<(usize, usize)>) -> Result<BinaryMask> {
    let img = load_image(path, None)?;
    let gray = match resize {
        Some(size) if size != img.dims() => resize_planes(vec![img.to_gray()], size).remove(0),
        _ => img.to_gray(),
    };
    Ok(BinaryMask::threshold(&gray, threshold))
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encode as an 8-bit PNG (values clamped to `[0, 1]`).
pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.as_slice().iter().map(|&v| quantize8(v)).collect();
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let mut out = Cursor::new(Vec::new());
    PngEncoder::new(&mut out)
        .write_image(&bytes, img.width() as u32, img.height() as u32, color)
        .map_err(|e| FpgmError::UnsupportedFormat(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn save_image(img: &RasterImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let mut out = Cursor::new(Vec::new());
    PngEncoder::new(&mut out)
        .write_image(
            &bytes,
            mask.width() as u32,
            mask.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| FpgmError::UnsupportedFormat(e.to_string()))?;
    write_atomic(path, &out.into_inner())
}

/// Serialize a prior with optional provenance metadata.
pub fn prior_to_json(prior: &FrequencyPrior, provenance: Option<serde_json::Value>) -> String {
    let doc = PriorDocument::from_prior(prior, provenance);
    let mut s = serde_json::to_string_pretty(&doc).expect("prior document serializes");
    s.push('\n');
    s
}

pub fn save_prior(
    prior: &FrequencyPrior,
    path: &Path,
    provenance: Option<serde_json::Value>,
) -> Result<()> {
    write_atomic(path, prior_to_json(prior, provenance).as_bytes())
}

pub fn prior_from_json(text: &str, path: &Path) -> Result<FrequencyPrior> {
    let json_err = |source| FpgmError::Json {
        path: path.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| FpgmError::invalid(format!("{}: missing format_version", path.display())))?;
    if version != PRIOR_FORMAT_VERSION as u64 {
        return Err(FpgmError::UnsupportedVersion(
            u32::try_from(version).unwrap_or(u32::MAX),
        ));
    }
    let doc: PriorDocument = serde_json::from_value(value).map_err(json_err)?;
    doc.into_prior()
}

pub fn load_prior(path: &Path) -> Result<FrequencyPrior> {
    let text = fs::read_to_string(path).map_err(|e| FpgmError::io(path, e))?;
    prior_from_json(&text, path)
}

/// Row-major `H x W x C` float32 grid.
///
/// On disk: the magic `FPGMGRID`, then `H`, `W`, `C` as little-endian `u32`,
/// then `H * W * C` little-endian `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatGrid {
    pub const HEADER_LEN: usize = 8 + 3 * 4;

    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(FpgmError::invalid(format!(
                "float grid payload has {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        Ok(FloatGrid {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(FLOAT_GRID_MAGIC);
        for dim in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < Self::HEADER_LEN || &bytes[..8] != FLOAT_GRID_MAGIC {
            return Err(FpgmError::UnsupportedFormat("missing FPGMGRID header".into()));
        }
        let dim = |i: usize| {
            let start = 8 + 4 * i;
            u32::from_le_bytes(bytes[start..start + 4].try_into().expect("4 bytes")) as usize
        };
        let (height, width, channels) = (dim(0), dim(1), dim(2));
        let payload = &bytes[Self::HEADER_LEN..];
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .and_then(|v| v.checked_mul(4));
        if expected != Some(payload.len()) {
            return Err(FpgmError::UnsupportedFormat(format!(
                "float grid {height}x{width}x{channels} but payload is {} bytes",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(FloatGrid {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_probability_map(probs: &ProbabilityMap) -> Self {
        FloatGrid {
            height: probs.height(),
            width: probs.width(),
            channels: probs.classes(),
            data: probs.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Interpret as class probabilities (one channel per class).
    pub fn to_probability_map(&self) -> Result<ProbabilityMap> {
        ProbabilityMap::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        FloatGrid {
            height: mask.height(),
            width: mask.width(),
            channels: 1,
            data: mask.as_slice().iter().map(|&m| m as u8 as f32).collect(),
        }
    }

    /// Single-channel grid thresholded into a mask.
    pub fn to_mask(&self, threshold: f64) -> Result<BinaryMask> {
        if self.channels != 1 {
            return Err(FpgmError::invalid(format!(
                "mask grid must have one channel, got {}",
                self.channels
            )));
        }
        BinaryMask::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| v as f64 >= threshold).collect(),
        )
    }
}

pub fn read_float_grid(path: &Path) -> Result<FloatGrid> {
    FloatGrid::from_bytes(&read_bytes(path)?).map_err(|e| match e {
        FpgmError::UnsupportedFormat(msg) => {
            FpgmError::UnsupportedFormat(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

pub fn write_float_grid(grid: &FloatGrid, path: &Path) -> Result<()> {
    write_atomic(path, &grid.to_bytes())
}

fn csv_bytes(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w).expect("writing CSV to memory");
    w.into_inner().expect("in-memory writer")
}

/// `radius,mean,std` rows for a summary.
pub fn summary_csv(summary: &SignatureSummary) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["radius", "mean", "std"])?;
        for (r, (m, s)) in summary
            .mean
            .values()
            .iter()
            .zip(summary.std.values())
            .enumerate()
        {
            w.write_record([r.to_string(), m.to_string(), s.to_string()])?;
        }
        Ok(())
    })
}

pub fn write_summary_csv(summary: &SignatureSummary, path: &Path) -> Result<()> {
    write_atomic(path, &summary_csv(summary))
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// `id,dice,jaccard,hd95,asd,status` rows plus a trailing `mean` row over
/// the `ok` rows. Values use two decimals.
pub fn metrics_csv(report: &SegMetricsReport) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["id", "dice", "jaccard", "hd95", "asd", "status"])?;
        for row in &report.per_image {
            w.write_record([
                row.id.clone(),
                fmt2(Some(row.dice)),
                fmt2(Some(row.jaccard)),
                fmt2(row.hd95),
                fmt2(row.asd),
                row.status.as_str().to_string(),
            ])?;
        }
        match &report.aggregate {
            Some(a) => w.write_record([
                "mean".to_string(),
                fmt2(Some(a.dice)),
                fmt2(Some(a.jaccard)),
                fmt2(Some(a.hd95)),
                fmt2(Some(a.asd)),
                format!("aggregate_n={}", a.count),
            ])?,
            None => w.write_record(["mean", "", "", "", "", "aggregate_n=0"])?,
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

/// Ordered dataset listing; entries are sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// PNG files in `dir` keyed by file stem.
fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| FpgmError::io(dir, e))? {
        let path = entry.map_err(|e| FpgmError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(FpgmError::invalid(format!(
                "duplicate id {stem:?}: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

impl DatasetManifest {
    /// Every PNG in `dir`, without masks.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let entries = png_files(dir)?
            .into_iter()
            .map(|(id, image_path)| ManifestEntry {
                id,
                image_path,
                mask_path: None,
            })
            .collect();
        Ok(DatasetManifest {
            root: dir.to_path_buf(),
            entries,
        })
    }

    /// Images paired with masks by file stem. Files without a partner are
    /// logged and left out.
    pub fn paired(images_dir: &Path, masks_dir: &Path) -> Result<Self> {
        let images = png_files(images_dir)?;
        let mut masks = png_files(masks_dir)?;
        let mut entries = Vec::new();
        for (id, image_path) in images {
            match masks.remove(&id) {
                Some(mask_path) => entries.push(ManifestEntry {
                    id,
                    image_path,
                    mask_path: Some(mask_path),
                }),
                None => log::warn!("{}: no matching mask, skipped", image_path.display()),
            }
        }
        for path in masks.values() {
            log::warn!("{}: no matching image, skipped", path.display());
        }
        Ok(DatasetManifest {
            root: images_dir.to_path_buf(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
