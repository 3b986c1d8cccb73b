//! Independent oracles and synthetic data shared by the integration tests.
//!
//! Nothing here calls into the code paths it is used to check: the DFT is a
//! direct double sum over centered frequencies, binning uses a hash map,
//! the edge band is a literal 3x3 convolution followed by a window scan, and
//! the metric oracles rebuild boundaries from raw pixels.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use fpgm::prior::LabeledSample;
use fpgm::{BinaryMask, Grid, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid {
    Grid::from_fn(h, w, |_, _| rng.random::<f64>())
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, channels: usize) -> RasterImage {
    let data = (0..h * w * channels).map(|_| rng.random::<f64>()).collect();
    RasterImage::new(h, w, channels, data).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| rng.random::<f64>() < p)
}

/// Direct DFT of a real grid, indexed so that output `(u, v)` holds
/// frequency `(u - H/2, v - W/2)`.
pub fn dft_centered(grid: &Grid) -> Vec<Complex64> {
    let (h, w) = grid.dims();
    let (cr, cc) = ((h / 2) as f64, (w / 2) as f64);
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (ku, kv) = (u as f64 - cr, v as f64 - cc);
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let angle = -2.0 * PI * (ku * m as f64 / h as f64 + kv * n as f64 / w as f64);
                    acc += grid.get(m, n) * Complex64::from_polar(1.0, angle);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Direct inverse DFT of a centered spectrum (with `1 / (H W)`).
pub fn idft_centered(h: usize, w: usize, spec: &[Complex64]) -> Vec<Complex64> {
    let (cr, cc) = ((h / 2) as f64, (w / 2) as f64);
    let mut out = Vec::with_capacity(h * w);
    for m in 0..h {
        for n in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..h {
                for v in 0..w {
                    let (ku, kv) = (u as f64 - cr, v as f64 - cc);
                    let angle = 2.0 * PI * (ku * m as f64 / h as f64 + kv * n as f64 / w as f64);
                    acc += spec[u * w + v] * Complex64::from_polar(1.0, angle);
                }
            }
            out.push(acc / (h * w) as f64);
        }
    }
    out
}

/// Annulus means via a hash map keyed by rounded radius, clamped to the
/// corner radius.
pub fn binning_oracle(values: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (cr, cc) = ((h / 2) as i64, (w / 2) as i64);
    let r_max = (((cr * cr + cc * cc) as f64).sqrt()).floor() as usize;
    let mut bins: HashMap<usize, (f64, usize)> = HashMap::new();
    for u in 0..h {
        for v in 0..w {
            let d = (((u as i64 - cr).pow(2) + (v as i64 - cc).pow(2)) as f64).sqrt();
            let r = ((d + 0.5).floor() as usize).min(r_max);
            let e = bins.entry(r).or_insert((0.0, 0));
            e.0 += values[u * w + v];
            e.1 += 1;
        }
    }
    (0..=r_max)
        .map(|r| bins.get(&r).map_or(0.0, |(s, n)| s / *n as f64))
        .collect()
}

/// Literal Sobel magnitude with replicated borders, thresholded at > 0, then
/// a brute-force square-window dilation.
pub fn edge_oracle(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (h, w) = mask.dims();
    let sx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let sy = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let px = |r: i64, c: i64| {
        let r = r.clamp(0, h as i64 - 1) as usize;
        let c = c.clamp(0, w as i64 - 1) as usize;
        if mask.get(r, c) {
            1.0
        } else {
            0.0
        }
    };
    let mut grad = vec![false; h * w];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let (mut gx, mut gy) = (0.0f64, 0.0f64);
            for i in 0..3 {
                for j in 0..3 {
                    let v = px(r + i as i64 - 1, c + j as i64 - 1);
                    gx += sx[i][j] * v;
                    gy += sy[i][j] * v;
                }
            }
            grad[r as usize * w + c as usize] = (gx * gx + gy * gy).sqrt() > 0.0;
        }
    }
    let rad = radius as i64;
    BinaryMask::from_fn(h, w, |r, c| {
        for dr in -rad..=rad {
            for dc in -rad..=rad {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 && grad[rr as usize * w + cc as usize] {
                    return true;
                }
            }
        }
        false
    })
}

pub fn random_rect_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let r0 = rng.random_range(0..h - 2);
    let r1 = rng.random_range(r0 + 1..=h);
    let c0 = rng.random_range(0..w - 2);
    let c1 = rng.random_range(c0 + 1..=w);
    BinaryMask::from_fn(h, w, |r, c| (r0..r1).contains(&r) && (c0..c1).contains(&c))
}

pub fn ellipse_mask(h: usize, w: usize, center: (f64, f64), radii: (f64, f64)) -> BinaryMask {
    BinaryMask::from_fn(h, w, |r, c| {
        let y = (r as f64 - center.0) / radii.0;
        let x = (c as f64 - center.1) / radii.1;
        x * x + y * y <= 1.0
    })
}

pub fn random_ellipse_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let center = (
        rng.random_range(0.0..h as f64),
        rng.random_range(0.0..w as f64),
    );
    let radii = (
        rng.random_range(1.0..h as f64 / 2.0),
        rng.random_range(1.0..w as f64 / 2.0),
    );
    ellipse_mask(h, w, center, radii)
}

/// Foreground pixels with a background (or out-of-frame) 4-neighbour,
/// found by scanning offsets.
pub fn boundary_oracle(mask: &BinaryMask) -> Vec<(i64, i64)> {
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    let inside = |r: i64, c: i64| r >= 0 && c >= 0 && r < h && c < w && mask.get(r as usize, c as usize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if inside(r, c)
                && [(0, 1), (1, 0), (0, -1), (-1, 0)]
                    .iter()
                    .any(|(dr, dc)| !inside(r + dr, c + dc))
            {
                out.push((r, c));
            }
        }
    }
    out
}

/// All-pairs pooled boundary distances: (hd95, asd, max directed).
pub fn distance_oracle(pred: &BinaryMask, gt: &BinaryMask) -> (f64, f64, f64) {
    let a = boundary_oracle(pred);
    let b = boundary_oracle(gt);
    let nearest = |p: &(i64, i64), set: &[(i64, i64)]| {
        set.iter()
            .map(|q| (((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let mut all: Vec<f64> = a.iter().map(|p| nearest(p, &b)).collect();
    all.extend(b.iter().map(|p| nearest(p, &a)));
    let asd = all.iter().sum::<f64>() / all.len() as f64;
    let max = all.iter().copied().fold(0.0, f64::max);
    all.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let rank = 0.95 * (all.len() - 1) as f64;
    let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
    let hd95 = all[lo] + (all[hi] - all[lo]) * (rank - lo as f64);
    (hd95, asd, max)
}

/// Real field with random phases and amplitude `1 / (1 + f)`, rescaled to
/// mean 0.5 and standard deviation 0.2 and clamped to `[0, 1]`.
pub fn texture(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid {
    let (cr, cc) = ((h / 2) as f64, (w / 2) as f64);
    let mut spec = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let f = ((u as f64 - cr).powi(2) + (v as f64 - cc).powi(2)).sqrt();
            let phase = rng.random_range(-PI..PI);
            spec.push(Complex64::from_polar(1.0 / (1.0 + f), phase));
        }
    }
    let field = fpgm::spectral::centered_ifft(h, w, &spec);
    let re: Vec<f64> = field.iter().map(|c| c.re).collect();
    let mean = re.iter().sum::<f64>() / re.len() as f64;
    let std = (re.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / re.len() as f64).sqrt();
    Grid::new(
        h,
        w,
        re.iter()
            .map(|v| (0.5 + 0.2 * (v - mean) / std).clamp(0.0, 1.0))
            .collect(),
    )
    .unwrap()
}

/// Textured images with one elliptical object each, all drawn from the same
/// texture model.
pub fn shared_texture_dataset(seed: u64, n: usize, size: usize) -> Vec<LabeledSample> {
    let mut rng = rng(seed);
    let s = size as f64;
    (0..n)
        .map(|i| {
            let image = RasterImage::from_gray(texture(&mut rng, size, size)).unwrap();
            let center = (
                rng.random_range(0.4 * s..0.6 * s),
                rng.random_range(0.4 * s..0.6 * s),
            );
            let radii = (
                rng.random_range(0.16 * s..0.24 * s),
                rng.random_range(0.16 * s..0.24 * s),
            );
            LabeledSample {
                id: format!("img{i:04}"),
                image,
                mask: ellipse_mask(size, size, center, radii),
            }
        })
        .collect()
}

/// Objects and their surrounding edge band carry texture; everything further
/// out is a flat gray level.
pub fn flat_background_dataset(
    seed: u64,
    n: usize,
    size: usize,
    dilation_radius: usize,
    level: f64,
) -> Vec<LabeledSample> {
    shared_texture_dataset(seed, n, size)
        .into_iter()
        .map(|s| {
            let keep = fpgm::prior::dilate(&s.mask, dilation_radius + 1);
            let gray = s.image.to_gray();
            let (h, w) = gray.dims();
            let flat = Grid::from_fn(h, w, |r, c| if keep.get(r, c) { gray.get(r, c) } else { level });
            LabeledSample {
                image: RasterImage::from_gray(flat).unwrap(),
                ..s
            }
        })
        .collect()
}
