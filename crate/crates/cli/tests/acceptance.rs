//! Acceptance suite: one line per criterion.
//!
//! Run with `cargo test -p fpgm-cli --test acceptance`. The process exits
//! nonzero when a criterion fails that is not listed in `KNOWN_RED`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::*;
use fpgm::augment::{
    fpgm_augment, fpgm_augment_detailed, perturb_spectrum, shape_energy, AlignmentConfig,
    AlignmentMode, DEFAULT_EPSILON,
};
use fpgm::metrics::{boundary_points, dice_jaccard, hd95_asd};
use fpgm::prior::{
    edge_mask, edge_signature, generic_prior, learn_prior, lowpass_prior, AggregationMode,
    FrequencyPrior,
};
use fpgm::spectral::{corner_radius, forward_spectrum, inverse_spectrum, radial_profile};
use fpgm::ssl::{cross_entropy_loss, pseudo_label, soft_dice_loss, supervised_loss, total_loss};
use fpgm::ssl::{LossWeights, ProbabilityMap, PROB_CLAMP};
use fpgm::RadialProfile;
use rand::Rng;

/// Criteria expected to fail; see the decisions log for the analysis.
const KNOWN_RED: &[u32] = &[9];

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ac1() -> Check {
    let start = Instant::now();
    let mut rng = rng(1001);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let h = rng.random_range(8..=64);
        let w = rng.random_range(8..=64);
        let img = random_image(&mut rng, h, w, if i % 2 == 0 { 1 } else { 3 });
        let back = inverse_spectrum(&forward_spectrum(&img).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        worst = worst.max(img.max_abs_diff(&back));
    }
    ensure(worst < 1e-9, format!("round-trip error {worst:e}"))?;
    let img = random_image(&mut rng, 8, 8, 1);
    let spec = forward_spectrum(&img).unwrap();
    let oracle = dft_centered(&img.plane(0));
    let ch = spec.channel(0).to_complex();
    let dft_err = ch.iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    ensure(dft_err < 1e-9, format!("DFT oracle error {dft_err:e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("round trip {worst:.1e}, DFT {dft_err:.1e}, 100 trips under 5 s"))
}

fn ac2() -> Check {
    let mut rng = rng(1002);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(8..=40), rng.random_range(8..=40));
        let img = random_image(&mut rng, h, w, 1);
        let prior = FrequencyPrior::fixed(generic_prior(corner_radius(h, w) + 1), h, w).unwrap();
        for gamma in [0.0, 0.05, 0.5, 1.0] {
            let cfg = AlignmentConfig { gamma, ..Default::default() };
            let ps = perturb_spectrum(&img, &prior, &cfg).map_err(|e| e.to_string())?;
            for ch in &ps.channels {
                let total: f64 = ch.perturbed.values().iter().sum();
                worst = worst.max(((total - ch.energy) / ch.energy).abs());
            }
        }
    }
    ensure(worst < 1e-6, format!("relative energy error {worst:e}"))?;
    Ok(format!("worst relative error {worst:.1e}"))
}

fn ac3() -> Check {
    let mut rng = rng(1003);
    let mut worst_imag: f64 = 0.0;
    for i in 0..20 {
        let (h, w) = (rng.random_range(8..=40), rng.random_range(8..=40));
        let img = random_image(&mut rng, h, w, 1 + 2 * (i % 2));
        let prior = FrequencyPrior::fixed(generic_prior(corner_radius(h, w) + 1), h, w).unwrap();
        for mode in [AlignmentMode::RadialBroadcast, AlignmentMode::AnnulusGain] {
            let cfg = AlignmentConfig { gamma: 0.5, mode, clip_output: false, ..Default::default() };
            let ps = perturb_spectrum(&img, &prior, &cfg).unwrap();
            for (src, out) in ps.source.channels().iter().zip(ps.perturbed.channels()) {
                for ((&a, &p), &q) in out
                    .amplitude
                    .as_slice()
                    .iter()
                    .zip(out.phase.as_slice())
                    .zip(src.phase.as_slice())
                {
                    if a > 1e-8 {
                        ensure(p.to_bits() == q.to_bits(), "phase changed")?;
                    }
                }
            }
            let aug = fpgm_augment_detailed(&img, &prior, &cfg).unwrap();
            for (ch, imag) in ps.perturbed.channels().iter().zip(&aug.max_imag) {
                worst_imag = worst_imag.max(imag / ch.amplitude.max());
            }
        }
    }
    ensure(worst_imag < 1e-6, format!("imaginary residue {worst_imag:e}"))?;
    Ok(format!("phase exact, residue {worst_imag:.1e} of max amplitude"))
}

fn smooth_prior(h: usize, w: usize) -> FrequencyPrior {
    let r_max = corner_radius(h, w);
    let sigma = 2.0 * r_max as f64;
    let values = (0..=r_max).map(|r| (-(r as f64 / sigma).powi(2)).exp()).collect();
    FrequencyPrior::fixed(RadialProfile::new(values).unwrap(), h, w).unwrap()
}

fn ac4() -> Check {
    let mut rng = rng(1004);
    let mut identity: f64 = 0.0;
    for _ in 0..20 {
        let (h, w) = (rng.random_range(8..=40), rng.random_range(8..=40));
        let img = random_image(&mut rng, h, w, 3);
        let cfg = AlignmentConfig {
            gamma: 0.0,
            mode: AlignmentMode::AnnulusGain,
            clip_output: false,
            ..Default::default()
        };
        identity = identity.max(img.max_abs_diff(&fpgm_augment(&img, &smooth_prior(h, w), &cfg).unwrap()));
    }
    ensure(identity < 1e-6, format!("gamma=0 annulus_gain error {identity:e}"))?;
    let mut shape_err: f64 = 0.0;
    for _ in 0..20 {
        let img = random_image(&mut rng, 32, 32, 1);
        let prior = smooth_prior(32, 32);
        let cfg = AlignmentConfig {
            gamma: 1.0,
            mode: AlignmentMode::RadialBroadcast,
            clip_output: false,
            ..Default::default()
        };
        let out = fpgm_augment(&img, &prior, &cfg).unwrap();
        let spec = forward_spectrum(&out).unwrap();
        let got = radial_profile(&spec.channel(0).amplitude, spec.dc()).unwrap();
        let (_, got_shape) = shape_energy(&got, DEFAULT_EPSILON);
        let (_, want) = shape_energy(prior.profile(), DEFAULT_EPSILON);
        for (g, t) in got_shape.values().iter().zip(want.values()) {
            shape_err = shape_err.max((g - t).abs() / t);
        }
    }
    ensure(shape_err < 1e-2, format!("gamma=1 shape error {shape_err:e}"))?;
    Ok(format!("identity {identity:.1e}, shape {shape_err:.1e}"))
}

fn ac5() -> Check {
    let data = shared_texture_dataset(1005, 6, 24);
    let sigs: Vec<RadialProfile> = data
        .iter()
        .map(|s| edge_signature(&s.image, &s.mask, 2).unwrap())
        .collect();
    let repeated: Vec<_> = (0..200).map(|_| data[0].clone()).collect();
    let fixed = learn_prior(&repeated, 0.999, 2, AggregationMode::Ema).unwrap();
    ensure(fixed.profile() == &sigs[0], "constant stream moved the prior")?;

    let mean = learn_prior(&data, 0.999, 2, AggregationMode::Mean).unwrap();
    for (r, &m) in mean.profile().values().iter().enumerate() {
        let oracle = sigs.iter().map(|p| p.values()[r]).sum::<f64>() / sigs.len() as f64;
        ensure((m - oracle).abs() <= 1e-12 * oracle.max(1.0), format!("mean mode off at r={r}"))?;
    }

    let mu = 0.999;
    let two = learn_prior(&data[..2], mu, 2, AggregationMode::Ema).unwrap();
    for (r, &v) in two.profile().values().iter().enumerate() {
        let hand = (1.0 - mu) * sigs[1].values()[r] + mu * sigs[0].values()[r];
        ensure(v == hand, format!("cold start + update differs at r={r}"))?;
    }
    Ok("fixed point, mean and one-step update exact".into())
}

fn ac6() -> Check {
    let mut rng = rng(1006);
    for i in 0..50 {
        let (h, w) = (rng.random_range(8..=32), rng.random_range(8..=32));
        let mask = if i % 2 == 0 { random_rect_mask(&mut rng, h, w) } else { random_ellipse_mask(&mut rng, h, w) };
        for r in [1, 2] {
            ensure(edge_mask(&mask, r) == edge_oracle(&mask, r), format!("mask {i}, radius {r}"))?;
        }
    }
    Ok("50 masks bit-exact".into())
}

fn ac7() -> Check {
    let mut rng = rng(1007);
    let mut dist_err: f64 = 0.0;
    for i in 0..200 {
        let (a, b) = match i % 3 {
            0 => (random_rect_mask(&mut rng, 16, 16), random_rect_mask(&mut rng, 16, 16)),
            1 => (random_ellipse_mask(&mut rng, 16, 16), random_ellipse_mask(&mut rng, 16, 16)),
            _ => (random_mask(&mut rng, 16, 16, 0.3), random_ellipse_mask(&mut rng, 16, 16)),
        };
        let (d, j) = dice_jaccard(&a, &b).unwrap();
        let inter = a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| **x && **y).count();
        let (na, nb) = (a.count(), b.count());
        let (od, oj) = if na + nb == 0 {
            (1.0, 1.0)
        } else {
            (2.0 * inter as f64 / (na + nb) as f64, inter as f64 / (na + nb - inter) as f64)
        };
        ensure(d == od && j == oj, format!("pair {i}: overlap"))?;
        ensure((j - d / (2.0 - d)).abs() < 1e-12, format!("pair {i}: jaccard identity"))?;
        let boundary: Vec<(i64, i64)> = boundary_points(&a).iter().map(|&(r, c)| (r as i64, c as i64)).collect();
        ensure(boundary == boundary_oracle(&a), format!("pair {i}: boundary"))?;
        if na > 0 && nb > 0 {
            let (hd, asd) = hd95_asd(&a, &b).unwrap();
            let (ohd, oasd, _) = distance_oracle(&a, &b);
            dist_err = dist_err.max((hd - ohd).abs()).max((asd - oasd).abs());
        }
    }
    ensure(dist_err < 1e-9, format!("distance error {dist_err:e}"))?;
    Ok(format!("200 pairs, distance error {dist_err:.1e}"))
}

fn ac8() -> Check {
    let mut rng = rng(1008);
    let w = LossWeights::default();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let fg: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let probs = ProbabilityMap::from_foreground(8, 8, &fg).unwrap();
        let mask = random_mask(&mut rng, 8, 8, 0.4);
        let tau = rng.random_range(0.5..1.0);
        let pl = pseudo_label(&probs, tau).unwrap();
        for (k, &p) in fg.iter().enumerate() {
            let label = usize::from(p > 1.0 - p);
            let conf = p.max(1.0 - p);
            ensure(pl.labels()[k] == label && pl.valid()[k] == (conf >= tau), format!("instance {i}: label scan"))?;
        }
        let (mut inter, mut ps, mut ts, mut ce) = (0.0, 0.0, 0.0, 0.0);
        for (k, &p) in fg.iter().enumerate() {
            let t = if mask.as_slice()[k] { 1.0 } else { 0.0 };
            inter += p * t;
            ps += p;
            ts += t;
            let pt = if t == 1.0 { p } else { 1.0 - p };
            ce -= pt.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
        }
        let dice_o = 1.0 - (2.0 * inter + 1.0) / (ps + ts + 1.0);
        let ce_o = ce / 64.0;
        let dice = soft_dice_loss(&probs, &mask, 1.0).unwrap();
        let ce = cross_entropy_loss(&probs, &mask).unwrap();
        let sup = supervised_loss(&probs, &mask, 1.0).unwrap();
        let (u, f) = (rng.random::<f64>(), rng.random::<f64>());
        let total = total_loss(sup, u, f, &w);
        worst = worst
            .max((dice - dice_o).abs())
            .max((ce - ce_o).abs())
            .max((sup - 0.5 * (ce_o + dice_o)).abs())
            .max((total - (0.5 * (ce_o + dice_o) + 0.5 * u + 0.5 * f)).abs());
    }
    ensure(worst < 1e-12, format!("loss error {worst:e}"))?;
    let uniform = ProbabilityMap::from_foreground(4, 4, &[0.5; 16]).unwrap();
    let ce = cross_entropy_loss(&uniform, &random_mask(&mut rng, 4, 4, 0.5)).unwrap();
    ensure((ce - std::f64::consts::LN_2).abs() < 1e-12, "uniform CE is not ln 2")?;
    Ok(format!("100 instances, worst {worst:.1e}"))
}

fn ac9() -> Check {
    let data = shared_texture_dataset(19, 200, 64);
    let (a, b) = fpgm::analysis::subset_consistency(&data, 7, 2).map_err(|e| e.to_string())?;
    let gaps: Vec<f64> = a
        .mean
        .values()
        .iter()
        .zip(b.mean.values())
        .map(|(x, y)| (x - y).abs() / x.max(*y))
        .collect();
    let (worst_r, worst) = gaps.iter().copied().enumerate().fold((0, 0.0), |acc, (r, g)| if g > acc.1 { (r, g) } else { acc });
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let detail = format!(
        "max gap {:.2}% at r={worst_r} of {}, median {:.2}%",
        100.0 * worst,
        gaps.len() - 1,
        100.0 * sorted[sorted.len() / 2]
    );
    ensure(worst < 0.05, detail.clone())?;
    Ok(detail)
}

fn ac10() -> Check {
    let data = flat_background_dataset(1010, 60, 64, 2, 0.2);
    let res = fpgm::analysis::specificity_study(&data, data.len(), 1010, 2).map_err(|e| e.to_string())?;
    let (edge, bg) = (res.edge.mean.values(), res.background.mean.values());
    let r_max = corner_radius(64, 64);
    for r in 2..=r_max / 4 {
        ensure(edge[r] > bg[r], format!("r={r}: edge {:.3} <= background {:.3}", edge[r], bg[r]))?;
    }
    let tail = bg[2..=r_max / 4].iter().copied().fold(0.0, f64::max);
    let ratio = tail / bg[0];
    ensure(ratio < 0.1, format!("background at r>=2 is {:.1}% of r=0", 100.0 * ratio))?;
    Ok(format!(
        "{} images, background r>=2 at most {:.1}% of r=0",
        res.used.len(),
        100.0 * ratio
    ))
}

fn ac11() -> Check {
    let g = generic_prior(60);
    for (r, &v) in g.values().iter().enumerate() {
        ensure(v == 1.0 / (r as f64 + 1.0), format!("generic prior at r={r}"))?;
    }
    let l = lowpass_prior(60, 16).map_err(|e| e.to_string())?;
    let ones = l.values().iter().filter(|&&v| v == 1.0).count();
    let zeros = l.values().iter().filter(|&&v| v == 0.0).count();
    ensure(ones == 17 && zeros == 43 && l.values()[..17].iter().all(|&v| v == 1.0), format!("{ones} ones"))?;
    Ok("generic 1/(r+1), lowpass 17 ones".into())
}

/// Every file under `dir`, sorted, with contents.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Drop the echoed thread count so runs with different `--jobs` compare.
fn without_jobs(files: &[(PathBuf, Vec<u8>)]) -> Vec<(PathBuf, Vec<u8>)> {
    fn strip(v: &mut serde_json::Value) {
        if let Some(map) = v.as_object_mut() {
            if let Some(g) = map.get_mut("globals").and_then(|g| g.as_object_mut()) {
                g.remove("jobs");
            }
            map.values_mut().for_each(strip);
        }
    }
    files
        .iter()
        .map(|(path, bytes)| {
            if path.extension().is_some_and(|e| e == "json") {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                strip(&mut v);
                (path.clone(), serde_json::to_vec(&v).unwrap())
            } else {
                (path.clone(), bytes.clone())
            }
        })
        .collect()
}

fn ac12() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let (imgs, masks) = (root.join("images"), root.join("masks"));
    fs::create_dir_all(&imgs).unwrap();
    fs::create_dir_all(&masks).unwrap();
    for s in shared_texture_dataset(1012, 12, 32) {
        fpgm::io::save_image(&s.image, &imgs.join(format!("{}.png", s.id))).unwrap();
        fpgm::io::save_mask(&s.mask, &masks.join(format!("{}.png", s.id))).unwrap();
    }
    let mut rng = rng(1012);
    let grids = root.join("grids");
    fs::create_dir_all(&grids).unwrap();
    for name in ["p", "w", "s", "f"] {
        let fg: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let probs = ProbabilityMap::from_foreground(8, 8, &fg).unwrap();
        fpgm::io::write_float_grid(&fpgm::io::FloatGrid::from_probability_map(&probs), &grids.join(format!("{name}.bin"))).unwrap();
    }
    fpgm::io::save_mask(&random_mask(&mut rng, 8, 8, 0.5), &grids.join("t.png")).unwrap();

    let out = root.join("out");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let prior = out.join("prior.json");
    let commands: Vec<Vec<String>> = vec![
        vec!["learn-prior".into(), "--images".into(), s(&imgs), "--masks".into(), s(&masks), "--out".into(), s(&prior)],
        vec!["augment".into(), "--images".into(), s(&imgs), "--prior".into(), s(&prior), "--out".into(), s(&out.join("aug")), "--gamma-jitter".into(), "0.03".into()],
        vec!["signature".into(), "--images".into(), s(&imgs), "--masks".into(), s(&masks), "--out".into(), s(&out.join("sig")), "--halves".into()],
        vec!["specificity".into(), "--images".into(), s(&imgs), "--masks".into(), s(&masks), "--out".into(), s(&out.join("spec")), "--n-images".into(), "8".into()],
        vec!["metrics".into(), "--pred".into(), s(&masks), "--gt".into(), s(&masks), "--out".into(), s(&out.join("metrics.csv"))],
        vec![
            "loss".into(), "--probs".into(), s(&grids.join("p.bin")), "--target".into(), s(&grids.join("t.png")),
            "--weak".into(), s(&grids.join("w.bin")), "--strong".into(), s(&grids.join("s.bin")),
            "--freq".into(), s(&grids.join("f.bin")), "--tau-c".into(), "0.6".into(), "--out".into(), s(&out.join("loss.json")),
        ],
    ];
    let run_all = |jobs: &str| -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
        let _ = fs::remove_dir_all(&out);
        fs::create_dir_all(&out).unwrap();
        for args in &commands {
            let res = Command::new(env!("CARGO_BIN_EXE_fpgm"))
                .args(args)
                .args(["--seed", "5", "--jobs", jobs])
                .output()
                .map_err(|e| e.to_string())?;
            if !res.status.success() {
                return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&res.stderr)));
            }
        }
        Ok(snapshot(&out))
    };
    let first = run_all("1")?;
    let second = run_all("1")?;
    let threaded = run_all("4")?;
    ensure(first == second, "rerun differs")?;
    ensure(without_jobs(&first) == without_jobs(&threaded), "output depends on --jobs")?;
    Ok(format!("6 commands, {} files byte-identical across reruns and thread counts", first.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 12] = [
        (1, "spectral round trip", ac1),
        (2, "energy preservation", ac2),
        (3, "phase preservation", ac3),
        (4, "alignment endpoints", ac4),
        (5, "EMA and mean prior", ac5),
        (6, "edge pipeline", ac6),
        (7, "metrics oracles", ac7),
        (8, "SSL kernels", ac8),
        (9, "signature consistency", ac9),
        (10, "specificity separation", ac10),
        (11, "ablation priors", ac11),
        (12, "CLI determinism", ac12),
    ];
    let start = Instant::now();
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, check) in criteria {
        let t = Instant::now();
        let res = check();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => {
                passed += 1;
                println!("[PASS] AC{id:<2} {name}: {detail} ({secs:.2} s)");
            }
            Err(detail) => {
                let note = if KNOWN_RED.contains(&id) { " (known)" } else { "" };
                println!("[FAIL] AC{id:<2} {name}: {detail}{note} ({secs:.2} s)");
                if !KNOWN_RED.contains(&id) {
                    unexpected.push(id);
                }
            }
        }
    }
    println!(
        "acceptance: {passed}/12 passed in {:.1} s",
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
