//! Invariant checks behind the `verify` command.
//!
//! The self-test suite re-derives the numerical contracts on freshly drawn
//! random inputs; the dataset checks validate a generated manifest against
//! the files it references.

use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::augment::{measure_level_db, mix_at_snr};
use crate::dataio::labels::read_labels;
use crate::dataio::manifest::Manifest;
use crate::dataio::wav::read_foa_wav;
use crate::error::Result;
use crate::foa::{encode_moving, FoaSignal, MonoSignal};
use crate::geometry::{sample_room, sample_trajectory, Rt60Band, TrajectoryLimits};
use crate::ir::{generate_ir, schroeder_t60, DirectConvolution, ConvolutionEngine, FftOverlapAdd};
use crate::labels::{class_center, frame_count, quantize_doa, FrameGeometry, QuantizerConfig};
use crate::loss::{loss_gradients, two_head_loss, Head, LossBundle, MaskedTargets, Reduction};
use crate::pipeline::sample_labels_from_provenance;
use crate::rng::SeededRng;
use crate::geometry::Vec3;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Max over samples of `|X^2 + Y^2 + Z^2 - W^2| / W^2` (samples with `W == 0`
/// are compared absolutely).
pub fn energy_identity_error(foa: &FoaSignal) -> f64 {
    (0..foa.len())
        .map(|i| {
            let (w, x, y, z) = (foa.w()[i], foa.x()[i], foa.y()[i], foa.z()[i]);
            let diff = (x * x + y * y + z * z - w * w).abs();
            if w == 0.0 {
                diff
            } else {
                diff / (w * w)
            }
        })
        .fold(0.0, f64::max)
}

pub fn random_signal(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.uniform(-1.0, 1.0))
}

/// Random two-head loss instance with `frames` frames of width `dim`,
/// projection width `proj`, and `classes` classes per head.
pub fn random_loss_instance(
    rng: &mut SeededRng,
    frames: usize,
    dim: usize,
    proj: usize,
    classes: usize,
) -> (Array2<f64>, LossBundle, MaskedTargets, MaskedTargets) {
    let reps = random_matrix(rng, frames, dim);
    let head = |rng: &mut SeededRng| Head {
        projection: random_matrix(rng, proj, dim),
        embeddings: random_matrix(rng, classes, proj),
    };
    let bundle = LossBundle {
        acoustic: head(rng),
        spatial: head(rng),
        share_projection: false,
        tau: 0.1,
        lambda: 0.25,
        reduction: Reduction::Sum,
    };
    let targets = |rng: &mut SeededRng| MaskedTargets {
        labels: (0..frames).map(|_| rng.index(classes)).collect(),
        mask: (0..frames).filter(|_| rng.bernoulli(0.6)).collect(),
    };
    let a = targets(rng);
    let s = targets(rng);
    (reps, bundle, a, s)
}

/// Largest norm-wise relative error `||analytic - numeric|| / max(||analytic||, ||numeric||)`
/// over the gradient tensors, with central differences of step `h`.
pub fn gradient_check(reps: &Array2<f64>, bundle: &LossBundle, a: &MaskedTargets, s: &MaskedTargets, h: f64) -> Result<f64> {
    let grads = loss_gradients(reps, bundle, a, s)?;
    let relative = |pairs: Vec<(f64, f64)>| {
        let diff: f64 = pairs.iter().map(|(x, y)| (x - y).powi(2)).sum();
        let na: f64 = pairs.iter().map(|(x, _)| x * x).sum();
        let nn: f64 = pairs.iter().map(|(_, y)| y * y).sum();
        let denom = na.max(nn).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            diff.sqrt() / denom
        }
    };

    let mut pairs = Vec::new();
    for ((r, c), g) in grads.reps.indexed_iter() {
        let mut p = reps.clone();
        p[[r, c]] += h;
        let mut m = reps.clone();
        m[[r, c]] -= h;
        pairs.push((*g, (two_head_loss(&p, bundle, a, s)? - two_head_loss(&m, bundle, a, s)?) / (2.0 * h)));
    }
    let mut worst = relative(pairs);

    type Pick = fn(&mut LossBundle) -> &mut Array2<f64>;
    let mut params: Vec<(Pick, &Array2<f64>)> = vec![
        (|b| &mut b.acoustic.projection, &grads.acoustic_projection),
        (|b| &mut b.acoustic.embeddings, &grads.acoustic_embeddings),
        (|b| &mut b.spatial.embeddings, &grads.spatial_embeddings),
    ];
    if let Some(g) = &grads.spatial_projection {
        params.push((|b| &mut b.spatial.projection, g));
    }
    for (pick, grad) in params {
        let mut pairs = Vec::new();
        for ((r, c), g) in grad.indexed_iter() {
            let mut p = bundle.clone();
            pick(&mut p)[[r, c]] += h;
            let mut m = bundle.clone();
            pick(&mut m)[[r, c]] -= h;
            pairs.push((*g, (two_head_loss(reps, &p, a, s)? - two_head_loss(reps, &m, a, s)?) / (2.0 * h)));
        }
        worst = worst.max(relative(pairs));
    }
    Ok(worst)
}

/// Numerical self-tests on seeded random inputs.
pub fn self_tests(seed: u64) -> Vec<Check> {
    let mut rng = SeededRng::new(seed);
    let mut checks = Vec::new();

    let geom = FrameGeometry::default();
    let frames_ok = frame_count(16_000).ok() == Some(49) && geom.hop() == 320 && geom.receptive_field() == 400;
    checks.push(Check::new("frame_geometry", frames_ok, "T(16000)=49, hop 320, field 400"));

    let q = QuantizerConfig::default();
    let centers_ok = (0..q.classes()).all(|c| {
        class_center(c, &q)
            .and_then(|v| quantize_doa(v, &q))
            .map(|back| back == c)
            .unwrap_or(false)
    });
    checks.push(Check::new("quantizer_centers", centers_ok && q.classes() == 512, "512 cells re-quantise"));

    let limits = TrajectoryLimits::default();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mono = MonoSignal::new(random_signal(&mut rng, 1600));
        match sample_trajectory(mono.len(), 16_000, &limits, &mut rng).and_then(|t| encode_moving(&mono, &t)) {
            Ok((foa, _)) => worst = worst.max(energy_identity_error(&foa)),
            Err(_) => worst = f64::INFINITY,
        }
    }
    checks.push(Check::new("free_field_energy", worst <= 1e-9, format!("max rel error {worst:.3e}")));

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 1 + rng.index(5000);
        let m = 1 + rng.index(1000);
        let s = random_signal(&mut rng, n);
        let k = random_signal(&mut rng, m);
        let want = DirectConvolution.convolve(&s, &k);
        let got = FftOverlapAdd::default().convolve(&s, &k);
        let peak = want.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let dev = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
        worst = worst.max(dev);
    }
    checks.push(Check::new("fft_convolution", worst < 1e-9, format!("max rel deviation {worst:.3e}")));

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let t60 = sample_room(&mut rng, Rt60Band::default())
            .and_then(|room| Ok((room.rt60_s, generate_ir(&room, &mut rng)?)))
            .ok()
            .and_then(|(rt, ir)| schroeder_t60(&ir.channels[0], 16_000).map(|est| (est / rt - 1.0).abs()));
        worst = worst.max(t60.unwrap_or(f64::INFINITY));
    }
    checks.push(Check::new("ir_rt60", worst <= 0.2, format!("max relative T60 error {worst:.3}")));

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = FoaSignal::from_channels(std::array::from_fn(|_| random_signal(&mut rng, 2000)), 16_000).unwrap();
        let len = 1 + rng.index(1000);
        let i = FoaSignal::from_channels(std::array::from_fn(|_| random_signal(&mut rng, len)), 16_000).unwrap();
        let offset = rng.index(2000 - len + 1);
        let snr = rng.uniform(0.0, 20.0);
        let err = mix_at_snr(&p, &i, snr, offset)
            .and_then(|mixed| {
                let primary = measure_level_db(&p, offset..offset + len)?;
                let added = measure_level_db(&i.scaled(mixed.scale), 0..len)?;
                Ok((primary - added - snr).abs())
            })
            .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
    }
    checks.push(Check::new("mix_snr", worst <= 0.01, format!("max SNR error {worst:.2e} dB")));

    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (reps, bundle, a, s) = random_loss_instance(&mut rng, 6, 8, 4, 5);
        worst = worst.max(gradient_check(&reps, &bundle, &a, &s, 1e-5).unwrap_or(f64::INFINITY));
    }
    checks.push(Check::new("loss_gradients", worst < 1e-5, format!("max rel error {worst:.2e}")));

    checks
}

/// Consistency of a generated dataset with its manifest.
pub fn check_dataset(manifest_path: &Path) -> Vec<Check> {
    let manifest = match Manifest::read(manifest_path) {
        Ok(m) => m,
        Err(e) => return vec![Check::new("manifest_readable", false, e.to_string())],
    };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let q = manifest.header.config.quantizer;
    let mut checks = vec![Check::new("manifest_readable", true, format!("{} items", manifest.items.len()))];

    let mut missing = Vec::new();
    let mut label_problems = Vec::new();
    let mut energy_worst = 0.0f64;
    for item in manifest.items.iter().filter(|i| i.is_ok()) {
        let gone = Manifest::missing_paths(item, dir);
        if !gone.is_empty() || item.audio.is_none() || item.labels.is_none() {
            missing.push(item.id.clone());
            continue;
        }
        let audio = match read_foa_wav(&dir.join(item.audio.as_ref().unwrap())) {
            Ok(a) => a,
            Err(e) => {
                label_problems.push(format!("{}: {e}", item.id));
                continue;
            }
        };
        let labels = match read_labels(&dir.join(item.labels.as_ref().unwrap())) {
            Ok(l) => l,
            Err(e) => {
                label_problems.push(format!("{}: {e}", item.id));
                continue;
            }
        };
        if Some(audio.len()) != item.num_samples {
            label_problems.push(format!("{}: audio length differs from manifest", item.id));
        }
        match frame_count(audio.len()) {
            Ok(t) if t == labels.frame_count => {}
            _ => label_problems.push(format!("{}: frame count {} inconsistent", item.id, labels.frame_count)),
        }
        if labels.quantizer != q {
            label_problems.push(format!("{}: quantizer differs from header", item.id));
        }
        let requantised = labels
            .doa
            .iter()
            .zip(&labels.spatial)
            .all(|(d, c)| quantize_doa(Vec3(*d), &q).map(|x| x == *c).unwrap_or(false));
        if !requantised {
            label_problems.push(format!("{}: spatial classes disagree with DOA vectors", item.id));
        }
        if let Some(prov) = &item.spatialisation {
            let regenerated = sample_labels_from_provenance(prov, audio.len())
                .and_then(|s| crate::labels::frame_labels(&s, &q));
            match regenerated {
                Ok(seq) if seq.spatial == labels.spatial => {}
                _ => label_problems.push(format!("{}: labels do not match provenance", item.id)),
            }
            if prov.branch() == "moving" && item.mixing.is_none() {
                energy_worst = energy_worst.max(energy_identity_error(&audio));
            }
        }
    }
    checks.push(Check::new(
        "referential_integrity",
        missing.is_empty(),
        if missing.is_empty() { "all files present".to_string() } else { format!("missing: {}", missing.join(", ")) },
    ));
    checks.push(Check::new(
        "labels_consistent",
        label_problems.is_empty(),
        if label_problems.is_empty() { "ok".to_string() } else { label_problems.join("; ") },
    ));
    // Stored as f32, so the identity only holds to single precision.
    checks.push(Check::new(
        "stored_energy_identity",
        energy_worst <= 1e-5,
        format!("max rel error {energy_worst:.2e} on unmixed moving items"),
    ));
    checks
}
