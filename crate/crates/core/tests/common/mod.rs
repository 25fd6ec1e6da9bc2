#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use foasim::dataio::manifest::CorpusEntry;
use foasim::dataio::write_mono_wav;
use foasim::foa::MonoSignal;
use foasim::loss::{two_head_loss, Head, LossBundle, MaskedTargets, Reduction};
use foasim::rng::SeededRng;

/// Textbook full linear convolution.
pub fn direct_conv(x: &[f64], k: &[f64]) -> Vec<f64> {
    if x.is_empty() || k.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + k.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in k.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

pub fn mean_square_db(x: &[f64]) -> f64 {
    10.0 * (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).log10()
}

pub fn noise(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

pub fn matrix(rng: &mut SeededRng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.uniform(-1.0, 1.0))
}

/// Random loss instance: `t` frames of width `dim`, projection width `proj`,
/// `classes` classes per head, both masks non-empty.
pub fn loss_instance(
    rng: &mut SeededRng,
    t: usize,
    dim: usize,
    proj: usize,
    classes: usize,
) -> (Array2<f64>, LossBundle, MaskedTargets, MaskedTargets) {
    let reps = matrix(rng, t, dim);
    let mut head = || Head {
        projection: matrix(rng, proj, dim),
        embeddings: matrix(rng, classes, proj),
    };
    let (acoustic, spatial) = (head(), head());
    let bundle = LossBundle {
        acoustic,
        spatial,
        share_projection: false,
        tau: 0.1,
        lambda: 0.25,
        reduction: Reduction::Sum,
    };
    let mut targets = || {
        let labels = (0..t).map(|_| rng.index(classes)).collect();
        let mut mask: std::collections::BTreeSet<usize> = (0..t).filter(|_| rng.bernoulli(0.5)).collect();
        mask.insert(rng.index(t));
        MaskedTargets { labels, mask }
    };
    let (a, s) = (targets(), targets());
    (reps, bundle, a, s)
}

/// Central finite difference of the two-head loss with respect to one entry
/// of a matrix chosen by `pick`.
pub fn central_difference<F>(base: &LossBundle, reps: &Array2<f64>, a: &MaskedTargets, s: &MaskedTargets, h: f64, at: (usize, usize), mut perturb: F) -> f64
where
    F: FnMut(&mut LossBundle, &mut Array2<f64>, (usize, usize), f64),
{
    let mut bp = base.clone();
    let mut rp = reps.clone();
    perturb(&mut bp, &mut rp, at, h);
    let mut bm = base.clone();
    let mut rm = reps.clone();
    perturb(&mut bm, &mut rm, at, -h);
    (two_head_loss(&rp, &bp, a, s).unwrap() - two_head_loss(&rm, &bm, a, s).unwrap()) / (2.0 * h)
}

/// Write `n` mono test utterances of 0.5 to 2 s into `dir`.
pub fn write_corpus(dir: &Path, n: usize, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let len = 8000 + rng.index(24001);
            let f = rng.uniform(0.01, 0.2);
            let samples = (0..len)
                .map(|k| 0.5 * (f * k as f64).sin() + rng.uniform(-0.05, 0.05))
                .collect();
            let path = dir.join(format!("utt{i:04}.wav"));
            write_mono_wav(&MonoSignal::new(samples), &path).unwrap();
            CorpusEntry {
                id: format!("utt{i:04}"),
                path,
            }
        })
        .collect()
}

pub fn write_noise(dir: &Path, n: usize, seed: u64) {
    let mut rng = SeededRng::new(seed);
    for i in 0..n {
        let len = 4000 + rng.index(40000);
        let samples = noise(&mut rng, len).into_iter().map(|v| 0.3 * v).collect();
        write_mono_wav(&MonoSignal::new(samples), &dir.join(format!("noise{i}.wav"))).unwrap();
    }
}

/// Every file under `root`, keyed by relative path.
pub fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
