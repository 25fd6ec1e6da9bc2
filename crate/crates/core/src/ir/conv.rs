//! Linear convolution engines.
//!
//! Two interchangeable engines sit behind [`ConvolutionEngine`]: a direct
//! O(N·M) sum and an FFT overlap-add. They are looked up by name through
//! [`ConvolutionRegistry`] so callers (and the CLI) can pick one at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub trait ConvolutionEngine: Send + Sync {
    fn name(&self) -> &'static str;

    /// Full linear convolution of `signal` with each kernel, truncated to
    /// `out_len` samples when given (otherwise `signal.len() + kernel.len() - 1`).
    fn convolve_many(&self, signal: &[f64], kernels: &[&[f64]], out_len: Option<usize>) -> Vec<Vec<f64>>;

    fn convolve(&self, signal: &[f64], kernel: &[f64]) -> Vec<f64> {
        self.convolve_many(signal, &[kernel], None).pop().unwrap_or_default()
    }
}

fn full_len(signal: &[f64], kernel: &[f64]) -> usize {
    if signal.is_empty() || kernel.is_empty() {
        0
    } else {
        signal.len() + kernel.len() - 1
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct DirectConvolution;

impl ConvolutionEngine for DirectConvolution {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn convolve_many(&self, signal: &[f64], kernels: &[&[f64]], out_len: Option<usize>) -> Vec<Vec<f64>> {
        kernels
            .iter()
            .map(|kernel| {
                let full = full_len(signal, kernel);
                let len = out_len.unwrap_or(full);
                let mut out = vec![0.0; len];
                for (n, slot) in out.iter_mut().enumerate().take(full) {
                    let k_lo = n.saturating_sub(signal.len() - 1);
                    let k_hi = n.min(kernel.len() - 1);
                    let mut acc = 0.0;
                    for k in k_lo..=k_hi {
                        acc += kernel[k] * signal[n - k];
                    }
                    *slot = acc;
                }
                out
            })
            .collect()
    }
}

/// FFT overlap-add. The FFT size is the next power of two at or above
/// `2 * kernel_len` (at least `min_fft`), so each input block carries
/// `fft_size - kernel_len + 1` new samples.
#[derive(Debug, Clone, Copy)]
pub struct FftOverlapAdd {
    pub min_fft: usize,
}

impl Default for FftOverlapAdd {
    fn default() -> Self {
        Self { min_fft: 256 }
    }
}

impl FftOverlapAdd {
    fn fft_size(&self, signal_len: usize, kernel_len: usize) -> usize {
        let by_kernel = (2 * kernel_len).max(self.min_fft).next_power_of_two();
        // A single block covers everything when the whole result is shorter.
        let whole = (signal_len + kernel_len - 1).next_power_of_two();
        by_kernel.min(whole)
    }
}

impl ConvolutionEngine for FftOverlapAdd {
    fn name(&self) -> &'static str {
        "fft-ola"
    }

    fn convolve_many(&self, signal: &[f64], kernels: &[&[f64]], out_len: Option<usize>) -> Vec<Vec<f64>> {
        let max_kernel = kernels.iter().map(|k| k.len()).max().unwrap_or(0);
        if signal.is_empty() || max_kernel == 0 {
            return kernels
                .iter()
                .map(|k| vec![0.0; out_len.unwrap_or_else(|| full_len(signal, k))])
                .collect();
        }
        let n = self.fft_size(signal.len(), max_kernel);
        let block = n - max_kernel + 1;
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut scratch = vec![Complex64::default(); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];

        let spectra: Vec<Vec<Complex64>> = kernels
            .iter()
            .map(|k| {
                let mut buf = vec![Complex64::default(); n];
                for (slot, &v) in buf.iter_mut().zip(k.iter()) {
                    slot.re = v;
                }
                forward.process_with_scratch(&mut buf, &mut scratch);
                buf
            })
            .collect();

        let lens: Vec<usize> = kernels
            .iter()
            .map(|k| out_len.unwrap_or_else(|| full_len(signal, k)))
            .collect();
        let needed = lens.iter().copied().max().unwrap_or(0);
        let mut outs: Vec<Vec<f64>> = lens.iter().map(|&l| vec![0.0; l]).collect();
        let scale = 1.0 / n as f64;

        let mut input = vec![Complex64::default(); n];
        let mut product = vec![Complex64::default(); n];
        let mut start = 0;
        while start < signal.len() && start < needed {
            let end = (start + block).min(signal.len());
            input.fill(Complex64::default());
            for (slot, &v) in input.iter_mut().zip(&signal[start..end]) {
                slot.re = v;
            }
            forward.process_with_scratch(&mut input, &mut scratch);
            for ((spectrum, kernel), out) in spectra.iter().zip(kernels).zip(outs.iter_mut()) {
                if kernel.is_empty() {
                    continue;
                }
                for ((p, a), b) in product.iter_mut().zip(&input).zip(spectrum) {
                    *p = a * b;
                }
                inverse.process_with_scratch(&mut product, &mut scratch);
                let span = (end - start) + kernel.len() - 1;
                for (j, p) in product.iter().take(span).enumerate() {
                    if let Some(slot) = out.get_mut(start + j) {
                        *slot += p.re * scale;
                    }
                }
            }
            start = end;
        }
        outs
    }
}

/// FFT overlap-add convolution with the default block policy.
pub fn fast_convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    FftOverlapAdd::default().convolve(signal, kernel)
}

/// Named convolution engines.
#[derive(Clone)]
pub struct ConvolutionRegistry {
    engines: BTreeMap<&'static str, Arc<dyn ConvolutionEngine>>,
}

impl Default for ConvolutionRegistry {
    fn default() -> Self {
        let mut reg = Self {
            engines: BTreeMap::new(),
        };
        reg.register(Arc::new(DirectConvolution));
        reg.register(Arc::new(FftOverlapAdd::default()));
        reg
    }
}

impl ConvolutionRegistry {
    pub fn register(&mut self, engine: Arc<dyn ConvolutionEngine>) {
        self.engines.insert(engine.name(), engine);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ConvolutionEngine>> {
        self.engines
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.engines.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    // Plain textbook sum, independent of both engines.
    fn oracle(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; signal.len() + kernel.len() - 1];
        for (i, s) in signal.iter().enumerate() {
            for (j, k) in kernel.iter().enumerate() {
                out[i + j] += s * k;
            }
        }
        out
    }

    fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / peak
    }

    #[test]
    fn hand_examples() {
        assert_eq!(fast_convolve(&[1.0, 2.0, 3.0], &[1.0]).len(), 3);
        let y = fast_convolve(&[1.0, 2.0, 3.0], &[1.0]);
        for (a, b) in y.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = fast_convolve(&[1.0, 1.0], &[1.0, 1.0]);
        for (a, b) in y.iter().zip([1.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(DirectConvolution.convolve(&[1.0, 1.0], &[1.0, 1.0]), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn engines_match_oracle() {
        let mut rng = SeededRng::new(5);
        for &(n, m) in &[(1, 1), (7, 300), (1000, 200), (5000, 1), (4096, 4096), (20_000, 2_000)] {
            let s: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let k: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let want = oracle(&s, &k);
            assert!(max_rel_dev(&DirectConvolution.convolve(&s, &k), &want) < 1e-12);
            assert!(max_rel_dev(&fast_convolve(&s, &k), &want) < 1e-9, "n={n} m={m}");
        }
    }

    #[test]
    fn truncated_many_matches_full() {
        let mut rng = SeededRng::new(6);
        let s: Vec<f64> = (0..3000).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let k1: Vec<f64> = (0..700).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let k2: Vec<f64> = (0..30).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let outs = FftOverlapAdd::default().convolve_many(&s, &[&k1, &k2], Some(3000));
        assert!(max_rel_dev(&outs[0], &oracle(&s, &k1)[..3000]) < 1e-9);
        assert!(max_rel_dev(&outs[1], &oracle(&s, &k2)[..3000]) < 1e-9);
    }

    #[test]
    fn registry_lookup() {
        let reg = ConvolutionRegistry::default();
        assert_eq!(reg.get("direct").unwrap().name(), "direct");
        assert_eq!(reg.get("fft-ola").unwrap().name(), "fft-ola");
        assert!(matches!(reg.get("nope"), Err(Error::UnknownStrategy(_))));
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["direct", "fft-ola"]);
    }
}
