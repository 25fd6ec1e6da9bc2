//! Frame-aligned training targets.
//!
//! Per-sample DOA vectors are reduced to one vector per encoder frame (the
//! sample at the frame's receptive-field centre) and quantised into
//! `n * m` elevation/azimuth cells:
//!
//! ```text
//! theta = arccos(z)            in [0, pi]
//! phi   = atan2(y, x) + pi     in [0, 2 pi]
//! class = floor(n theta / pi) + n * floor(m phi / (2 pi))
//! ```
//!
//! with both indices clamped to their last cell on the closed boundary.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::DoaSampleLabels;
use crate::geometry::Vec3;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// Elevation segments.
    pub n: usize,
    /// Azimuth segments.
    pub m: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { n: 16, m: 32 }
    }
}

impl QuantizerConfig {
    pub fn classes(&self) -> usize {
        self.n * self.m
    }

    pub fn elevation_width_deg(&self) -> f64 {
        180.0 / self.n as f64
    }

    pub fn azimuth_width_deg(&self) -> f64 {
        360.0 / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("quantizer needs n >= 1 and m >= 1".into()));
        }
        Ok(())
    }
}

pub fn quantize_doa(l: Vec3, cfg: &QuantizerConfig) -> Result<usize> {
    let norm = l.norm();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::NotUnit(norm));
    }
    cfg.validate()?;
    let theta = l.z().clamp(-1.0, 1.0).acos();
    // atan2(0, 0) == 0, so both poles land at phi = pi.
    let phi = l.y().atan2(l.x()) + PI;
    let elevation = ((cfg.n as f64 * theta / PI).floor() as usize).min(cfg.n - 1);
    let azimuth = ((cfg.m as f64 * phi / (2.0 * PI)).floor() as usize).min(cfg.m - 1);
    Ok(elevation + cfg.n * azimuth)
}

/// Unit vector at the centre of a class cell.
pub fn class_center(class: usize, cfg: &QuantizerConfig) -> Result<Vec3> {
    if class >= cfg.classes() {
        return Err(Error::ClassOutOfRange {
            id: class,
            classes: cfg.classes(),
        });
    }
    let theta = ((class % cfg.n) as f64 + 0.5) * PI / cfg.n as f64;
    let phi = ((class / cfg.n) as f64 + 0.5) * 2.0 * PI / cfg.m as f64;
    let az = phi - PI;
    Ok(Vec3::new(theta.sin() * az.cos(), theta.sin() * az.sin(), theta.cos()))
}

/// Convolutional front-end geometry that fixes the frame grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self {
            kernels: vec![10, 3, 3, 3, 3, 2, 2],
            strides: vec![5, 2, 2, 2, 2, 2, 2],
        }
    }
}

impl FrameGeometry {
    pub fn hop(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn receptive_field(&self) -> usize {
        let mut field = 1;
        let mut jump = 1;
        for (k, s) in self.kernels.iter().zip(&self.strides) {
            field += (k - 1) * jump;
            jump *= s;
        }
        field
    }

    pub fn frame_count(&self, num_samples: usize) -> Result<usize> {
        if num_samples < self.receptive_field() {
            return Err(Error::TooShort(num_samples));
        }
        Ok(self
            .kernels
            .iter()
            .zip(&self.strides)
            .fold(num_samples, |len, (k, s)| (len - k) / s + 1))
    }

    pub fn frame_center_sample(&self, frame: usize) -> usize {
        self.hop() * frame + self.receptive_field() / 2
    }
}

/// Number of encoder frames for `num_samples` input samples.
pub fn frame_count(num_samples: usize) -> Result<usize> {
    FrameGeometry::default().frame_count(num_samples)
}

/// Sample index at the centre of frame `t`'s receptive field.
pub fn frame_center_sample(t: usize) -> usize {
    FrameGeometry::default().frame_center_sample(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    /// Frames covered by each mask span.
    pub span: usize,
    /// Fraction of frames chosen as span starts.
    pub start_fraction: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            span: 10,
            start_fraction: 0.08,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.span == 0 || !(0.0..=1.0).contains(&self.start_fraction) {
            return Err(Error::InvalidConfig(
                "mask span must be >= 1 and start_fraction in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn start_count(&self, frames: usize) -> usize {
        ((self.start_fraction * frames as f64).round() as usize).min(frames)
    }
}

/// Span mask over `frames` frames.
///
/// Starts are the first `k = round(start_fraction * T)` entries of a partial
/// Fisher-Yates shuffle of `0..T` (for `i` in `0..k`, swap `i` with
/// `i + U{0..T-i}`); each start masks `[start, start + span)` clipped to `T`.
/// Spans may overlap.
pub fn span_mask(frames: usize, cfg: &MaskConfig, rng: &mut SeededRng) -> Result<BTreeSet<usize>> {
    cfg.validate()?;
    let k = cfg.start_count(frames);
    let mut order: Vec<usize> = (0..frames).collect();
    for i in 0..k {
        let j = i + rng.index(frames - i);
        order.swap(i, j);
    }
    Ok(order[..k]
        .iter()
        .flat_map(|&s| s..(s + cfg.span).min(frames))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameLabelSeq {
    pub doa: Vec<Vec3>,
    pub spatial: Vec<usize>,
    pub acoustic: Option<Vec<usize>>,
    pub mask: BTreeSet<usize>,
}

impl FrameLabelSeq {
    pub fn frames(&self) -> usize {
        self.spatial.len()
    }
}

pub fn frame_labels(samples: &DoaSampleLabels, cfg: &QuantizerConfig) -> Result<FrameLabelSeq> {
    frame_labels_with(samples, cfg, &FrameGeometry::default())
}

pub fn frame_labels_with(
    samples: &DoaSampleLabels,
    cfg: &QuantizerConfig,
    geometry: &FrameGeometry,
) -> Result<FrameLabelSeq> {
    let frames = geometry.frame_count(samples.len())?;
    let doa: Vec<Vec3> = (0..frames)
        .map(|t| samples.0[geometry.frame_center_sample(t)])
        .collect();
    let spatial = doa
        .iter()
        .map(|l| quantize_doa(*l, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameLabelSeq {
        doa,
        spatial,
        acoustic: None,
        mask: BTreeSet::new(),
    })
}

/// Great-circle angle between two directions, in degrees.
pub fn angular_error(pred: Vec3, truth: Vec3) -> Result<f64> {
    let p = pred.normalized().ok_or(Error::ZeroVector("prediction"))?;
    let t = truth.normalized().ok_or(Error::ZeroVector("truth"))?;
    Ok(p.dot(&t).clamp(-1.0, 1.0).acos().to_degrees())
}
