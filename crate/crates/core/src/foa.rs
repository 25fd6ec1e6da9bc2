//! First-order ambisonics signals and free-field encoding.
//!
//! Channels are ordered W, X, Y, Z with gains `(1, l_x, l_y, l_z)` for a
//! unit direction `l`. No SN3D/N3D renormalisation is applied.

use crate::error::{Error, Result};
use crate::geometry::{trajectory_position, Trajectory, Vec3};
use crate::SAMPLE_RATE_HZ;

/// Tolerance on `||l|| == 1` for directions passed in by callers.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MonoSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl MonoSignal {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Four equal-length channels, W X Y Z.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaSignal {
    pub channels: [Vec<f64>; 4],
    pub sample_rate_hz: u32,
}

impl FoaSignal {
    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        Self {
            channels: std::array::from_fn(|_| vec![0.0; len]),
            sample_rate_hz,
        }
    }

    pub fn from_channels(channels: [Vec<f64>; 4], sample_rate_hz: u32) -> Result<Self> {
        let len = channels[0].len();
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: bad.len(),
            });
        }
        Ok(Self {
            channels,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn w(&self) -> &[f64] {
        &self.channels[0]
    }

    pub fn x(&self) -> &[f64] {
        &self.channels[1]
    }

    pub fn y(&self) -> &[f64] {
        &self.channels[2]
    }

    pub fn z(&self) -> &[f64] {
        &self.channels[3]
    }

    pub fn scaled(&self, k: f64) -> FoaSignal {
        FoaSignal {
            channels: std::array::from_fn(|c| self.channels[c].iter().map(|v| v * k).collect()),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Per-sample unit direction of arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaSampleLabels(pub Vec<Vec3>);

impl DoaSampleLabels {
    pub fn constant(direction: Vec3, len: usize) -> Self {
        Self(vec![direction; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn doa_from_position(g: Vec3) -> Result<Vec3> {
    g.normalized().ok_or(Error::ZeroVector("source position"))
}

pub(crate) fn check_unit(l: Vec3) -> Result<()> {
    let n = l.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NotUnit(n));
    }
    Ok(())
}

/// Free-field moving source: `a'_i = a_i d_min / ||g_i|| (1, l_i)`.
pub fn encode_moving(mono: &MonoSignal, traj: &Trajectory) -> Result<(FoaSignal, DoaSampleLabels)> {
    if mono.len() != traj.num_samples {
        return Err(Error::LengthMismatch {
            expected: traj.num_samples,
            actual: mono.len(),
        });
    }
    if mono.sample_rate_hz != traj.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            expected: traj.sample_rate_hz,
            actual: mono.sample_rate_hz,
        });
    }
    let positions = (1..=traj.num_samples)
        .map(|i| trajectory_position(traj, i))
        .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = positions.iter().map(Vec3::norm).collect();
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    if !(d_min > 0.0) {
        return Err(Error::ZeroVector("trajectory passes through the array"));
    }

    let mut out = FoaSignal::zeros(mono.len(), mono.sample_rate_hz);
    let mut labels = Vec::with_capacity(mono.len());
    for (i, (g, dist)) in positions.iter().zip(&distances).enumerate() {
        let l = *g * (1.0 / dist);
        let w = mono.samples[i] * d_min / dist;
        out.channels[0][i] = w;
        out.channels[1][i] = w * l.x();
        out.channels[2][i] = w * l.y();
        out.channels[3][i] = w * l.z();
        labels.push(l);
    }
    Ok((out, DoaSampleLabels(labels)))
}

pub fn encode_stationary_direction(mono: &MonoSignal, l: Vec3) -> Result<FoaSignal> {
    check_unit(l)?;
    let gains = [1.0, l.x(), l.y(), l.z()];
    Ok(FoaSignal {
        channels: std::array::from_fn(|c| mono.samples.iter().map(|a| a * gains[c]).collect()),
        sample_rate_hz: mono.sample_rate_hz,
    })
}
