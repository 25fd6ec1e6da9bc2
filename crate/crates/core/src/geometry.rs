//! Room, source position and moving-source trajectory sampling.
//!
//! Rooms follow the shoebox parameter distributions used for the impulse
//! response corpus: length U(3,6), width U(2,5), height U(3,4), source
//! coordinates U(0.5, dim) on each axis, and RT60 ~ N(0.45, 0.18) resampled
//! into a valid band. Trajectories are straight segments in an
//! array-centred frame whose start lies outside an exclusion radius and whose
//! path never enters it.

use std::ops::{Add, Mul, Sub};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Default bound on every rejection loop.
pub const DEFAULT_MAX_RETRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = other.0;
        Vec3([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

/// Closed interval of RT60 values accepted by the room sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rt60Band {
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for Rt60Band {
    fn default() -> Self {
        Self {
            min_s: 0.1,
            max_s: 1.2,
        }
    }
}

impl Rt60Band {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_s > 0.0 && self.min_s <= self.max_s && self.max_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rt60 band [{}, {}] must be a finite sub-interval of (0, inf)",
                self.min_s, self.max_s
            )));
        }
        Ok(())
    }

    pub fn contains(&self, rt60: f64) -> bool {
        (self.min_s..=self.max_s).contains(&rt60)
    }
}

/// Where the microphone array sits inside a sampled room.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MicPlacement {
    #[default]
    RoomCenter,
    /// Fixed position in room coordinates; must lie strictly inside every room.
    Fixed { xyz: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub source_xyz: Vec3,
    pub rt60_s: f64,
    pub mic_xyz: Vec3,
}

impl RoomSpec {
    pub fn volume_m3(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    /// Vector from the microphone to the source.
    pub fn source_relative(&self) -> Vec3 {
        self.source_xyz - self.mic_xyz
    }

    fn dims(&self) -> [f64; 3] {
        [self.length_m, self.width_m, self.height_m]
    }

    pub fn mic_inside(&self) -> bool {
        self.mic_xyz
            .0
            .iter()
            .zip(self.dims())
            .all(|(&c, d)| c > 0.0 && c < d)
    }
}

/// Draw a room, source position and RT60 from the shoebox distributions.
pub fn sample_room(rng: &mut SeededRng, rt60_band: Rt60Band) -> Result<RoomSpec> {
    sample_room_with(rng, rt60_band, MicPlacement::RoomCenter, DEFAULT_MAX_RETRIES)
}

pub fn sample_room_with(
    rng: &mut SeededRng,
    rt60_band: Rt60Band,
    mic: MicPlacement,
    max_retries: usize,
) -> Result<RoomSpec> {
    rt60_band.validate()?;
    let length_m = rng.uniform(3.0, 6.0);
    let width_m = rng.uniform(2.0, 5.0);
    let height_m = rng.uniform(3.0, 4.0);
    // Upper bound is the wall itself, with no margin.
    let source_xyz = Vec3::new(
        rng.uniform(0.5, length_m),
        rng.uniform(0.5, width_m),
        rng.uniform(0.5, height_m),
    );

    let normal = Normal::new(0.45, 0.18).expect("valid normal parameters");
    let mut rt60_s = None;
    for _ in 0..max_retries {
        let draw = normal.sample(rng);
        if rt60_band.contains(draw) {
            rt60_s = Some(draw);
            break;
        }
    }
    let rt60_s = rt60_s.ok_or(Error::RetriesExhausted {
        what: "rt60",
        retries: max_retries,
    })?;

    let mic_xyz = match mic {
        MicPlacement::RoomCenter => Vec3::new(length_m / 2.0, width_m / 2.0, height_m / 2.0),
        MicPlacement::Fixed { xyz } => xyz,
    };
    let room = RoomSpec {
        length_m,
        width_m,
        height_m,
        source_xyz,
        rt60_s,
        mic_xyz,
    };
    if !room.mic_inside() {
        return Err(Error::InvalidConfig(format!(
            "microphone {:?} is not strictly inside a {length_m:.3} x {width_m:.3} x {height_m:.3} room",
            mic_xyz.0
        )));
    }
    Ok(room)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLimits {
    pub max_x_m: f64,
    pub max_y_m: f64,
    pub max_z_m: f64,
    /// Exclusion radius around the array.
    pub min_dist_m: f64,
    pub max_speed_mps: f64,
}

impl Default for TrajectoryLimits {
    fn default() -> Self {
        Self {
            max_x_m: 5.0,
            max_y_m: 5.0,
            max_z_m: 2.0,
            min_dist_m: 0.5,
            max_speed_mps: 2.0,
        }
    }
}

impl TrajectoryLimits {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.max_x_m,
            self.max_y_m,
            self.max_z_m,
            self.min_dist_m,
            self.max_speed_mps,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(
                "trajectory limits must be finite and strictly positive".into(),
            ));
        }
        if self.min_dist_m >= self.max_x_m.min(self.max_y_m).min(self.max_z_m) {
            return Err(Error::InvalidConfig(
                "min_dist_m must be smaller than every max_*_m".into(),
            ));
        }
        Ok(())
    }
}

/// Straight-line source path in an array-centred frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_xyz: Vec3,
    pub end_xyz: Vec3,
    pub num_samples: usize,
    pub sample_rate_hz: u32,
}

impl Trajectory {
    pub fn length_m(&self) -> f64 {
        (self.end_xyz - self.start_xyz).norm()
    }

    /// Path length divided by clip duration `num_samples / sample_rate`.
    pub fn speed_mps(&self) -> f64 {
        self.length_m() * self.sample_rate_hz as f64 / self.num_samples as f64
    }

    /// Source position at 1-based sample `index`.
    pub fn position(&self, index: usize) -> Result<Vec3> {
        trajectory_position(self, index)
    }
}

/// Direction drawn uniformly on the unit sphere by rejection from the cube.
pub fn sample_unit_direction(rng: &mut SeededRng, max_retries: usize) -> Result<Vec3> {
    for _ in 0..max_retries {
        let d = Vec3::new(
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
        );
        let n = d.norm();
        if n <= 1.0 && n > 0.0 {
            return Ok(d * (1.0 / n));
        }
    }
    Err(Error::RetriesExhausted {
        what: "unit direction",
        retries: max_retries,
    })
}

pub fn sample_trajectory(
    num_samples: usize,
    sample_rate_hz: u32,
    limits: &TrajectoryLimits,
    rng: &mut SeededRng,
) -> Result<Trajectory> {
    sample_trajectory_with(num_samples, sample_rate_hz, limits, rng, DEFAULT_MAX_RETRIES)
}

pub fn sample_trajectory_with(
    num_samples: usize,
    sample_rate_hz: u32,
    limits: &TrajectoryLimits,
    rng: &mut SeededRng,
    max_retries: usize,
) -> Result<Trajectory> {
    if num_samples < 2 {
        return Err(Error::InvalidConfig(format!(
            "trajectory needs at least 2 samples, got {num_samples}"
        )));
    }
    if sample_rate_hz == 0 {
        return Err(Error::InvalidConfig("sample rate must be positive".into()));
    }
    limits.validate()?;

    let mut start = None;
    for _ in 0..max_retries {
        let s = Vec3::new(
            rng.uniform(-limits.max_x_m, limits.max_x_m),
            rng.uniform(-limits.max_y_m, limits.max_y_m),
            rng.uniform(-limits.max_z_m, limits.max_z_m),
        );
        if s.norm() > limits.min_dist_m {
            start = Some(s);
            break;
        }
    }
    let start = start.ok_or(Error::RetriesExhausted {
        what: "trajectory start",
        retries: max_retries,
    })?;

    let max_len = num_samples as f64 * limits.max_speed_mps / sample_rate_hz as f64;
    let length = rng.uniform(0.0, max_len);

    // The segment actually travelled must stay outside the exclusion radius.
    for _ in 0..max_retries {
        let dir = sample_unit_direction(rng, max_retries)?;
        let end = start + dir * length;
        if segment_min_distance(start, end) >= limits.min_dist_m {
            return Ok(Trajectory {
                start_xyz: start,
                end_xyz: end,
                num_samples,
                sample_rate_hz,
            });
        }
    }
    Err(Error::RetriesExhausted {
        what: "trajectory direction",
        retries: max_retries,
    })
}

/// `g_i = e (i-1)/(L-1) + s (L-i)/(L-1)` for 1-based `i`.
pub fn trajectory_position(traj: &Trajectory, index: usize) -> Result<Vec3> {
    let len = traj.num_samples;
    if len < 2 || index < 1 || index > len {
        return Err(Error::IndexOutOfRange { index, len });
    }
    let denom = (len - 1) as f64;
    let toward_end = (index - 1) as f64 / denom;
    let toward_start = (len - index) as f64 / denom;
    Ok(traj.end_xyz * toward_end + traj.start_xyz * toward_start)
}

/// Minimum distance from the origin to the closed segment `[s, e]`.
pub fn segment_min_distance(s: Vec3, e: Vec3) -> f64 {
    let d = e - s;
    let len2 = d.dot(&d);
    if len2 == 0.0 {
        return s.norm();
    }
    let t = (-s.dot(&d) / len2).clamp(0.0, 1.0);
    (s + d * t).norm()
}
