//! Statistical FOA room impulse responses and reverberant spatialisation.
//!
//! An IR is a direct-path impulse encoded toward the source, followed after a
//! short gap by a decorrelated Gaussian diffuse tail with an exponential
//! energy envelope that falls 60 dB over RT60. The tail's total W-channel
//! energy is `(r / r_c)^2` times the direct energy, where `r_c` is the
//! critical distance `0.057 sqrt(V / RT60)`.

pub mod conv;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{DoaSampleLabels, FoaSignal, MonoSignal};
use crate::geometry::{sample_room_with, MicPlacement, RoomSpec, Rt60Band, Vec3, DEFAULT_MAX_RETRIES};
use crate::rng::SeededRng;
use crate::SAMPLE_RATE_HZ;

pub use conv::{fast_convolve, ConvolutionEngine, ConvolutionRegistry, DirectConvolution, FftOverlapAdd};

pub const SPEED_OF_SOUND_MPS: f64 = 343.0;

/// `ln(10^6)`: energy decay exponent for 60 dB.
const DECAY_60DB: f64 = 13.815_510_557_964_274;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrModel {
    /// Gap between the direct path and the onset of the diffuse tail.
    pub tail_gap_s: f64,
    /// Distance clamp for the direct-path amplitude `1 / max(r, clamp)`.
    pub min_distance_m: f64,
    /// Total IR length as a multiple of RT60.
    pub length_rt60: f64,
}

impl Default for IrModel {
    fn default() -> Self {
        Self {
            tail_gap_s: 0.002,
            min_distance_m: 0.1,
            length_rt60: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoaImpulseResponse {
    pub channels: [Vec<f64>; 4],
    pub sample_rate_hz: u32,
    /// Unit vector from the microphone toward the source.
    pub direction_label: Vec3,
    pub rt60_s: f64,
    /// Absent for IRs loaded from third-party archives without room metadata.
    pub room: Option<RoomSpec>,
}

impl FoaImpulseResponse {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sample index of the direct-path impulse for a source at distance `r`.
pub fn direct_path_index(distance_m: f64, sample_rate_hz: u32) -> usize {
    (sample_rate_hz as f64 * distance_m / SPEED_OF_SOUND_MPS).round() as usize
}

pub fn critical_distance_m(room: &RoomSpec) -> f64 {
    0.057 * (room.volume_m3() / room.rt60_s).sqrt()
}

pub fn generate_ir(room: &RoomSpec, rng: &mut SeededRng) -> Result<FoaImpulseResponse> {
    generate_ir_with(room, &IrModel::default(), SAMPLE_RATE_HZ, rng)
}

pub fn generate_ir_with(
    room: &RoomSpec,
    model: &IrModel,
    sample_rate_hz: u32,
    rng: &mut SeededRng,
) -> Result<FoaImpulseResponse> {
    if !(room.rt60_s > 0.0 && room.rt60_s.is_finite()) {
        return Err(Error::InvalidConfig(format!("rt60 {} must be positive", room.rt60_s)));
    }
    let rel = room.source_relative();
    let r = rel.norm();
    if r == 0.0 {
        return Err(Error::SourceAtMic);
    }
    let l = rel * (1.0 / r);
    let fs = sample_rate_hz as f64;

    let direct_idx = direct_path_index(r, sample_rate_hz);
    let tail_start = direct_idx + (model.tail_gap_s * fs).round() as usize;
    let len = ((model.length_rt60 * room.rt60_s * fs).ceil() as usize).max(tail_start + 1);

    let amp = 1.0 / r.max(model.min_distance_m);
    let mut channels: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len]);
    let gains = [1.0, l.x(), l.y(), l.z()];

    let mut tail: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len - tail_start]);
    let amp_decay = DECAY_60DB / 2.0 / room.rt60_s;
    let component = 1.0 / 3f64.sqrt();
    for n in 0..len - tail_start {
        let env = (-amp_decay * n as f64 / fs).exp();
        for (c, ch) in tail.iter_mut().enumerate() {
            let g: f64 = StandardNormal.sample(rng);
            ch[n] = g * env * if c == 0 { 1.0 } else { component };
        }
    }
    let tail_energy: f64 = tail[0].iter().map(|v| v * v).sum();
    let target = (r / critical_distance_m(room)).powi(2) * amp * amp;
    let k = if tail_energy > 0.0 { (target / tail_energy).sqrt() } else { 0.0 };

    for (c, ch) in channels.iter_mut().enumerate() {
        ch[direct_idx] += amp * gains[c];
        for (slot, v) in ch[tail_start..].iter_mut().zip(&tail[c]) {
            *slot += v * k;
        }
    }

    Ok(FoaImpulseResponse {
        channels,
        sample_rate_hz,
        direction_label: l,
        rt60_s: room.rt60_s,
        room: Some(*room),
    })
}

/// T60 from Schroeder backward integration: a least-squares line through
/// the energy decay curve between -5 dB and -35 dB, extrapolated to -60 dB.
/// Returns `None` if the curve never reaches -35 dB.
pub fn schroeder_t60(ir: &[f64], sample_rate_hz: u32) -> Option<f64> {
    let mut edc = vec![0.0; ir.len()];
    let mut acc = 0.0;
    for (slot, v) in edc.iter_mut().zip(ir).rev() {
        acc += v * v;
        *slot = acc;
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let fs = sample_rate_hz as f64;
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut reached = false;
    for (i, e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if db < -35.0 {
            reached = true;
            break;
        }
        if db <= -5.0 {
            let t = i as f64 / fs;
            n += 1.0;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
        }
    }
    if !reached || n < 2.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope < 0.0).then(|| -60.0 / slope)
}

/// Convolve mono speech with each IR channel, truncated to the input length.
pub fn convolve_foa(mono: &MonoSignal, ir: &FoaImpulseResponse) -> Result<(FoaSignal, DoaSampleLabels)> {
    convolve_foa_with(&FftOverlapAdd::default(), mono, ir)
}

pub fn convolve_foa_with(
    engine: &dyn ConvolutionEngine,
    mono: &MonoSignal,
    ir: &FoaImpulseResponse,
) -> Result<(FoaSignal, DoaSampleLabels)> {
    if mono.sample_rate_hz != ir.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            expected: ir.sample_rate_hz,
            actual: mono.sample_rate_hz,
        });
    }
    let kernels: Vec<&[f64]> = ir.channels.iter().map(Vec::as_slice).collect();
    let outs = engine.convolve_many(&mono.samples, &kernels, Some(mono.len()));
    let channels: [Vec<f64>; 4] = outs.try_into().expect("four kernels in, four channels out");
    let signal = FoaSignal::from_channels(channels, mono.sample_rate_hz)?;
    Ok((signal, DoaSampleLabels::constant(ir.direction_label, mono.len())))
}

/// An IR together with the identifier recorded in provenance.
#[derive(Debug, Clone)]
pub struct DrawnIr {
    pub id: String,
    pub ir: FoaImpulseResponse,
}

/// Somewhere to draw impulse responses from.
pub trait IrSource: Send + Sync {
    fn name(&self) -> &'static str;
    fn draw(&self, rng: &mut SeededRng) -> Result<DrawnIr>;
}

/// Generates a fresh room and IR for every draw.
#[derive(Debug, Clone, Default)]
pub struct StatisticalIrSource {
    pub rt60_band: Rt60Band,
    pub mic: MicPlacement,
    pub model: IrModel,
}

impl IrSource for StatisticalIrSource {
    fn name(&self) -> &'static str {
        "statistical"
    }

    fn draw(&self, rng: &mut SeededRng) -> Result<DrawnIr> {
        let seed = rng.next_seed();
        let mut local = SeededRng::new(seed);
        let room = sample_room_with(&mut local, self.rt60_band, self.mic, DEFAULT_MAX_RETRIES)?;
        let ir = generate_ir_with(&room, &self.model, SAMPLE_RATE_HZ, &mut local)?;
        Ok(DrawnIr {
            id: format!("gen-{seed:016x}"),
            ir,
        })
    }
}
