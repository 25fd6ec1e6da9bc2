//! Spatialisation strategies and utterance mixing.
//!
//! A [`Spatialiser`] turns mono audio into FOA plus per-sample DOA labels.
//! Strategies are registered by name in a [`SpatialiserRegistry`]; the
//! augmentation config names one strategy for the stationary branch (taken
//! with probability `p_r`) and one for the moving branch.
//!
//! Mixing follows the in-batch protocol: with probability `p_m` an
//! interferer is added; it is a spatialised noise clip with probability
//! `p_n`, otherwise another utterance of the same batch cut to at most half
//! the primary length. Levels are measured on the W channel over the
//! overlap region only.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{encode_moving, encode_stationary_direction, DoaSampleLabels, FoaSignal, MonoSignal};
use crate::geometry::{sample_trajectory, sample_unit_direction, Trajectory, TrajectoryLimits, Vec3, DEFAULT_MAX_RETRIES};
use crate::ir::{convolve_foa_with, ConvolutionEngine, FftOverlapAdd, IrSource, StatisticalIrSource};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Probability of the stationary (reverberant) branch.
    pub p_r: f64,
    /// Probability of mixing in an interferer.
    pub p_m: f64,
    /// Probability that an interferer is noise rather than in-batch speech.
    pub p_n: f64,
    pub snr_range_db: [f64; 2],
    pub stationary_strategy: String,
    pub moving_strategy: String,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_r: 0.5,
            p_m: 0.3,
            p_n: 0.5,
            snr_range_db: [0.0, 20.0],
            stationary_strategy: StationaryReverberant::NAME.into(),
            moving_strategy: MovingFreeField::NAME.into(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_r", self.p_r), ("p_m", self.p_m), ("p_n", self.p_n)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("snr range [{lo}, {hi}] is invalid")));
        }
        Ok(())
    }
}

/// How an utterance was spatialised; serialised into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum Spatialisation {
    Stationary {
        strategy: String,
        ir_id: String,
        direction: Vec3,
        rt60_s: Option<f64>,
    },
    Moving {
        strategy: String,
        trajectory: Trajectory,
    },
}

impl Spatialisation {
    pub fn branch(&self) -> &'static str {
        match self {
            Spatialisation::Stationary { .. } => "stationary",
            Spatialisation::Moving { .. } => "moving",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spatialised {
    pub foa: FoaSignal,
    pub labels: DoaSampleLabels,
    pub provenance: Spatialisation,
}

/// Shared inputs for the spatialisation strategies.
#[derive(Clone)]
pub struct SpatialContext {
    pub ir_source: Arc<dyn IrSource>,
    pub limits: TrajectoryLimits,
    pub engine: Arc<dyn ConvolutionEngine>,
}

impl Default for SpatialContext {
    fn default() -> Self {
        Self {
            ir_source: Arc::new(StatisticalIrSource::default()),
            limits: TrajectoryLimits::default(),
            engine: Arc::new(FftOverlapAdd::default()),
        }
    }
}

pub trait Spatialiser: Send + Sync {
    fn name(&self) -> &'static str;
    fn spatialise(&self, mono: &MonoSignal, ctx: &SpatialContext, rng: &mut SeededRng) -> Result<Spatialised>;
}

/// Reverberant stationary source: convolve with a drawn FOA impulse response.
#[derive(Debug, Default)]
pub struct StationaryReverberant;

impl StationaryReverberant {
    pub const NAME: &'static str = "stationary";
}

impl Spatialiser for StationaryReverberant {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn spatialise(&self, mono: &MonoSignal, ctx: &SpatialContext, rng: &mut SeededRng) -> Result<Spatialised> {
        let drawn = ctx.ir_source.draw(rng)?;
        let (foa, labels) = convolve_foa_with(ctx.engine.as_ref(), mono, &drawn.ir)?;
        Ok(Spatialised {
            foa,
            labels,
            provenance: Spatialisation::Stationary {
                strategy: Self::NAME.into(),
                ir_id: drawn.id,
                direction: drawn.ir.direction_label,
                rt60_s: Some(drawn.ir.rt60_s),
            },
        })
    }
}

/// Free-field source on a random straight trajectory.
#[derive(Debug, Default)]
pub struct MovingFreeField;

impl MovingFreeField {
    pub const NAME: &'static str = "moving";
}

impl Spatialiser for MovingFreeField {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn spatialise(&self, mono: &MonoSignal, ctx: &SpatialContext, rng: &mut SeededRng) -> Result<Spatialised> {
        let trajectory = sample_trajectory(mono.len(), mono.sample_rate_hz, &ctx.limits, rng)?;
        let (foa, labels) = encode_moving(mono, &trajectory)?;
        Ok(Spatialised {
            foa,
            labels,
            provenance: Spatialisation::Moving {
                strategy: Self::NAME.into(),
                trajectory,
            },
        })
    }
}

/// Free-field source fixed at a uniformly random direction, no distance
/// attenuation. Not used by the default configuration.
#[derive(Debug, Default)]
pub struct StaticFreeField;

impl StaticFreeField {
    pub const NAME: &'static str = "static-free-field";
}

impl Spatialiser for StaticFreeField {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn spatialise(&self, mono: &MonoSignal, _ctx: &SpatialContext, rng: &mut SeededRng) -> Result<Spatialised> {
        let direction = sample_unit_direction(rng, DEFAULT_MAX_RETRIES)?;
        let foa = encode_stationary_direction(mono, direction)?;
        Ok(Spatialised {
            foa,
            labels: DoaSampleLabels::constant(direction, mono.len()),
            provenance: Spatialisation::Stationary {
                strategy: Self::NAME.into(),
                ir_id: "free-field".into(),
                direction,
                rt60_s: None,
            },
        })
    }
}

#[derive(Clone)]
pub struct SpatialiserRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn Spatialiser>>,
}

impl Default for SpatialiserRegistry {
    fn default() -> Self {
        let mut reg = Self {
            strategies: BTreeMap::new(),
        };
        reg.register(Arc::new(StationaryReverberant));
        reg.register(Arc::new(MovingFreeField));
        reg.register(Arc::new(StaticFreeField));
        reg
    }
}

impl SpatialiserRegistry {
    pub fn register(&mut self, strategy: Arc<dyn Spatialiser>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Spatialiser>> {
        self.strategies
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }
}

/// Pick the stationary branch with probability `p_r`, else the moving one.
pub fn spatialise_utterance(
    mono: &MonoSignal,
    cfg: &AugmentConfig,
    registry: &SpatialiserRegistry,
    ctx: &SpatialContext,
    rng: &mut SeededRng,
) -> Result<Spatialised> {
    let name = if rng.bernoulli(cfg.p_r) {
        &cfg.stationary_strategy
    } else {
        &cfg.moving_strategy
    };
    registry.get(name)?.spatialise(mono, ctx, rng)
}

/// `20 log10(rms(W[span]))`, or negative infinity for silence.
pub fn measure_level_db(sig: &FoaSignal, span: Range<usize>) -> Result<f64> {
    if span.is_empty() || span.end > sig.len() {
        return Err(Error::EmptySpan);
    }
    let n = span.len() as f64;
    let energy: f64 = sig.w()[span].iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (energy / n).log10())
}

#[derive(Debug, Clone)]
pub struct MixResult {
    pub signal: FoaSignal,
    /// Gain applied to every interferer channel.
    pub scale: f64,
}

/// Add `interferer` at `offset`, scaled so that the W-channel level ratio
/// over the overlap equals `snr_db`. A silent primary overlap yields a zero
/// gain.
pub fn mix_at_snr(primary: &FoaSignal, interferer: &FoaSignal, snr_db: f64, offset: usize) -> Result<MixResult> {
    let len = interferer.len();
    if len == 0 || offset + len > primary.len() {
        return Err(Error::OffsetOutOfBounds {
            offset,
            len,
            primary_len: primary.len(),
        });
    }
    let interferer_db = measure_level_db(interferer, 0..len)?;
    if interferer_db == f64::NEG_INFINITY {
        return Err(Error::SilentInterferer);
    }
    let primary_db = measure_level_db(primary, offset..offset + len)?;
    let scale = if primary_db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf((primary_db - interferer_db - snr_db) / 20.0)
    };
    let mut signal = primary.clone();
    for (out, inp) in signal.channels.iter_mut().zip(&interferer.channels) {
        for (o, v) in out[offset..offset + len].iter_mut().zip(inp) {
            *o += scale * v;
        }
    }
    Ok(MixResult { signal, scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseClip {
    pub id: String,
    pub signal: MonoSignal,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoisePool {
    pub clips: Vec<NoiseClip>,
}

impl NoisePool {
    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// A spatialised utterance that can serve as in-batch secondary speech.
#[derive(Debug, Clone, Copy)]
pub struct BatchEntry<'a> {
    pub id: &'a str,
    pub signal: &'a FoaSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfererKind {
    Noise,
    Speech,
}

#[derive(Debug, Clone)]
pub struct Interferer {
    pub kind: InterfererKind,
    pub id: String,
    pub signal: FoaSignal,
    pub offset: usize,
    /// Spatialisation applied to noise; speech is already spatial.
    pub spatialisation: Option<Spatialisation>,
}

/// Draw an interferer for a primary of `primary_len` samples, or `None`
/// when no mixing happens. Entries of `batch` with id `exclude_id` are never
/// chosen.
#[allow(clippy::too_many_arguments)]
pub fn choose_and_build_interferer(
    batch: &[BatchEntry<'_>],
    exclude_id: &str,
    noise_pool: &NoisePool,
    primary_len: usize,
    cfg: &AugmentConfig,
    registry: &SpatialiserRegistry,
    ctx: &SpatialContext,
    rng: &mut SeededRng,
) -> Result<Option<Interferer>> {
    cfg.validate()?;
    if !rng.bernoulli(cfg.p_m) {
        return Ok(None);
    }
    if rng.bernoulli(cfg.p_n) {
        if noise_pool.is_empty() {
            return Err(Error::EmptyPool("noise pool"));
        }
        let clip = &noise_pool.clips[rng.index(noise_pool.clips.len())];
        let (samples, offset) = if clip.signal.len() >= primary_len {
            let start = rng.index(clip.signal.len() - primary_len + 1);
            (clip.signal.samples[start..start + primary_len].to_vec(), 0)
        } else {
            let offset = rng.index(primary_len - clip.signal.len() + 1);
            (clip.signal.samples.clone(), offset)
        };
        if samples.len() < 2 {
            return Ok(None);
        }
        let mono = MonoSignal {
            samples,
            sample_rate_hz: clip.signal.sample_rate_hz,
        };
        let spatial = spatialise_utterance(&mono, cfg, registry, ctx, rng)?;
        return Ok(Some(Interferer {
            kind: InterfererKind::Noise,
            id: clip.id.clone(),
            signal: spatial.foa,
            offset,
            spatialisation: Some(spatial.provenance),
        }));
    }

    let candidates: Vec<&BatchEntry> = batch.iter().filter(|e| e.id != exclude_id).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyPool("batch"));
    }
    let entry = candidates[rng.index(candidates.len())];
    let max_len = entry.signal.len().min(primary_len / 2);
    if max_len == 0 {
        return Ok(None);
    }
    let len = 1 + rng.index(max_len);
    let offset = rng.index(primary_len - len + 1);
    let signal = FoaSignal {
        channels: std::array::from_fn(|c| entry.signal.channels[c][..len].to_vec()),
        sample_rate_hz: entry.signal.sample_rate_hz,
    };
    Ok(Some(Interferer {
        kind: InterfererKind::Speech,
        id: entry.id.to_string(),
        signal,
        offset,
        spatialisation: None,
    }))
}

/// Mixing outcome recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRecord {
    pub kind: InterfererKind,
    pub id: String,
    pub offset: usize,
    pub length: usize,
    pub snr_db: f64,
    pub scale: f64,
    pub spatialisation: Option<Spatialisation>,
}

/// Run the mixing decision for one primary and apply it.
#[allow(clippy::too_many_arguments)]
pub fn augment_utterance(
    primary: &FoaSignal,
    primary_id: &str,
    batch: &[BatchEntry<'_>],
    noise_pool: &NoisePool,
    cfg: &AugmentConfig,
    registry: &SpatialiserRegistry,
    ctx: &SpatialContext,
    rng: &mut SeededRng,
) -> Result<(FoaSignal, Option<MixRecord>)> {
    let Some(interferer) =
        choose_and_build_interferer(batch, primary_id, noise_pool, primary.len(), cfg, registry, ctx, rng)?
    else {
        return Ok((primary.clone(), None));
    };
    let [lo, hi] = cfg.snr_range_db;
    let snr_db = rng.uniform(lo, hi);
    match mix_at_snr(primary, &interferer.signal, snr_db, interferer.offset) {
        Ok(mixed) => Ok((
            mixed.signal,
            Some(MixRecord {
                kind: interferer.kind,
                id: interferer.id,
                offset: interferer.offset,
                length: interferer.signal.len(),
                snr_db,
                scale: mixed.scale,
                spatialisation: interferer.spatialisation,
            }),
        )),
        Err(Error::SilentInterferer) => {
            log::debug!("{primary_id}: interferer {} is silent, not mixed", interferer.id);
            Ok((primary.clone(), None))
        }
        Err(e) => Err(e),
    }
}
