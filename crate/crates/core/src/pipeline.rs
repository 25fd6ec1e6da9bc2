//! Batch orchestration: corpus in, spatialised/mixed/labelled dataset out.
//!
//! Determinism does not depend on scheduling. Each item's seed is
//! `derive_seed(master_seed, id)`, and the in-batch mixing groups are a
//! seed-derived partition of the plan fixed before any work starts. Groups
//! run in parallel; within a group every member is spatialised first, then
//! each member draws its interferer from its own group.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_utterance, spatialise_utterance, BatchEntry, MixRecord, NoisePool, SpatialContext, Spatialisation, SpatialiserRegistry};
use crate::dataio::config::{Config, IrSourceKind};
use crate::dataio::ir_archive::ArchiveIrSource;
use crate::dataio::labels::{write_labels, LabelFile};
use crate::dataio::manifest::{CorpusEntry, ItemStatus, Manifest, ManifestItem, Stage};
use crate::dataio::wav::{read_foa_wav, read_mono_wav, write_foa_wav};
use crate::error::{Error, Result};
use crate::foa::{doa_from_position, DoaSampleLabels, FoaSignal};
use crate::geometry::trajectory_position;
use crate::ir::{ConvolutionRegistry, IrSource, StatisticalIrSource};
use crate::labels::{frame_labels, FrameLabelSeq};
use crate::rng::{derive_seed, SeededRng};
use crate::SAMPLE_RATE_HZ;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub id: String,
    pub source: PathBuf,
    pub seed: u64,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobPlan {
    pub items: Vec<WorkItem>,
    pub workers: usize,
    pub config: Config,
}

impl JobPlan {
    /// Plan a run. `workers == 0` means one per available core; it only
    /// affects scheduling, never output.
    pub fn new(corpus: Vec<CorpusEntry>, config: Config, workers: usize) -> Result<Self> {
        config.validate()?;
        let groups = assign_groups(corpus.len(), config.pipeline.group_size, config.seed);
        let items = corpus
            .into_iter()
            .zip(groups)
            .map(|(e, group)| WorkItem {
                seed: derive_seed(config.seed, &e.id),
                id: e.id,
                source: e.path,
                group,
            })
            .collect();
        Ok(Self { items, workers, config })
    }

    /// Item indices per group, each in plan order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        group_members(self.items.iter().map(|i| i.group))
    }
}

fn group_members(groups: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    by_group.into_values().collect()
}

/// Group index for each of `n` items: a seeded shuffle of `0..n` cut into
/// consecutive chunks of `group_size`.
pub fn assign_groups(n: usize, group_size: usize, master_seed: u64) -> Vec<usize> {
    let mut rng = SeededRng::new(derive_seed(master_seed, "grouping"));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.index(i + 1));
    }
    let mut groups = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        groups[item] = pos / group_size.max(1);
    }
    groups
}

/// Strategy registries and data sources resolved from a [`Config`].
#[derive(Clone)]
pub struct Resources {
    pub registry: SpatialiserRegistry,
    pub ctx: SpatialContext,
    pub noise: NoisePool,
    pub acoustic: Option<BTreeMap<String, Vec<usize>>>,
}

impl Resources {
    pub fn from_config(config: &Config) -> Result<Self> {
        let ir_source: Arc<dyn IrSource> = match config.ir.source {
            IrSourceKind::Statistical => Arc::new(StatisticalIrSource {
                rt60_band: config.ir.rt60_band,
                mic: config.ir.mic,
                model: config.ir.model,
            }),
            IrSourceKind::Archive => {
                let dir = config.ir.archive_dir.as_ref().expect("validated");
                Arc::new(ArchiveIrSource::open(dir, &config.ir.fields)?)
            }
        };
        let registry = SpatialiserRegistry::default();
        registry.get(&config.augment.stationary_strategy)?;
        registry.get(&config.augment.moving_strategy)?;
        Ok(Self {
            registry,
            ctx: SpatialContext {
                ir_source,
                limits: config.trajectory,
                engine: ConvolutionRegistry::default().get(&config.pipeline.convolution)?,
            },
            noise: NoisePool::default(),
            acoustic: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stage: Stage,
    pub items: usize,
    pub failed: usize,
    pub mixed: usize,
    pub audio_seconds: f64,
    pub wall_seconds: f64,
    pub items_per_second: f64,
    /// Audio seconds produced per wall-clock second.
    pub realtime_factor: f64,
    pub manifest: PathBuf,
}

impl RunSummary {
    fn new(stage: Stage, manifest: &Manifest, path: PathBuf, started: Instant) -> Self {
        let wall = started.elapsed().as_secs_f64().max(1e-9);
        let samples: usize = manifest.items.iter().filter(|i| i.is_ok()).filter_map(|i| i.num_samples).sum();
        let audio_seconds = samples as f64 / SAMPLE_RATE_HZ as f64;
        Self {
            stage,
            items: manifest.items.len(),
            failed: manifest.items.iter().filter(|i| !i.is_ok()).count(),
            mixed: manifest.items.iter().filter(|i| i.mixing.is_some()).count(),
            audio_seconds,
            wall_seconds: wall,
            items_per_second: manifest.items.len() as f64 / wall,
            realtime_factor: audio_seconds / wall,
            manifest: path,
        }
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(Error::InvalidConfig(format!("utterance id `{id}` is not a safe file name")));
    }
    Ok(())
}

fn audio_rel(id: &str) -> String {
    format!("audio/{id}.wav")
}

fn labels_rel(id: &str) -> String {
    format!("labels/{id}.json")
}

fn build_labels(
    id: &str,
    samples: &DoaSampleLabels,
    config: &Config,
    acoustic: Option<&BTreeMap<String, Vec<usize>>>,
) -> Result<FrameLabelSeq> {
    let mut seq = frame_labels(samples, &config.quantizer)?;
    if let Some(ids) = acoustic.and_then(|m| m.get(id)) {
        if ids.len() != seq.frames() {
            return Err(Error::LengthMismatch {
                expected: seq.frames(),
                actual: ids.len(),
            });
        }
        seq.acoustic = Some(ids.clone());
    }
    Ok(seq)
}

fn write_outputs(out_dir: &Path, id: &str, foa: &FoaSignal, labels: &FrameLabelSeq, config: &Config) -> Result<()> {
    write_foa_wav(foa, &out_dir.join(audio_rel(id)))?;
    write_labels(&LabelFile::from_frames(labels, config.quantizer), &out_dir.join(labels_rel(id)))
}

fn failed(item: &WorkItem, master_seed: u64, err: &Error) -> ManifestItem {
    ManifestItem {
        id: item.id.clone(),
        source: item.source.display().to_string(),
        status: ItemStatus::Failed,
        error: Some(format!("{}: {err}", err.kind())),
        audio: None,
        labels: None,
        num_samples: None,
        spatialisation: None,
        mixing: None,
        master_seed,
        item_seed: item.seed,
        group: item.group,
    }
}

struct Spatialised {
    foa: FoaSignal,
    labels: DoaSampleLabels,
    provenance: Spatialisation,
}

fn mixing_enabled(config: &Config, res: &Resources) -> bool {
    config.augment.p_m > 0.0 && (config.augment.p_n == 0.0 || !res.noise.is_empty())
}

/// Mixing for one group: every member draws from its own rng stream and
/// sees the group's other successful members as its batch.
fn mix_group<'a>(
    members: &[(&'a WorkItem, &'a FoaSignal)],
    config: &Config,
    res: &Resources,
) -> Vec<Result<(FoaSignal, Option<MixRecord>)>> {
    let batch: Vec<BatchEntry> = members
        .iter()
        .map(|(item, foa)| BatchEntry {
            id: &item.id,
            signal: foa,
        })
        .collect();
    members
        .par_iter()
        .map(|(item, foa)| {
            let mut rng = SeededRng::new(item.seed).child("mix");
            augment_utterance(foa, &item.id, &batch, &res.noise, &config.augment, &res.registry, &res.ctx, &mut rng)
        })
        .collect()
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Spatialise, optionally mix, and label every item of `plan` into
/// `out_dir`. Mixing runs when `p_m > 0` and the resources can supply the
/// required interferers (noise is needed unless `p_n == 0`).
pub fn run(plan: &JobPlan, res: &Resources, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let config = &plan.config;
    let master_seed = config.seed;
    let do_mix = mixing_enabled(config, res);
    if config.augment.p_m > 0.0 && !do_mix {
        log::info!("no noise pool supplied, mixing disabled for this run");
    }
    let mut effective = config.clone();
    if !do_mix {
        effective.augment.p_m = 0.0;
    }

    let groups = plan.groups();
    let pool = thread_pool(plan.workers)?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = plan.items.len();

    let mut items: Vec<(usize, ManifestItem)> = pool.install(|| {
        groups
            .par_iter()
            .flat_map_iter(|members| {
                let spatial: Vec<Result<Spatialised>> = members
                    .par_iter()
                    .map(|&i| {
                        let item = &plan.items[i];
                        check_id(&item.id)?;
                        let mono = read_mono_wav(&item.source)?;
                        let mut rng = SeededRng::new(item.seed).child("spatialise");
                        let s = spatialise_utterance(&mono, &effective.augment, &res.registry, &res.ctx, &mut rng)?;
                        Ok(Spatialised {
                            foa: s.foa,
                            labels: s.labels,
                            provenance: s.provenance,
                        })
                    })
                    .collect();

                let ok: Vec<(usize, &Spatialised)> = members
                    .iter()
                    .zip(&spatial)
                    .filter_map(|(&i, s)| s.as_ref().ok().map(|s| (i, s)))
                    .collect();
                let mixed = if do_mix {
                    let pairs: Vec<(&WorkItem, &FoaSignal)> =
                        ok.iter().map(|(i, s)| (&plan.items[*i], &s.foa)).collect();
                    mix_group(&pairs, &effective, res)
                } else {
                    ok.iter().map(|(_, s)| Ok((s.foa.clone(), None))).collect()
                };
                let mut mixed: BTreeMap<usize, Result<(FoaSignal, Option<MixRecord>)>> =
                    ok.iter().map(|(i, _)| *i).zip(mixed).collect();

                let results: Vec<(usize, ManifestItem)> = members
                    .iter()
                    .zip(spatial)
                    .map(|(&i, s)| {
                        let item = &plan.items[i];
                        let record = s.and_then(|s| {
                            let (foa, mixing) = mixed.remove(&i).expect("every success was mixed")?;
                            let labels = build_labels(&item.id, &s.labels, &effective, res.acoustic.as_ref())?;
                            write_outputs(out_dir, &item.id, &foa, &labels, &effective)?;
                            Ok(ManifestItem {
                                id: item.id.clone(),
                                source: item.source.display().to_string(),
                                status: ItemStatus::Ok,
                                error: None,
                                audio: Some(audio_rel(&item.id)),
                                labels: Some(labels_rel(&item.id)),
                                num_samples: Some(foa.len()),
                                spatialisation: Some(s.provenance),
                                mixing,
                                master_seed,
                                item_seed: item.seed,
                                group: item.group,
                            })
                        });
                        let record = record.unwrap_or_else(|e| {
                            log::warn!("{}: {e}", item.id);
                            failed(item, master_seed, &e)
                        });
                        let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                        if n.is_multiple_of(100) || n == total {
                            log::info!("{n}/{total} items");
                        }
                        (i, record)
                    })
                    .collect();
                results
            })
            .collect()
    });
    items.sort_by_key(|(i, _)| *i);

    let noise_ids = if do_mix {
        res.noise.clips.iter().map(|c| c.id.clone()).collect()
    } else {
        Vec::new()
    };
    let mut manifest = Manifest::new(Stage::Spatialise, &effective, noise_ids, None);
    manifest.items = items.into_iter().map(|(_, m)| m).collect();
    let path = out_dir.join("manifest.jsonl");
    manifest.write(&path)?;
    Ok(RunSummary::new(Stage::Spatialise, &manifest, path, started))
}

/// Apply the mixing stage to an existing (spatialised) dataset, writing a
/// new dataset to `out_dir`. Groups are taken from the input manifest.
pub fn run_mix(manifest_path: &Path, config: &Config, res: &Resources, out_dir: &Path, workers: usize) -> Result<RunSummary> {
    let started = Instant::now();
    config.validate()?;
    let input = Manifest::read(manifest_path)?;
    let in_dir = manifest_path.parent().unwrap_or(Path::new("."));

    let items: Vec<WorkItem> = input
        .items
        .iter()
        .map(|m| WorkItem {
            id: m.id.clone(),
            source: PathBuf::from(&m.source),
            seed: m.item_seed,
            group: m.group,
        })
        .collect();
    let groups = group_members(items.iter().map(|i| i.group));
    let pool = thread_pool(workers)?;

    let mut out: Vec<(usize, ManifestItem)> = pool.install(|| {
        groups
            .par_iter()
            .flat_map_iter(|members| {
                let loaded: Vec<Result<FoaSignal>> = members
                    .par_iter()
                    .map(|&i| {
                        let m = &input.items[i];
                        if !m.is_ok() {
                            return Err(Error::InvalidConfig(m.error.clone().unwrap_or_default()));
                        }
                        let audio = m.audio.as_ref().ok_or_else(|| Error::InvalidConfig("no audio path".into()))?;
                        read_foa_wav(&in_dir.join(audio))
                    })
                    .collect();
                let ok: Vec<(usize, &FoaSignal)> = members
                    .iter()
                    .zip(&loaded)
                    .filter_map(|(&i, r)| r.as_ref().ok().map(|s| (i, s)))
                    .collect();
                let pairs: Vec<(&WorkItem, &FoaSignal)> = ok.iter().map(|(i, s)| (&items[*i], *s)).collect();
                let mut mixed: BTreeMap<usize, _> =
                    ok.iter().map(|(i, _)| *i).zip(mix_group(&pairs, config, res)).collect();

                members
                    .iter()
                    .zip(loaded)
                    .map(|(&i, r)| {
                        let m = &input.items[i];
                        let record = r.and_then(|_| {
                            let (foa, mixing) = mixed.remove(&i).expect("every success was mixed")?;
                            let labels_in = m.labels.as_ref().ok_or_else(|| Error::InvalidConfig("no labels path".into()))?;
                            let labels = crate::dataio::labels::read_labels(&in_dir.join(labels_in))?;
                            write_foa_wav(&foa, &out_dir.join(audio_rel(&m.id)))?;
                            write_labels(&labels, &out_dir.join(labels_rel(&m.id)))?;
                            Ok(ManifestItem {
                                audio: Some(audio_rel(&m.id)),
                                labels: Some(labels_rel(&m.id)),
                                mixing,
                                ..m.clone()
                            })
                        });
                        let record = record.unwrap_or_else(|e| failed(&items[i], m.master_seed, &e));
                        (i, record)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    });
    out.sort_by_key(|(i, _)| *i);

    let mut cfg = config.clone();
    cfg.seed = input.header.master_seed;
    let noise_ids = res.noise.clips.iter().map(|c| c.id.clone()).collect();
    let mut manifest = Manifest::new(Stage::Mix, &cfg, noise_ids, Some(manifest_path.display().to_string()));
    manifest.items = out.into_iter().map(|(_, m)| m).collect();
    let path = out_dir.join("manifest.jsonl");
    manifest.write(&path)?;
    Ok(RunSummary::new(Stage::Mix, &manifest, path, started))
}

/// Per-sample DOA labels implied by a provenance record.
pub fn sample_labels_from_provenance(prov: &Spatialisation, num_samples: usize) -> Result<DoaSampleLabels> {
    match prov {
        Spatialisation::Stationary { direction, .. } => Ok(DoaSampleLabels::constant(*direction, num_samples)),
        Spatialisation::Moving { trajectory, .. } => {
            if trajectory.num_samples != num_samples {
                return Err(Error::LengthMismatch {
                    expected: num_samples,
                    actual: trajectory.num_samples,
                });
            }
            (1..=num_samples)
                .map(|i| doa_from_position(trajectory_position(trajectory, i)?))
                .collect::<Result<Vec<_>>>()
                .map(DoaSampleLabels)
        }
    }
}

/// Regenerate label files for every successful item of a manifest from its
/// provenance alone. Returns the number of files written.
pub fn labelgen(
    manifest_path: &Path,
    out_dir: &Path,
    acoustic: Option<&BTreeMap<String, Vec<usize>>>,
) -> Result<usize> {
    let manifest = Manifest::read(manifest_path)?;
    let config = &manifest.header.config;
    let mut written = 0;
    for item in manifest.items.iter().filter(|i| i.is_ok()) {
        let prov = item
            .spatialisation
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("item `{}` has no provenance", item.id)))?;
        let n = item
            .num_samples
            .ok_or_else(|| Error::InvalidConfig(format!("item `{}` has no sample count", item.id)))?;
        let samples = sample_labels_from_provenance(prov, n)?;
        let labels = build_labels(&item.id, &samples, config, acoustic)?;
        write_labels(&LabelFile::from_frames(&labels, config.quantizer), &out_dir.join(labels_rel(&item.id)))?;
        written += 1;
    }
    Ok(written)
}
