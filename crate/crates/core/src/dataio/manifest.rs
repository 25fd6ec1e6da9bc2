//! Dataset manifests and input corpora.
//!
//! A manifest is JSON Lines. The first line is the header (format, version,
//! stage, master seed and the full configuration in effect); every
//! following line describes one utterance. Audio and label paths are
//! relative to the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{MixRecord, NoiseClip, NoisePool, Spatialisation};
use crate::error::{Error, Result};

use super::config::Config;
use super::wav::{read_mono_wav, write_bytes};

pub const MANIFEST_FORMAT: &str = "foasim-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Spatialise,
    Mix,
    Labelgen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub stage: Stage,
    pub master_seed: u64,
    pub config: Config,
    /// Noise clip ids available for mixing, in pool order.
    pub noise_ids: Vec<String>,
    /// Manifest this one was derived from, if any.
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub source: String,
    pub status: ItemStatus,
    pub error: Option<String>,
    pub audio: Option<String>,
    pub labels: Option<String>,
    pub num_samples: Option<usize>,
    pub spatialisation: Option<Spatialisation>,
    pub mixing: Option<MixRecord>,
    pub master_seed: u64,
    pub item_seed: u64,
    pub group: usize,
}

impl ManifestItem {
    pub fn is_ok(&self) -> bool {
        self.status == ItemStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(ManifestHeader),
    Item(ManifestItem),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub items: Vec<ManifestItem>,
}

impl Manifest {
    pub fn new(stage: Stage, config: &Config, noise_ids: Vec<String>, parent: Option<String>) -> Self {
        Self {
            header: ManifestHeader {
                format: MANIFEST_FORMAT.into(),
                version: MANIFEST_VERSION,
                stage,
                master_seed: config.seed,
                config: config.clone(),
                noise_ids,
                parent,
            },
            items: Vec::new(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Line::Header(self.header.clone())).expect("header serialises");
        out.push('\n');
        for item in &self.items {
            out.push_str(&serde_json::to_string(&Line::Item(item.clone())).expect("item serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty manifest".into()))?;
        let Line::Header(header) = serde_json::from_str(first).map_err(|e| Error::InvalidConfig(e.to_string()))? else {
            return Err(Error::InvalidConfig("manifest does not start with a header".into()));
        };
        if header.format != MANIFEST_FORMAT {
            return Err(Error::InvalidConfig(format!("not a manifest: `{}`", header.format)));
        }
        if header.version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: MANIFEST_VERSION,
            });
        }
        let mut items = Vec::new();
        for line in lines {
            match serde_json::from_str(line).map_err(|e| Error::InvalidConfig(e.to_string()))? {
                Line::Item(item) => items.push(item),
                Line::Header(_) => return Err(Error::InvalidConfig("second header in manifest".into())),
            }
        }
        let manifest = Self { header, items };
        manifest.check_unique_ids()?;
        Ok(manifest)
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate utterance id `{}`", item.id)));
            }
        }
        Ok(())
    }

    /// Paths referenced by `item` that do not exist, resolved against `dir`.
    pub fn missing_paths(item: &ManifestItem, dir: &Path) -> Vec<PathBuf> {
        let mut missing = Vec::new();
        for rel in [&item.audio, &item.labels].into_iter().flatten() {
            let p = dir.join(rel);
            if !p.exists() {
                missing.push(p);
            }
        }
        missing
    }

    /// Write to `path` after checking id uniqueness and that every
    /// referenced output file exists.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.check_unique_ids()?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for item in &self.items {
            if let Some(p) = Self::missing_paths(item, dir).first() {
                return Err(Error::InvalidConfig(format!(
                    "item `{}` references missing file {}",
                    item.id,
                    p.display()
                )));
            }
        }
        write_bytes(path, self.to_jsonl().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text).map_err(|e| match e {
            Error::Version { .. } => e,
            other => Error::parse(path, other),
        })
    }
}

/// One mono input utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Read a corpus listing. `path` is either a JSON Lines file of
/// `{"id": ..., "path": ...}` records (paths relative to the file) or a
/// directory whose `*.wav` files become entries keyed by file stem.
pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    if path.is_dir() {
        return scan_wavs(path);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut e: CorpusEntry =
            serde_json::from_str(line).map_err(|err| Error::parse(path, format!("line {}: {err}", n + 1)))?;
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        entries.push(e);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = entries.iter().find(|e| !seen.insert(e.id.clone())) {
        return Err(Error::parse(path, format!("duplicate utterance id `{}`", dup.id)));
    }
    Ok(entries)
}

fn scan_wavs(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let mut entries: Vec<CorpusEntry> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .map(|p| CorpusEntry {
            id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            path: p,
        })
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(entries)
}

/// Load every mono WAV in `dir` (sorted by file stem) as a noise pool.
pub fn read_noise_dir(dir: &Path) -> Result<NoisePool> {
    let clips = scan_wavs(dir)?
        .into_iter()
        .map(|e| {
            Ok(NoiseClip {
                signal: read_mono_wav(&e.path)?,
                id: e.id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoisePool { clips })
}

/// Externally supplied acoustic class ids, one sequence per utterance id.
pub fn read_acoustic_labels(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}
