//! IR archives: one 4-channel float WAV per impulse response plus a JSON
//! sidecar with the same file stem.
//!
//! Sidecars written by this crate look like
//!
//! ```json
//! {"format":"foasim-ir","version":1,"id":"ir_000000","direction":[x,y,z],
//!  "rt60_s":0.41,"room":{...},"seed":123}
//! ```
//!
//! Third-party archives are read through a [`FieldMapping`] naming the JSON
//! keys that carry the direction (as a vector or as azimuth/elevation) and
//! RT60.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{sample_room_with, RoomSpec, Vec3, DEFAULT_MAX_RETRIES};
use crate::ir::{generate_ir_with, DrawnIr, FoaImpulseResponse, IrSource};
use crate::rng::{derive_seed, SeededRng};
use crate::SAMPLE_RATE_HZ;

use super::config::IrConfig;
use super::wav::{foa_from_wav, read_wav, write_bytes, write_foa_wav};

pub const IR_FORMAT: &str = "foasim-ir";
pub const IR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrRecord {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub direction: Vec3,
    pub rt60_s: f64,
    pub room: Option<RoomSpec>,
    pub seed: Option<u64>,
}

/// Where to find the direction label and RT60 in a sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    /// Key holding a `[x, y, z]` direction. Takes precedence over angles.
    pub direction: Option<String>,
    /// Azimuth from +x toward +y.
    pub azimuth: Option<String>,
    /// Elevation above the horizontal plane (or colatitude, see below).
    pub elevation: Option<String>,
    pub angles_in_degrees: bool,
    pub elevation_is_colatitude: bool,
    pub rt60: Option<String>,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            direction: Some("direction".into()),
            azimuth: None,
            elevation: None,
            angles_in_degrees: true,
            elevation_is_colatitude: false,
            rt60: Some("rt60_s".into()),
        }
    }
}

impl FieldMapping {
    fn number(v: &Value, key: &str) -> Option<f64> {
        v.get(key).and_then(Value::as_f64)
    }

    pub fn direction(&self, v: &Value) -> std::result::Result<Vec3, String> {
        let raw = if let Some(key) = &self.direction {
            let arr = v
                .get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| format!("missing direction field `{key}`"))?;
            let xyz: Vec<f64> = arr.iter().filter_map(Value::as_f64).collect();
            if xyz.len() != 3 {
                return Err(format!("field `{key}` is not a 3-vector"));
            }
            Vec3::new(xyz[0], xyz[1], xyz[2])
        } else {
            let (Some(az_key), Some(el_key)) = (&self.azimuth, &self.elevation) else {
                return Err("field mapping names neither a direction nor azimuth/elevation".into());
            };
            let mut az = Self::number(v, az_key).ok_or_else(|| format!("missing azimuth field `{az_key}`"))?;
            let mut el = Self::number(v, el_key).ok_or_else(|| format!("missing elevation field `{el_key}`"))?;
            if self.angles_in_degrees {
                az = az.to_radians();
                el = el.to_radians();
            }
            if self.elevation_is_colatitude {
                el = std::f64::consts::FRAC_PI_2 - el;
            }
            Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
        };
        raw.normalized().ok_or_else(|| "zero direction".to_string())
    }

    pub fn rt60(&self, v: &Value) -> Option<f64> {
        self.rt60.as_deref().and_then(|k| Self::number(v, k))
    }
}

/// Generate `count` rooms and IRs into `out_dir`. IR `k` uses the seed
/// `derive_seed(seed, "ir-k")`, so archives are reproducible and any single
/// IR can be regenerated on its own.
pub fn generate_archive(out_dir: &Path, count: usize, seed: u64, cfg: &IrConfig) -> Result<Vec<IrRecord>> {
    cfg.rt60_band.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut index = String::new();
    let mut records = Vec::with_capacity(count);
    for k in 0..count {
        let item_seed = derive_seed(seed, &format!("ir-{k}"));
        let mut rng = SeededRng::new(item_seed);
        let room = sample_room_with(&mut rng, cfg.rt60_band, cfg.mic, DEFAULT_MAX_RETRIES)?;
        let ir = generate_ir_with(&room, &cfg.model, SAMPLE_RATE_HZ, &mut rng)?;
        let id = format!("ir_{k:06}");
        let foa = crate::foa::FoaSignal::from_channels(ir.channels.clone(), ir.sample_rate_hz)?;
        write_foa_wav(&foa, &out_dir.join(format!("{id}.wav")))?;
        let record = IrRecord {
            format: IR_FORMAT.into(),
            version: IR_VERSION,
            id: id.clone(),
            direction: ir.direction_label,
            rt60_s: room.rt60_s,
            room: Some(room),
            seed: Some(item_seed),
        };
        let line = serde_json::to_string(&record).expect("record serialises");
        write_bytes(&out_dir.join(format!("{id}.json")), format!("{line}\n").as_bytes())?;
        index.push_str(&line);
        index.push('\n');
        records.push(record);
    }
    write_bytes(&out_dir.join("index.jsonl"), index.as_bytes())?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub id: String,
    pub wav: PathBuf,
    pub direction: Vec3,
    pub rt60_s: Option<f64>,
    pub room: Option<RoomSpec>,
}

/// Draws IRs uniformly from an on-disk archive. Only the index is held in
/// memory; each draw reads one WAV.
#[derive(Debug, Clone)]
pub struct ArchiveIrSource {
    pub entries: Vec<ArchiveEntry>,
}

impl ArchiveIrSource {
    /// Scan `dir` for `*.wav` files with a `.json` sidecar of the same stem.
    /// WAVs without a sidecar are skipped; entries are sorted by file name.
    pub fn open(dir: &Path, fields: &FieldMapping) -> Result<Self> {
        let mut wavs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        wavs.sort();
        let mut entries = Vec::new();
        for wav in wavs {
            let sidecar = wav.with_extension("json");
            let Ok(text) = fs::read_to_string(&sidecar) else {
                log::warn!("{}: no sidecar, skipped", wav.display());
                continue;
            };
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::parse(&sidecar, e))?;
            let direction = fields.direction(&v).map_err(|m| Error::parse(&sidecar, m))?;
            let room = v.get("room").and_then(|r| serde_json::from_value(r.clone()).ok());
            let id = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            entries.push(ArchiveEntry {
                id,
                wav,
                direction,
                rt60_s: fields.rt60(&v),
                room,
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyPool("IR archive"));
        }
        Ok(Self { entries })
    }

    pub fn load(&self, entry: &ArchiveEntry) -> Result<FoaImpulseResponse> {
        let foa = foa_from_wav(read_wav(&entry.wav)?).map_err(|e| Error::parse(&entry.wav, e))?;
        Ok(FoaImpulseResponse {
            channels: foa.channels,
            sample_rate_hz: foa.sample_rate_hz,
            direction_label: entry.direction,
            rt60_s: entry.rt60_s.unwrap_or(f64::NAN),
            room: entry.room,
        })
    }
}

impl IrSource for ArchiveIrSource {
    fn name(&self) -> &'static str {
        "archive"
    }

    fn draw(&self, rng: &mut SeededRng) -> Result<DrawnIr> {
        let entry = &self.entries[rng.index(self.entries.len())];
        Ok(DrawnIr {
            id: entry.id.clone(),
            ir: self.load(entry)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn angle_mappings() {
        let m = FieldMapping {
            direction: None,
            azimuth: Some("azi".into()),
            elevation: Some("ele".into()),
            ..Default::default()
        };
        let d = m.direction(&json!({"azi": 90.0, "ele": 0.0})).unwrap();
        assert!((d - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let d = m.direction(&json!({"azi": 0.0, "ele": 90.0})).unwrap();
        assert!((d - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);

        let colat = FieldMapping {
            elevation_is_colatitude: true,
            ..m.clone()
        };
        let d = colat.direction(&json!({"azi": 0.0, "ele": 90.0})).unwrap();
        assert!((d - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(m.direction(&json!({"azi": 0.0})).is_err());
    }

    #[test]
    fn vector_mapping_normalises() {
        let m = FieldMapping::default();
        let d = m.direction(&json!({"direction": [0.0, 2.0, 0.0], "rt60_s": 0.3})).unwrap();
        assert_eq!(d, Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(m.rt60(&json!({"rt60_s": 0.3})), Some(0.3));
        assert!(m.direction(&json!({"direction": [0.0, 0.0]})).is_err());
    }
}
