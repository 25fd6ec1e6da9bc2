//! Per-utterance label files.
//!
//! A label file is a single JSON object:
//!
//! ```json
//! {
//!   "format": "foasim-labels",
//!   "version": 1,
//!   "frame_count": 49,
//!   "quantizer": { "n": 16, "m": 32 },
//!   "spatial": [264, 264, ...],
//!   "doa": [[1.0, 0.0, 0.0], ...],
//!   "acoustic": null
//! }
//! ```
//!
//! `spatial`, `doa` and (when present) `acoustic` all have `frame_count`
//! entries. Floats are written in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::labels::{FrameLabelSeq, QuantizerConfig};

pub const LABEL_FORMAT: &str = "foasim-labels";
pub const LABEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub format: String,
    pub version: u32,
    pub frame_count: usize,
    pub quantizer: QuantizerConfig,
    pub spatial: Vec<usize>,
    pub doa: Vec<[f64; 3]>,
    pub acoustic: Option<Vec<usize>>,
}

impl LabelFile {
    pub fn from_frames(seq: &FrameLabelSeq, quantizer: QuantizerConfig) -> Self {
        Self {
            format: LABEL_FORMAT.into(),
            version: LABEL_VERSION,
            frame_count: seq.frames(),
            quantizer,
            spatial: seq.spatial.clone(),
            doa: seq.doa.iter().map(|v| v.0).collect(),
            acoustic: seq.acoustic.clone(),
        }
    }

    pub fn to_frames(&self) -> FrameLabelSeq {
        FrameLabelSeq {
            doa: self.doa.iter().map(|v| Vec3(*v)).collect(),
            spatial: self.spatial.clone(),
            acoustic: self.acoustic.clone(),
            mask: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != LABEL_FORMAT {
            return Err(Error::InvalidConfig(format!("not a label file: format `{}`", self.format)));
        }
        if self.version != LABEL_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: LABEL_VERSION,
            });
        }
        self.quantizer.validate()?;
        let t = self.frame_count;
        for len in [Some(self.spatial.len()), Some(self.doa.len()), self.acoustic.as_ref().map(Vec::len)]
            .into_iter()
            .flatten()
        {
            if len != t {
                return Err(Error::LengthMismatch {
                    expected: t,
                    actual: len,
                });
            }
        }
        let classes = self.quantizer.classes();
        if let Some(&id) = self.spatial.iter().find(|&&c| c >= classes) {
            return Err(Error::ClassOutOfRange { id, classes });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string(self).expect("label file serialises");
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LabelFile = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }
}

pub fn write_labels(file: &LabelFile, path: &Path) -> Result<()> {
    super::wav::write_bytes(path, file.to_json()?.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<LabelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabelFile::from_json(&text).map_err(|e| match e {
        Error::Version { .. } => e,
        other => Error::parse(path, other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(t: usize) -> LabelFile {
        LabelFile {
            format: LABEL_FORMAT.into(),
            version: LABEL_VERSION,
            frame_count: t,
            quantizer: QuantizerConfig::default(),
            spatial: (0..t).map(|i| (i * 37) % 512).collect(),
            doa: (0..t).map(|i| [0.1 * i as f64, -1.0 / 3.0, 2f64.sqrt()]).collect(),
            acoustic: None,
        }
    }

    #[test]
    fn empty_round_trips() {
        let f = sample(0);
        assert_eq!(LabelFile::from_json(&f.to_json().unwrap()).unwrap(), f);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let text = r#"{"format":"foasim-labels","version":1,"frame_count":2,"quantizer":{"n":16,"m":32},
            "spatial":[1,2],"doa":[[1.0,0.0,0.0]],"acoustic":null}"#;
        assert!(matches!(LabelFile::from_json(text), Err(Error::LengthMismatch { .. })));
        let mut f = sample(3);
        f.acoustic = Some(vec![1]);
        assert!(f.to_json().is_err());
    }

    #[test]
    fn version_and_range_checked() {
        let mut f = sample(2);
        f.version = 9;
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(LabelFile::from_json(&text), Err(Error::Version { found: 9, .. })));
        let mut f = sample(2);
        f.spatial[1] = 512;
        assert!(matches!(f.validate(), Err(Error::ClassOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            spatial in proptest::collection::vec(0usize..512, 0..60),
            seed in any::<u64>(),
            with_acoustic in any::<bool>(),
        ) {
            let mut rng = crate::rng::SeededRng::new(seed);
            let t = spatial.len();
            let f = LabelFile {
                format: LABEL_FORMAT.into(),
                version: LABEL_VERSION,
                frame_count: t,
                quantizer: QuantizerConfig::default(),
                spatial,
                doa: (0..t).map(|_| [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]).collect(),
                acoustic: with_acoustic.then(|| (0..t).map(|i| i % 500).collect()),
            };
            prop_assert_eq!(LabelFile::from_json(&f.to_json().unwrap()).unwrap(), f);
        }
    }
}
