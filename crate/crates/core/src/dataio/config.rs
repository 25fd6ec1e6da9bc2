//! TOML configuration. Every field has a default, so an empty file (or no
//! file) yields the standard settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::geometry::{MicPlacement, Rt60Band, TrajectoryLimits};
use crate::ir::IrModel;
use crate::labels::{MaskConfig, QuantizerConfig};
use crate::loss::{Reduction, DEFAULT_LAMBDA, DEFAULT_TAU};

use super::ir_archive::FieldMapping;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrSourceKind {
    #[default]
    Statistical,
    Archive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrConfig {
    pub source: IrSourceKind,
    pub archive_dir: Option<PathBuf>,
    pub fields: FieldMapping,
    pub rt60_band: Rt60Band,
    pub mic: MicPlacement,
    pub model: IrModel,
}

impl Default for IrConfig {
    fn default() -> Self {
        Self {
            source: IrSourceKind::Statistical,
            archive_dir: None,
            fields: FieldMapping::default(),
            rt60_band: Rt60Band::default(),
            mic: MicPlacement::RoomCenter,
            model: IrModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda: f64,
    pub share_projection: bool,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            lambda: DEFAULT_LAMBDA,
            share_projection: false,
            reduction: Reduction::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Size of the fixed in-batch mixing groups.
    pub group_size: usize,
    /// Convolution engine name.
    pub convolution: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            group_size: 32,
            convolution: "fft-ola".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub augment: AugmentConfig,
    pub quantizer: QuantizerConfig,
    pub mask: MaskConfig,
    pub trajectory: TrajectoryLimits,
    pub ir: IrConfig,
    pub loss: LossConfig,
    pub pipeline: PipelineConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        self.quantizer.validate()?;
        self.mask.validate()?;
        self.trajectory.validate()?;
        self.ir.rt60_band.validate()?;
        if self.pipeline.group_size < 2 {
            return Err(Error::InvalidConfig("pipeline.group_size must be at least 2".into()));
        }
        if !(self.loss.tau > 0.0) || !(self.loss.lambda >= 0.0) {
            return Err(Error::InvalidConfig("loss.tau must be > 0 and loss.lambda >= 0".into()));
        }
        if self.ir.source == IrSourceKind::Archive && self.ir.archive_dir.is_none() {
            return Err(Error::InvalidConfig("ir.source = \"archive\" needs ir.archive_dir".into()));
        }
        Ok(())
    }
}
