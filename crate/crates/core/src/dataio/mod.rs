//! File formats: FOA WAV, label files, IR archives, manifests, config.

pub mod config;
pub mod ir_archive;
pub mod labels;
pub mod manifest;
pub mod wav;

pub use config::Config;
pub use ir_archive::{ArchiveIrSource, FieldMapping, IrRecord};
pub use labels::{read_labels, write_labels, LabelFile};
pub use manifest::{read_corpus, CorpusEntry, ItemStatus, Manifest, ManifestItem, Stage};
pub use wav::{read_foa_wav, read_mono_wav, write_foa_wav, write_mono_wav};
