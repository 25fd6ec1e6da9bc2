//! Simulated first-order ambisonics (FOA) training data for spatial
//! self-supervised speech models.
//!
//! The crate turns mono 16 kHz speech into 4-channel W/X/Y/Z audio through
//! one of two spatialisation strategies (reverberant stationary sources via
//! impulse-response convolution, or free-field moving sources via per-sample
//! gain panning), mixes in spatialised noise or secondary speech, and emits
//! frame-aligned direction-of-arrival targets. A reference implementation of
//! the two-headed masked-prediction loss with analytic gradients is included
//! for verifying training code against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod dataio;
pub mod error;
pub mod foa;
pub mod geometry;
pub mod ir;
pub mod labels;
pub mod loss;
pub mod pipeline;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};

/// Sample rate used throughout the pipeline.
pub const SAMPLE_RATE_HZ: u32 = 16_000;
