//! Few-shot attention pipeline for EEG drowsiness estimation.
//!
//! The crate turns raw multi-channel EEG epochs into per-band differential
//! entropy features, runs them through a self-attention feature extractor,
//! highlights support/query similarity with cross-attention, screens
//! anomalous (non-driving) signals with a binary determination head, and
//! classifies drowsiness by nearest-prototype distance. Training, episodic
//! cross-subject evaluation, ablation drivers, a synthetic-data generator,
//! and binary epoch/checkpoint file formats are included.

pub mod attention;
pub mod cli;
pub mod eval;
pub mod io;
pub mod model;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod train;

pub use tensor::{Graph, Param, Tensor, TensorError, Var};
