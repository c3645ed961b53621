//! Toolkit for measuring how JPEG compression degrades small vision models
//! and for training the mitigations that recover the lost accuracy.
//!
//! The crate is organized bottom-up:
//!
//! - [`jpeg`]: baseline lossy codec with IJG quality scaling, optional JFIF
//!   bitstream emission and parsing, PPM/PGM/PNG raster I/O.
//! - [`autodiff`]: tape-based reverse-mode differentiation over dense
//!   tensors, SGD with momentum and a cosine learning-rate schedule.
//! - [`nn`]: descriptor-driven task networks (classifier, segmenter) and
//!   the quality-blind artifact-correction network, plus checkpoints.
//! - [`mitigation`]: JPEG augmentation, supervised fine-tuning, pixel-space
//!   artifact-correction pretraining and task-targeted artifact correction
//!   (single task, transfer and multihead).
//! - [`study`]: metrics, quality sweeps, drop reports, throughput and
//!   Grad-CAM.
//! - [`data`]: synthetic shape datasets, image-folder ingestion and flat
//!   `key=value` experiment configs.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
mod error;
pub mod jpeg;
pub mod mitigation;
pub mod nn;
pub mod par;
pub mod study;

pub use error::{Error, Result};
