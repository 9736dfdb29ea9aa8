//! Anisotropic multi-stream 3D segmentation, end to end on the CPU:
//! physical-space volumes, a reverse-mode autodiff tape, single/dual/triple
//! orientation U-Nets, soft-Dice training, signed-distance fusion of
//! per-orientation masks, volumetric metrics with exact signed-rank tests,
//! Hyperband+Bayesian hyperparameter search, and a synthetic phantom
//! harness that exercises the whole pipeline.
//!
//! Everything is deterministic per seed; no external ML framework is used.

pub mod error;
pub mod fusion;
pub mod hpo;
pub mod metrics;
pub mod network;
pub mod phantom;
pub mod reference;
pub mod stats;
pub mod tensor;
pub mod training;
pub mod volume;

pub use error::{Error, Result};
