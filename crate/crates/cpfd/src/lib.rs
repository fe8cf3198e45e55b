//! Confidence-aware privileged feature distillation (CPFD).
//!
//! Trains a two-branch teacher on raw + privileged features, then distills a
//! raw-features-only student with a per-sample distillation weight derived
//! from the teacher's own loss. Ships with a synthetic benchmark generator,
//! metrics, ablation sweeps, and a CLI (`cpfd`).

pub mod cli;
pub mod confmap;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod ndcore;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
