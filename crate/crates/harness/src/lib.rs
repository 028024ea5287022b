//! Experiment runner for motion-based extrinsic calibration: simulated
//! datasets, strategy x solver x noise sweeps and their CSV reports.

pub mod calibrate;
pub mod config;
pub mod dataset;
pub mod error;
pub mod stats;
pub mod sweep;
pub mod validate;

pub use config::{ExperimentConfig, NoisePoint, NoiseSweep};
pub use error::HarnessError;
pub use sweep::{RunRecord, SummaryRow};
