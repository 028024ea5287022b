//! Motion-based extrinsic calibration between two rigidly attached sensors,
//! posed as hand-eye calibration `A X = X B`.
//!
//! * [`se3`]: rigid transform algebra.
//! * [`trajectory`]: pose sequences, TUM I/O, reference frame selection.
//! * [`simulate`]: synthetic trajectories and noise patterns.
//! * [`solvers`]: separable baseline, DNL and DNLO estimators.
//! * [`metrics`]: relative and absolute calibration errors.

pub mod align;
pub mod metrics;
pub mod se3;
pub mod simulate;
pub mod solvers;
pub mod trajectory;

pub use metrics::ErrorReport;
pub use se3::{RotVec, Transform};
pub use solvers::{DnloParams, Extrinsic, MinWeight, SolveResult, SolverError, SolverKind};
pub use trajectory::{MotionPairSet, Pose, SelectionStrategy, Trajectory, TrajectoryError};
