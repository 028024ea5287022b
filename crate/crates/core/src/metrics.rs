//! Calibration error metrics.
//!
//! Two relative metrics measure how well `X` explains the motion pairs; two
//! absolute metrics compare `X` against a known ground truth. Values are in
//! meters and radians.

use crate::se3::log_so3;
use crate::solvers::Extrinsic;
use crate::trajectory::MotionPairSet;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub e_rt: f64,
    pub e_rr: f64,
    pub e_at: f64,
    pub e_ar: f64,
}

impl ErrorReport {
    pub fn compute(x: &Extrinsic, mps: &MotionPairSet, gt: &Extrinsic) -> Self {
        ErrorReport {
            e_rt: relative_translation_error(x, mps),
            e_rr: relative_rotation_error(x, mps),
            e_at: absolute_translation_error(x, gt),
            e_ar: absolute_rotation_error(x, gt),
        }
    }
}

/// Mean of `‖R_A t_x + t_A − R_x t_B − t_x‖` over all pairs.
pub fn relative_translation_error(x: &Extrinsic, mps: &MotionPairSet) -> f64 {
    if mps.is_empty() {
        return 0.0;
    }
    let r = x.rotation();
    let sum: f64 = mps
        .iter()
        .map(|(a, b)| {
            (a.rotation() * x.t + a.translation() - r * b.translation() - x.t).norm()
        })
        .sum();
    sum / mps.len() as f64
}

/// Mean of `‖[(R_x R_B)⁻¹ R_A R_x]_θ‖` over all pairs.
pub fn relative_rotation_error(x: &Extrinsic, mps: &MotionPairSet) -> f64 {
    if mps.is_empty() {
        return 0.0;
    }
    let r = x.rotation();
    let sum: f64 = mps
        .iter()
        .map(|(a, b)| {
            let lhs = r * b.rotation();
            log_so3(&(lhs.transpose() * a.rotation() * r)).norm()
        })
        .sum();
    sum / mps.len() as f64
}

/// `‖t_gt − t‖`.
pub fn absolute_translation_error(x: &Extrinsic, gt: &Extrinsic) -> f64 {
    (gt.t - x.t).norm()
}

/// `‖[R_x⁻¹ R_gt]_θ‖`.
pub fn absolute_rotation_error(x: &Extrinsic, gt: &Extrinsic) -> f64 {
    log_so3(&(x.rotation().transpose() * gt.rotation())).norm()
}
