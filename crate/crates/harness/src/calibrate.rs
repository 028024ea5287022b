//! Single calibration run on two TUM files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use handeye_core::metrics::{
    absolute_rotation_error, absolute_translation_error, relative_rotation_error, relative_translation_error,
};
use handeye_core::trajectory::{associate, build_motion_pairs, load_tum, DEFAULT_ASSOCIATION_TOLERANCE};
use handeye_core::{DnloParams, Extrinsic, SelectionStrategy, SolverKind};

use crate::dataset::{extrinsic_to_seven, read_ground_truth};
use crate::error::HarnessError;

/// Exit code when the solver stops before converging.
pub const EXIT_NO_CONVERGENCE: i32 = 4;

#[derive(Debug, Clone)]
pub struct CalibrateOptions {
    pub strategy: SelectionStrategy,
    pub solver: SolverKind,
    pub dnlo: DnloParams,
    pub ground_truth: Option<PathBuf>,
    /// Timestamp association tolerance, s.
    pub tolerance: f64,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            strategy: SelectionStrategy::Previous(5),
            solver: SolverKind::Dnlo,
            dnlo: DnloParams::default(),
            ground_truth: None,
            tolerance: DEFAULT_ASSOCIATION_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub strategy: SelectionStrategy,
    pub solver: SolverKind,
    pub extrinsic: Extrinsic,
    pub poses: usize,
    pub dropped: usize,
    pub pairs: usize,
    pub inliers: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub e_rt: f64,
    pub e_rr: f64,
    /// `(e_at, e_aR)` when a ground truth was supplied.
    pub absolute: Option<(f64, f64)>,
}

pub fn calibrate(traj1: &Path, traj2: &Path, opts: &CalibrateOptions) -> Result<CalibrationReport, HarnessError> {
    let t1 = load_tum(traj1)?;
    let t2 = load_tum(traj2)?;
    let gt = opts.ground_truth.as_deref().map(read_ground_truth).transpose()?;
    let assoc = associate(&t1, &t2, opts.tolerance);
    let mps = build_motion_pairs(&assoc.first, &assoc.second, opts.strategy)?;
    let result = opts.solver.solve(&mps, &opts.dnlo)?;
    let x = result.extrinsic;
    Ok(CalibrationReport {
        strategy: opts.strategy,
        solver: opts.solver,
        extrinsic: x,
        poses: assoc.first.len(),
        dropped: assoc.dropped,
        pairs: mps.len(),
        inliers: result.alpha.iter().sum(),
        cost: result.cost,
        iterations: result.iterations,
        converged: result.converged,
        e_rt: relative_translation_error(&x, &mps),
        e_rr: relative_rotation_error(&x, &mps),
        absolute: gt.map(|g| (absolute_translation_error(&x, &g), absolute_rotation_error(&x, &g))),
    })
}

impl CalibrationReport {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            EXIT_NO_CONVERGENCE
        }
    }

    pub fn to_text(&self) -> String {
        let s = extrinsic_to_seven(&self.extrinsic);
        let v = self.extrinsic.theta.vector();
        let mut out = String::new();
        let _ = writeln!(out, "strategy     {}", self.strategy);
        let _ = writeln!(out, "solver       {}", self.solver);
        let _ = writeln!(out, "poses        {} ({} dropped by association)", self.poses, self.dropped);
        let _ = writeln!(out, "pairs        {} (weight sum {:.3})", self.pairs, self.inliers);
        let _ = writeln!(out, "translation  {:.9} {:.9} {:.9}", s[0], s[1], s[2]);
        let _ = writeln!(out, "quaternion   {:.9} {:.9} {:.9} {:.9}", s[3], s[4], s[5], s[6]);
        let _ = writeln!(out, "rotvec       {:.9} {:.9} {:.9}", v.x, v.y, v.z);
        let _ = writeln!(out, "cost         {:.8e}", self.cost);
        let _ = writeln!(out, "iterations   {}", self.iterations);
        let _ = writeln!(out, "converged    {}", self.converged);
        let _ = writeln!(out, "e_rt         {:.8e} m", self.e_rt);
        let _ = writeln!(out, "e_rr         {:.8e} deg", self.e_rr.to_degrees());
        if let Some((at, ar)) = self.absolute {
            let _ = writeln!(out, "e_at         {:.8e} m", at);
            let _ = writeln!(out, "e_ar         {:.8e} deg", ar.to_degrees());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let s = extrinsic_to_seven(&self.extrinsic);
        let v = self.extrinsic.theta.vector();
        let (at, ar) = match self.absolute {
            Some((at, ar)) => (format!("{at:.8e}"), format!("{:.8e}", ar.to_degrees())),
            None => (String::new(), String::new()),
        };
        format!(
            "strategy,solver,pairs,tx,ty,tz,qx,qy,qz,qw,rx,ry,rz,cost,iterations,converged,e_rt,e_rr_deg,e_at,e_ar_deg\n\
             {},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.8e},{},{},{:.8e},{:.8e},{},{}\n",
            self.strategy,
            self.solver,
            self.pairs,
            s[0],
            s[1],
            s[2],
            s[3],
            s[4],
            s[5],
            s[6],
            v.x,
            v.y,
            v.z,
            self.cost,
            self.iterations,
            self.converged,
            self.e_rt,
            self.e_rr.to_degrees(),
            at,
            ar
        )
    }
}
