//! RMS ATE of the noisy trajectories against their clean versions.

use std::fmt::Write as _;

use handeye_core::simulate::rms_ate;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::dataset::{ground_truths, Scenario};

/// Reference band of RMS ATE values reported for real SLAM systems, m.
pub const SLAM_ATE_BAND: (f64, f64) = (0.035, 0.601);

#[derive(Debug, Clone, PartialEq)]
pub struct AteSummary {
    pub noise: String,
    /// Trajectories times two sensors.
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// One summary per noise point in sweep order; both sensors of every
/// trajectory contribute.
pub fn validate_noise(config: &ExperimentConfig) -> Vec<AteSummary> {
    let gts = ground_truths(config);
    config
        .noise
        .points()
        .iter()
        .enumerate()
        .map(|(p, point)| {
            let ates: Vec<f64> = gts
                .par_iter()
                .enumerate()
                .flat_map_iter(|(k, gt)| {
                    let s = Scenario::generate(config, gt, k, p, point);
                    [
                        rms_ate(&gt.clean1, &s.sensor1).expect("equal lengths"),
                        rms_ate(&gt.clean2, &s.sensor2).expect("equal lengths"),
                    ]
                })
                .collect();
            AteSummary {
                noise: point.label.clone(),
                count: ates.len(),
                mean: ates.iter().sum::<f64>() / ates.len() as f64,
                min: ates.iter().copied().fold(f64::INFINITY, f64::min),
                max: ates.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

pub fn format_report(rows: &[AteSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18} {:>6} {:>12} {:>12} {:>12}", "noise", "n", "mean_m", "min_m", "max_m");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<18} {:>6} {:>12.6} {:>12.6} {:>12.6}",
            r.noise, r.count, r.mean, r.min, r.max
        );
    }
    if let Some(m) = rows.iter().find(|r| r.noise == "mixed") {
        let (lo, hi) = SLAM_ATE_BAND;
        let verdict = if (lo..=hi).contains(&m.mean) { "inside" } else { "outside" };
        let _ = writeln!(
            out,
            "info: mixed-noise mean RMS ATE {:.3} m is {verdict} the {lo} m to {hi} m range typical of SLAM systems",
            m.mean
        );
    }
    out
}
