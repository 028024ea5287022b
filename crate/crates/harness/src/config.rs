//! Experiment configuration: JSON on disk, `--set key=value` overrides.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use handeye_core::simulate::{
    BaseTrajectoryConfig, DriftAxis, NoiseSpec, DEFAULT_OUTLIER_SIGMA2, MIXED_DRIFT_RATE,
    MIXED_GAUSSIAN_SIGMA2, MIXED_OUTLIER_FRACTION,
};
use handeye_core::{DnloParams, MinWeight, SelectionStrategy, SolverKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trajectories: usize,
    pub poses_per_trajectory: usize,
    pub master_seed: u64,
    pub generator: BaseTrajectoryConfig,
    pub extrinsic: ExtrinsicRange,
    pub noise: NoiseSweep,
    #[serde(with = "text_list")]
    pub strategies: Vec<SelectionStrategy>,
    #[serde(with = "text_list")]
    pub solvers: Vec<SolverKind>,
    pub dnlo: DnloConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trajectories: 38,
            poses_per_trajectory: 500,
            master_seed: 1,
            generator: BaseTrajectoryConfig::default(),
            extrinsic: ExtrinsicRange::default(),
            noise: NoiseSweep::default(),
            strategies: vec![
                SelectionStrategy::First,
                SelectionStrategy::Previous(1),
                SelectionStrategy::Previous(5),
                SelectionStrategy::Previous(10),
                SelectionStrategy::Keyframe(5),
                SelectionStrategy::Keyframe(10),
            ],
            solvers: SolverKind::ALL.to_vec(),
            dnlo: DnloConfig::default(),
        }
    }
}

/// Range of the randomly drawn ground-truth extrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtrinsicRange {
    /// Rotation angle drawn uniformly from `[0, max_angle)`, rad.
    pub max_angle: f64,
    /// Each translation component drawn from `[-m, m]`, m.
    pub max_translation: f64,
}

impl Default for ExtrinsicRange {
    fn default() -> Self {
        ExtrinsicRange {
            max_angle: std::f64::consts::PI,
            max_translation: 1.5,
        }
    }
}

/// DNLO parameters as written in config files. `d` in `(0, 1)` is a
/// fraction of |S|, anything else a pair count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnloConfig {
    pub c: f64,
    pub d: f64,
    pub max_outer_iters: usize,
}

impl Default for DnloConfig {
    fn default() -> Self {
        let p = DnloParams::default();
        DnloConfig {
            c: p.c,
            d: 0.5,
            max_outer_iters: p.max_outer_iters,
        }
    }
}

impl DnloConfig {
    pub fn params(&self) -> DnloParams {
        DnloParams {
            c: self.c,
            d: MinWeight::from_cli_value(self.d),
            max_outer_iters: self.max_outer_iters,
            ..DnloParams::default()
        }
    }
}

/// One-factor-at-a-time noise sweep. Every sweep contains the clean point;
/// zero entries in the lists collapse onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweep {
    pub gaussian_sigma2: Vec<f64>,
    pub outlier_fraction: Vec<f64>,
    pub drift_rate: Vec<f64>,
    pub outlier_sigma2: f64,
    pub drift_axis: DriftAxis,
    /// Adds the combined point (median Gaussian, outlier and drift levels).
    pub include_mixed: bool,
}

impl Default for NoiseSweep {
    fn default() -> Self {
        NoiseSweep {
            gaussian_sigma2: vec![0.0, 1e-3, 2.5e-3, 5e-3, 7.5e-3, 1e-2],
            outlier_fraction: vec![0.0, 0.025, 0.05, 0.075, 0.10],
            drift_rate: vec![0.0, 0.0125, 0.025, 0.0375, 0.05],
            outlier_sigma2: DEFAULT_OUTLIER_SIGMA2,
            drift_axis: DriftAxis::Random,
            include_mixed: true,
        }
    }
}

/// A labelled noise level of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePoint {
    pub label: String,
    pub gaussian_sigma2: f64,
    pub outlier_fraction: f64,
    pub drift_rate: f64,
    pub outlier_sigma2: f64,
    pub drift_axis: DriftAxis,
}

impl NoisePoint {
    pub fn spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            gaussian_sigma2: self.gaussian_sigma2,
            outlier_fraction: self.outlier_fraction,
            outlier_sigma2: self.outlier_sigma2,
            drift_rate: self.drift_rate,
            drift_axis: self.drift_axis,
            seed,
        }
    }

    pub fn is_mixed(&self) -> bool {
        self.label == "mixed"
    }
}

impl NoiseSweep {
    /// Clean point first, then each family in list order, then mixed.
    pub fn points(&self) -> Vec<NoisePoint> {
        let point = |label: String, g: f64, o: f64, d: f64| NoisePoint {
            label,
            gaussian_sigma2: g,
            outlier_fraction: o,
            drift_rate: d,
            outlier_sigma2: self.outlier_sigma2,
            drift_axis: self.drift_axis,
        };
        let mut points = vec![point("clean".into(), 0.0, 0.0, 0.0)];
        let mut push = |p: NoisePoint| {
            if !points.iter().any(|q| q.label == p.label) {
                points.push(p);
            }
        };
        for &g in self.gaussian_sigma2.iter().filter(|&&v| v != 0.0) {
            push(point(format!("gaussian-{g}"), g, 0.0, 0.0));
        }
        for &o in self.outlier_fraction.iter().filter(|&&v| v != 0.0) {
            push(point(format!("outliers-{o}"), 0.0, o, 0.0));
        }
        for &d in self.drift_rate.iter().filter(|&&v| v != 0.0) {
            push(point(format!("drift-{d}"), 0.0, 0.0, d));
        }
        if self.include_mixed {
            push(point(
                "mixed".into(),
                MIXED_GAUSSIAN_SIGMA2,
                MIXED_OUTLIER_FRACTION,
                MIXED_DRIFT_RATE,
            ));
        }
        points
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.trajectories == 0 {
            return fail("trajectories must be at least 1");
        }
        if self.poses_per_trajectory < 2 {
            return fail("poses_per_trajectory must be at least 2");
        }
        if self.strategies.is_empty() || self.solvers.is_empty() {
            return fail("strategies and solvers must be non-empty");
        }
        let n = &self.noise;
        if n.gaussian_sigma2.is_empty() || n.outlier_fraction.is_empty() || n.drift_rate.is_empty() {
            return fail("noise sweep lists must be non-empty");
        }
        for p in n.points() {
            p.spec(0)
                .validate()
                .map_err(|m| HarnessError::Config(format!("noise point {}: {m}", p.label)))?;
        }
        let g = &self.generator;
        if !(g.step_min > 0.0 && g.step_min <= g.step_max) || !(g.dt > 0.0) {
            return fail("generator needs 0 < step_min <= step_max and dt > 0");
        }
        if !(self.dnlo.c >= 0.0) || !(self.dnlo.d >= 0.0) {
            return fail("dnlo.c and dnlo.d must be non-negative");
        }
        Ok(())
    }

    /// Applies `key=value` with a dotted key (`noise.drift_rate`,
    /// `dnlo.c`). The value is parsed as JSON, falling back to a string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let bad = |m: String| HarnessError::Config(m);
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| bad(format!("override {assignment:?} is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut tree;
        for part in key.split('.') {
            node = node
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| bad(format!("unknown config key {key:?}")))?;
        }
        *node = value;
        let updated: ExperimentConfig =
            serde_json::from_value(tree).map_err(|e| bad(format!("override {assignment:?}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

/// Serializes `Vec<T>` through `Display` / `FromStr`.
mod text_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S, T>(items: &[T], s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: fmt::Display,
    {
        s.collect_seq(items.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
    where
        D: Deserializer<'de>,
        T: FromStr,
        T::Err: fmt::Display,
    {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}
