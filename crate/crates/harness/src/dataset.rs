//! Simulated datasets: generation from a config, TUM + JSON manifests on
//! disk, and loading them back.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! dataset.json                  config + list of entries
//! traj_000/clean/manifest.json  seed, noise spec, ground truth
//! traj_000/clean/sensor1.tum
//! traj_000/clean/sensor2.tum
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use handeye_core::simulate::{
    derive_seed, generate_base_trajectory_with, noisy_pair, random_extrinsic, GroundTruth, NoiseSpec,
};
use handeye_core::trajectory::{load_tum, write_tum};
use handeye_core::{Extrinsic, Trajectory, Transform};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, NoisePoint};
use crate::error::HarnessError;

pub const INDEX_FILE: &str = "dataset.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn base_seed(master: u64, trajectory: usize) -> u64 {
    derive_seed(master, &[0, trajectory as u64])
}

fn extrinsic_seed(master: u64, trajectory: usize) -> u64 {
    derive_seed(master, &[1, trajectory as u64])
}

/// Seed of the noise draws for one (trajectory, noise point) cell. Adding
/// strategies or solvers never changes it.
pub fn noise_seed(master: u64, trajectory: usize, noise_index: usize) -> u64 {
    derive_seed(master, &[2, trajectory as u64, noise_index as u64])
}

/// Clean trajectory pairs and their extrinsics, one per trajectory index.
pub fn ground_truths(config: &ExperimentConfig) -> Vec<GroundTruth> {
    (0..config.trajectories)
        .into_par_iter()
        .map(|k| {
            let base = generate_base_trajectory_with(
                config.poses_per_trajectory,
                base_seed(config.master_seed, k),
                &config.generator,
            );
            let x = random_extrinsic(
                extrinsic_seed(config.master_seed, k),
                config.extrinsic.max_angle,
                config.extrinsic.max_translation,
            );
            GroundTruth::new(base, x)
        })
        .collect()
}

/// Noisy sensor pair for one (trajectory, noise point) cell.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub trajectory: usize,
    pub noise_index: usize,
    pub noise_label: String,
    pub spec: NoiseSpec,
    pub x_gt: Extrinsic,
    pub sensor1: Trajectory,
    pub sensor2: Trajectory,
    pub outliers1: Vec<usize>,
    pub outliers2: Vec<usize>,
}

impl Scenario {
    pub fn generate(
        config: &ExperimentConfig,
        gt: &GroundTruth,
        trajectory: usize,
        noise_index: usize,
        point: &NoisePoint,
    ) -> Self {
        let spec = point.spec(noise_seed(config.master_seed, trajectory, noise_index));
        let pair = noisy_pair(gt, &spec);
        Scenario {
            trajectory,
            noise_index,
            noise_label: point.label.clone(),
            spec,
            x_gt: gt.x_gt,
            sensor1: pair.sensor1.trajectory,
            sensor2: pair.sensor2.trajectory,
            outliers1: pair.sensor1.outlier_indices,
            outliers2: pair.sensor2.outlier_indices,
        }
    }

    fn relative_dir(&self) -> PathBuf {
        PathBuf::from(format!("traj_{:03}", self.trajectory)).join(&self.noise_label)
    }
}

/// All cells of a config, trajectory-major then noise point.
pub fn generate_scenarios(config: &ExperimentConfig) -> Vec<Scenario> {
    let gts = ground_truths(config);
    let points = config.noise.points();
    let cells: Vec<(usize, usize)> = (0..gts.len())
        .flat_map(|k| (0..points.len()).map(move |p| (k, p)))
        .collect();
    cells
        .into_par_iter()
        .map(|(k, p)| Scenario::generate(config, &gts[k], k, p, &points[p]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub trajectory: usize,
    pub noise_point: String,
    pub noise_index: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// `tx ty tz qx qy qz qw` of the sensor-2-to-sensor-1 transform.
    pub ground_truth: [f64; 7],
    pub outliers_sensor1: Vec<usize>,
    pub outliers_sensor2: Vec<usize>,
    pub sensor1: String,
    pub sensor2: String,
}

pub fn extrinsic_to_seven(x: &Extrinsic) -> [f64; 7] {
    let t = x.to_transform();
    let q = t.quaternion_xyzw();
    let p = t.translation();
    [p.x, p.y, p.z, q[0], q[1], q[2], q[3]]
}

pub fn extrinsic_from_seven(v: &[f64; 7]) -> Extrinsic {
    let t = Transform::from_quaternion_xyzw(Vector3::new(v[0], v[1], v[2]), [v[3], v[4], v[5], v[6]]);
    Extrinsic::from_transform(&t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub config: ExperimentConfig,
    /// Entry directories relative to the dataset root.
    pub entries: Vec<String>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn tum_bytes(t: &Trajectory) -> Vec<u8> {
    let mut buf = Vec::new();
    write_tum(t, &mut buf).expect("writing to memory");
    buf
}

/// Writes every cell of `config` under `out`. Output bytes depend only on
/// the config.
pub fn write_dataset(config: &ExperimentConfig, out: &Path) -> Result<DatasetIndex, HarnessError> {
    config.validate()?;
    let scenarios = generate_scenarios(config);
    let mut entries = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let rel = s.relative_dir();
        let dir = out.join(&rel);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        write_file(&dir.join("sensor1.tum"), &tum_bytes(&s.sensor1))?;
        write_file(&dir.join("sensor2.tum"), &tum_bytes(&s.sensor2))?;
        let manifest = Manifest {
            trajectory: s.trajectory,
            noise_point: s.noise_label.clone(),
            noise_index: s.noise_index,
            seed: s.spec.seed,
            noise: s.spec,
            ground_truth: extrinsic_to_seven(&s.x_gt),
            outliers_sensor1: s.outliers1.clone(),
            outliers_sensor2: s.outliers2.clone(),
            sensor1: "sensor1.tum".into(),
            sensor2: "sensor2.tum".into(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;
        entries.push(rel.to_string_lossy().replace('\\', "/"));
    }
    let index = DatasetIndex {
        config: config.clone(),
        entries,
    };
    let json = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write_file(&out.join(INDEX_FILE), json.as_bytes())?;
    Ok(index)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, HarnessError> {
    read_json(path)
}

/// Loads a directory written by [`write_dataset`].
pub fn load_dataset(root: &Path) -> Result<(ExperimentConfig, Vec<Scenario>), HarnessError> {
    let index: DatasetIndex = read_json(&root.join(INDEX_FILE))?;
    index.config.validate()?;
    let scenarios = index
        .entries
        .par_iter()
        .map(|rel| {
            let dir = root.join(rel);
            let m = read_manifest(&dir.join(MANIFEST_FILE))?;
            Ok(Scenario {
                trajectory: m.trajectory,
                noise_index: m.noise_index,
                noise_label: m.noise_point.clone(),
                spec: m.noise,
                x_gt: extrinsic_from_seven(&m.ground_truth),
                sensor1: load_tum(dir.join(&m.sensor1))?,
                sensor2: load_tum(dir.join(&m.sensor2))?,
                outliers1: m.outliers_sensor1,
                outliers2: m.outliers_sensor2,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok((index.config, scenarios))
}

/// Ground truth for `calibrate --ground-truth`: a dataset manifest, or a
/// plain file holding the seven numbers `tx ty tz qx qy qz qw`.
pub fn read_ground_truth(path: &Path) -> Result<Extrinsic, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
        return Ok(extrinsic_from_seven(&m.ground_truth));
    }
    let values: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| HarnessError::Manifest {
            path: path.to_path_buf(),
            message: "expected a manifest or seven numbers tx ty tz qx qy qz qw".into(),
        })?;
    let seven: [f64; 7] = values.try_into().map_err(|v: Vec<f64>| HarnessError::Manifest {
        path: path.to_path_buf(),
        message: format!("expected 7 numbers, found {}", v.len()),
    })?;
    Ok(extrinsic_from_seven(&seven))
}
