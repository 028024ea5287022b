//! Synthetic ground-vehicle trajectories and SLAM-like noise patterns.
//!
//! Every operation is a pure function of its inputs and an explicit seed.
//! Variances follow the `N(mean, variance)` convention: an Euler angle drawn
//! for Gaussian noise level `σ²` has variance `2σ²`, a translation component
//! has variance `σ²`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::align::rigid_alignment;
use crate::se3::{euler_to_matrix, RotVec, Transform};
use crate::solvers::Extrinsic;
use crate::trajectory::{Trajectory, TrajectoryError};

/// Variance of outlier jumps, m².
pub const DEFAULT_OUTLIER_SIGMA2: f64 = 0.02;

/// Median noise levels used for the mixed pattern.
pub const MIXED_GAUSSIAN_SIGMA2: f64 = 5e-3;
pub const MIXED_OUTLIER_FRACTION: f64 = 0.05;
pub const MIXED_DRIFT_RATE: f64 = 0.025;

/// Seed derivation: SplitMix64 folded over a stream of tags.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    stream
        .iter()
        .fold(mix(base), |h, &s| mix(h ^ mix(s.wrapping_add(0xD1B5_4A32_D192_ED03))))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(variance: f64) -> Normal<f64> {
    Normal::new(0.0, variance.max(0.0).sqrt()).expect("finite variance")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DriftAxis {
    X,
    Y,
    Z,
    /// Drawn uniformly from the three world axes, once per trajectory.
    Random,
}

impl DriftAxis {
    fn resolve(self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        match self {
            DriftAxis::X => Vector3::x(),
            DriftAxis::Y => Vector3::y(),
            DriftAxis::Z => Vector3::z(),
            DriftAxis::Random => match rng.random_range(0..3) {
                0 => Vector3::x(),
                1 => Vector3::y(),
                _ => Vector3::z(),
            },
        }
    }
}

impl fmt::Display for DriftAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DriftAxis::X => "x",
            DriftAxis::Y => "y",
            DriftAxis::Z => "z",
            DriftAxis::Random => "random",
        };
        f.write_str(s)
    }
}

impl FromStr for DriftAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(DriftAxis::X),
            "y" => Ok(DriftAxis::Y),
            "z" => Ok(DriftAxis::Z),
            "random" => Ok(DriftAxis::Random),
            other => Err(format!("invalid drift axis {other:?}")),
        }
    }
}

/// Parameters of the three noise patterns applied to one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    pub gaussian_sigma2: f64,
    pub outlier_fraction: f64,
    pub outlier_sigma2: f64,
    /// Meters of drift per meter traveled.
    pub drift_rate: f64,
    pub drift_axis: DriftAxis,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::clean(0)
    }
}

impl NoiseSpec {
    pub fn clean(seed: u64) -> Self {
        NoiseSpec {
            gaussian_sigma2: 0.0,
            outlier_fraction: 0.0,
            outlier_sigma2: DEFAULT_OUTLIER_SIGMA2,
            drift_rate: 0.0,
            drift_axis: DriftAxis::Random,
            seed,
        }
    }

    pub fn mixed(seed: u64) -> Self {
        NoiseSpec {
            gaussian_sigma2: MIXED_GAUSSIAN_SIGMA2,
            outlier_fraction: MIXED_OUTLIER_FRACTION,
            drift_rate: MIXED_DRIFT_RATE,
            ..NoiseSpec::clean(seed)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.gaussian_sigma2) || !finite_nonneg(self.outlier_sigma2) {
            return Err("variances must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(format!("outlier fraction {} not in [0, 1]", self.outlier_fraction));
        }
        if !finite_nonneg(self.drift_rate) {
            return Err("drift rate must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.gaussian_sigma2 == 0.0 && self.outlier_fraction == 0.0 && self.drift_rate == 0.0
    }
}

/// Shape of the generated base trajectories. Defaults describe a ground
/// vehicle: mostly forward motion and yaw, small roll/pitch/z.
///
/// The per-step heading change is itself a bounded random walk
/// `δψ_k = clamp(ρ δψ_{k-1} + w_k, ±yaw_step_max)`, so turns persist over
/// several poses. Roll and pitch rates follow a smaller walk of the same
/// kind, and the angles themselves decay back toward level.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BaseTrajectoryConfig {
    pub step_min: f64,
    pub step_max: f64,
    /// Std of the innovation `w_k` of the heading-change walk, rad.
    pub yaw_step_std: f64,
    /// Persistence `ρ` of the heading-change walk.
    pub yaw_persistence: f64,
    /// Pull of the heading back toward its initial direction; 1 disables it.
    pub heading_persistence: f64,
    /// Clamp on the per-step heading change, rad.
    pub yaw_step_max: f64,
    /// Std of the roll/pitch innovation, rad.
    pub tilt_step_std: f64,
    /// Persistence of the roll/pitch rates.
    pub tilt_rate_persistence: f64,
    /// AR(1) coefficient pulling roll/pitch back toward level.
    pub tilt_persistence: f64,
    /// Std of the per-step body-frame vertical displacement, m.
    pub vertical_step_std: f64,
    /// Seconds between poses.
    pub dt: f64,
}

impl Default for BaseTrajectoryConfig {
    fn default() -> Self {
        BaseTrajectoryConfig {
            step_min: 0.1,
            step_max: 0.3,
            yaw_step_std: 0.05,
            yaw_persistence: 0.9,
            heading_persistence: 1.0,
            yaw_step_max: 0.2,
            tilt_step_std: 0.008,
            tilt_rate_persistence: 0.6,
            tilt_persistence: 0.95,
            vertical_step_std: 0.02,
            dt: 0.1,
        }
    }
}

pub fn generate_base_trajectory(num_poses: usize, seed: u64) -> Trajectory {
    generate_base_trajectory_with(num_poses, seed, &BaseTrajectoryConfig::default())
}

pub fn generate_base_trajectory_with(
    num_poses: usize,
    seed: u64,
    config: &BaseTrajectoryConfig,
) -> Trajectory {
    assert!(num_poses >= 2, "a base trajectory needs at least 2 poses");
    let mut rng = rng_for(seed);
    let yaw_noise = normal(config.yaw_step_std.powi(2));
    let tilt_noise = normal(config.tilt_step_std.powi(2));
    let vertical_noise = normal(config.vertical_step_std.powi(2));

    let (mut yaw, mut pitch, mut roll) = (0.0f64, 0.0f64, 0.0f64);
    let (mut dyaw, mut dpitch, mut droll) = (0.0f64, 0.0f64, 0.0f64);
    let mut position = Vector3::zeros();
    let mut transforms = Vec::with_capacity(num_poses);
    transforms.push(Transform::identity());
    for _ in 1..num_poses {
        let rotation = euler_to_matrix(&Vector3::new(yaw, pitch, roll));
        let forward = rng.random_range(config.step_min..=config.step_max);
        let step = Vector3::new(forward, 0.0, vertical_noise.sample(&mut rng));
        position += rotation * step;

        dyaw = (config.yaw_persistence * dyaw + yaw_noise.sample(&mut rng))
            .clamp(-config.yaw_step_max, config.yaw_step_max);
        yaw = wrap_angle(config.heading_persistence * yaw + dyaw);
        dpitch = config.tilt_rate_persistence * dpitch + tilt_noise.sample(&mut rng);
        droll = config.tilt_rate_persistence * droll + tilt_noise.sample(&mut rng);
        pitch = config.tilt_persistence * pitch + dpitch;
        roll = config.tilt_persistence * roll + droll;
        transforms.push(Transform::from_parts(
            euler_to_matrix(&Vector3::new(yaw, pitch, roll)),
            position,
        ));
    }
    Trajectory::from_transforms(transforms, config.dt)
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI) % (2.0 * PI);
    if w < 0.0 {
        w += 2.0 * PI;
    }
    w - PI
}

/// Random extrinsic: uniformly distributed axis, angle in `[0, max_angle)`,
/// translation components uniform in `[-max_translation, max_translation]`.
pub fn random_extrinsic(seed: u64, max_angle: f64, max_translation: f64) -> Extrinsic {
    let mut rng = rng_for(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let axis = loop {
        let v = Vector3::new(unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng));
        if v.norm() > 1e-6 {
            break v.normalize();
        }
    };
    let angle = rng.random_range(0.0..max_angle);
    let t = Vector3::from_fn(|_, _| rng.random_range(-max_translation..=max_translation));
    Extrinsic::new(RotVec::new(axis * angle), t)
}

/// Ground truth of one simulated sensor pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x_gt: Extrinsic,
    pub clean1: Trajectory,
    pub clean2: Trajectory,
}

impl GroundTruth {
    pub fn new(clean1: Trajectory, x_gt: Extrinsic) -> Self {
        let clean2 = derive_second_trajectory(&clean1, &x_gt);
        GroundTruth {
            x_gt,
            clean1,
            clean2,
        }
    }

    /// Largest deviation of `clean2` from `clean1 * X`.
    pub fn construction_defect(&self) -> f64 {
        let x = self.x_gt.to_transform();
        self.clean1
            .transforms()
            .zip(self.clean2.transforms())
            .map(|(t1, t2)| (*t1 * x).max_abs_diff(t2))
            .fold(0.0, f64::max)
    }
}

/// `T2_j = T1_j * X`.
pub fn derive_second_trajectory(base: &Trajectory, x_gt: &Extrinsic) -> Trajectory {
    let x = x_gt.to_transform();
    base.map_transforms(|_, t| *t * x)
}

/// Right-multiplies every pose by `[R(e), t]` with Euler angles `e ~ N(0, 2σ²)`
/// and translation `t ~ N(0, σ²)` per component.
pub fn apply_gaussian(t: &Trajectory, sigma2: f64, seed: u64) -> Trajectory {
    assert!(sigma2 >= 0.0, "sigma2 must be non-negative");
    if sigma2 == 0.0 {
        return t.clone();
    }
    let mut rng = rng_for(seed);
    let angle = normal(2.0 * sigma2);
    let trans = normal(sigma2);
    t.map_transforms(|_, pose| {
        let e = Vector3::new(
            angle.sample(&mut rng),
            angle.sample(&mut rng),
            angle.sample(&mut rng),
        );
        let d = Vector3::new(
            trans.sample(&mut rng),
            trans.sample(&mut rng),
            trans.sample(&mut rng),
        );
        *pose * Transform::from_parts(euler_to_matrix(&e), d)
    })
}

/// Adds a world-frame position jump `~ N(0, σ²)` per component to
/// `floor(fraction * N)` poses chosen without replacement. Returns the
/// trajectory and the sorted affected indices.
pub fn apply_outliers(
    t: &Trajectory,
    fraction: f64,
    sigma2: f64,
    seed: u64,
) -> (Trajectory, Vec<usize>) {
    assert!((0.0..=1.0).contains(&fraction), "fraction must be in [0, 1]");
    let count = (fraction * t.len() as f64).floor() as usize;
    if count == 0 {
        return (t.clone(), Vec::new());
    }
    let mut rng = rng_for(seed);
    let mut chosen = index::sample(&mut rng, t.len(), count).into_vec();
    chosen.sort_unstable();
    let jump = normal(sigma2);
    let mut jumps = vec![None; t.len()];
    for &k in &chosen {
        jumps[k] = Some(Vector3::new(
            jump.sample(&mut rng),
            jump.sample(&mut rng),
            jump.sample(&mut rng),
        ));
    }
    let noisy = t.map_transforms(|k, pose| match jumps[k] {
        Some(d) => Transform::from_parts(*pose.rotation(), pose.translation() + d),
        None => *pose,
    });
    (noisy, chosen)
}

/// Shifts pose `j` by `rate * s_j` along a world axis, `s_j` being the path
/// length travelled up to pose `j`.
pub fn apply_drift(t: &Trajectory, rate: f64, axis: DriftAxis, seed: u64) -> Trajectory {
    assert!(rate >= 0.0, "drift rate must be non-negative");
    if rate == 0.0 {
        return t.clone();
    }
    let mut rng = rng_for(seed);
    let direction = axis.resolve(&mut rng);
    let mut path = 0.0;
    let mut previous: Option<Vector3<f64>> = None;
    t.map_transforms(|_, pose| {
        let p = *pose.translation();
        if let Some(prev) = previous {
            path += (p - prev).norm();
        }
        previous = Some(p);
        Transform::from_parts(*pose.rotation(), p + direction * (rate * path))
    })
}

/// Noisy trajectory plus the indices hit by outlier jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTrajectory {
    pub trajectory: Trajectory,
    pub outlier_indices: Vec<usize>,
}

/// Applies drift, then outliers, then Gaussian noise. Each stage draws from
/// its own stream derived from `spec.seed`.
pub fn apply_noise(t: &Trajectory, spec: &NoiseSpec) -> NoisyTrajectory {
    let drifted = apply_drift(t, spec.drift_rate, spec.drift_axis, derive_seed(spec.seed, &[1]));
    let (jumped, outlier_indices) = apply_outliers(
        &drifted,
        spec.outlier_fraction,
        spec.outlier_sigma2,
        derive_seed(spec.seed, &[2]),
    );
    let trajectory = apply_gaussian(&jumped, spec.gaussian_sigma2, derive_seed(spec.seed, &[3]));
    NoisyTrajectory {
        trajectory,
        outlier_indices,
    }
}

/// Mixed pattern at the median levels: σ² = 5e-3, 5 % outliers, 0.025 m/m drift.
pub fn apply_mixed(t: &Trajectory, seed: u64) -> Trajectory {
    apply_noise(t, &NoiseSpec::mixed(seed)).trajectory
}

/// Both sensor trajectories of a ground truth, noised independently.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPair {
    pub sensor1: NoisyTrajectory,
    pub sensor2: NoisyTrajectory,
}

pub fn noisy_pair(gt: &GroundTruth, spec: &NoiseSpec) -> NoisyPair {
    let spec1 = NoiseSpec {
        seed: derive_seed(spec.seed, &[1]),
        ..*spec
    };
    let spec2 = NoiseSpec {
        seed: derive_seed(spec.seed, &[2]),
        ..*spec
    };
    NoisyPair {
        sensor1: apply_noise(&gt.clean1, &spec1),
        sensor2: apply_noise(&gt.clean2, &spec2),
    }
}

/// RMS absolute trajectory error after rigid (rotation + translation, no
/// scale) alignment of `estimate` onto `reference`.
pub fn rms_ate(reference: &Trajectory, estimate: &Trajectory) -> Result<f64, TrajectoryError> {
    if reference.len() != estimate.len() {
        return Err(TrajectoryError::LengthMismatch(reference.len(), estimate.len()));
    }
    if reference.is_empty() {
        return Ok(0.0);
    }
    let target = reference.positions();
    let source = estimate.positions();
    let (r, t) = rigid_alignment(&target, &source);
    let sum_sq: f64 = target
        .iter()
        .zip(&source)
        .map(|(p, q)| (p - (r * q + t)).norm_squared())
        .sum();
    Ok((sum_sq / target.len() as f64).sqrt())
}
