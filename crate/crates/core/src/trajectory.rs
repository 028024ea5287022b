//! Pose sequences, reference frame selection and relative motions.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::se3::Transform;

/// Default timestamp tolerance for [`associate`], seconds.
pub const DEFAULT_ASSOCIATION_TOLERANCE: f64 = 0.02;

/// Second singular value of the axis matrix below which a motion set is degenerate.
pub const DEGENERATE_AXIS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("pair selection produced no pairs (length {length}, strategy {strategy})")]
    TooFewPoses {
        length: usize,
        strategy: SelectionStrategy,
    },
    #[error("trajectory lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("timestamps not strictly increasing at pose {index} ({previous} -> {current})")]
    NonMonotonicTimestamps {
        index: usize,
        previous: f64,
        current: f64,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("pair ({i}, {j}) out of range for {len} poses")]
    PairOutOfRange { i: usize, j: usize, len: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub timestamp: f64,
    pub transform: Transform,
}

/// World-frame poses of one sensor with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, TrajectoryError> {
        for (index, w) in poses.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(TrajectoryError::NonMonotonicTimestamps {
                    index: index + 1,
                    previous: w[0].timestamp,
                    current: w[1].timestamp,
                });
            }
        }
        Ok(Trajectory { poses })
    }

    /// Timestamps `k * dt` for the given transforms.
    pub fn from_transforms(transforms: Vec<Transform>, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Trajectory {
            poses: transforms
                .into_iter()
                .enumerate()
                .map(|(k, transform)| Pose {
                    timestamp: k as f64 * dt,
                    transform,
                })
                .collect(),
        }
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn transform(&self, index: usize) -> &Transform {
        &self.poses[index].transform
    }

    pub fn transforms(&self) -> impl Iterator<Item = &Transform> + '_ {
        self.poses.iter().map(|p| &p.transform)
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| *p.transform.translation()).collect()
    }

    /// Same timestamps, transforms replaced pose by pose.
    pub fn map_transforms<F>(&self, mut f: F) -> Trajectory
    where
        F: FnMut(usize, &Transform) -> Transform,
    {
        Trajectory {
            poses: self
                .poses
                .iter()
                .enumerate()
                .map(|(k, p)| Pose {
                    timestamp: p.timestamp,
                    transform: f(k, &p.transform),
                })
                .collect(),
        }
    }
}

/// Which earlier pose serves as reference for each pose `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectionStrategy {
    /// Every pose relative to the first one.
    First,
    /// Pose `j` relative to pose `j - n`.
    Previous(usize),
    /// Segments of `n` poses, each relative to its first pose (keyframe).
    Keyframe(usize),
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionStrategy::First => write!(f, "A"),
            SelectionStrategy::Previous(n) => write!(f, "B{n}"),
            SelectionStrategy::Keyframe(n) => write!(f, "C{n}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid strategy {0:?}: expected A, B<n> or C<n> with n >= 1")]
pub struct ParseStrategyError(pub String);

impl FromStr for SelectionStrategy {
    type Err = ParseStrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseStrategyError(s.to_string());
        let s_trim = s.trim();
        if s_trim.eq_ignore_ascii_case("a") {
            return Ok(SelectionStrategy::First);
        }
        let mut chars = s_trim.chars();
        let kind = chars.next().ok_or_else(err)?.to_ascii_uppercase();
        let n: usize = chars.as_str().parse().map_err(|_| err())?;
        if n == 0 {
            return Err(err());
        }
        match kind {
            'B' => Ok(SelectionStrategy::Previous(n)),
            'C' => Ok(SelectionStrategy::Keyframe(n)),
            _ => Err(err()),
        }
    }
}

/// Index pairs `(i, j)`, `i < j`, sorted by `j`.
pub fn select_pairs(
    length: usize,
    strategy: SelectionStrategy,
) -> Result<Vec<(usize, usize)>, TrajectoryError> {
    let pairs: Vec<(usize, usize)> = match strategy {
        SelectionStrategy::First => (1..length).map(|j| (0, j)).collect(),
        SelectionStrategy::Previous(n) => {
            assert!(n >= 1, "B(n) requires n >= 1");
            (n..length).map(|j| (j - n, j)).collect()
        }
        SelectionStrategy::Keyframe(n) => {
            assert!(n >= 1, "C(n) requires n >= 1");
            (0..length)
                .filter(|j| j % n != 0)
                .map(|j| (j - j % n, j))
                .collect()
        }
    };
    if pairs.is_empty() {
        return Err(TrajectoryError::TooFewPoses { length, strategy });
    }
    Ok(pairs)
}

/// The set S of selected pairs with the relative motions of both sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPairSet {
    pairs: Vec<(usize, usize)>,
    motions_a: Vec<Transform>,
    motions_b: Vec<Transform>,
}

impl MotionPairSet {
    /// Builds a set directly from motion pairs; indices are `(k, k + 1)`.
    pub fn from_motions(motions: Vec<(Transform, Transform)>) -> Self {
        let pairs = (0..motions.len()).map(|k| (k, k + 1)).collect();
        let (motions_a, motions_b) = motions.into_iter().unzip();
        MotionPairSet {
            pairs,
            motions_a,
            motions_b,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn motions_a(&self) -> &[Transform] {
        &self.motions_a
    }

    pub fn motions_b(&self) -> &[Transform] {
        &self.motions_b
    }

    /// Cardinality |S|.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Transform, &Transform)> + '_ {
        self.motions_a.iter().zip(self.motions_b.iter())
    }
}

/// `A_k = T1_i^-1 T1_j` and `B_k = T2_i^-1 T2_j` for every pair.
pub fn relative_motions(
    t1: &Trajectory,
    t2: &Trajectory,
    pairs: &[(usize, usize)],
) -> Result<MotionPairSet, TrajectoryError> {
    if t1.len() != t2.len() {
        return Err(TrajectoryError::LengthMismatch(t1.len(), t2.len()));
    }
    let len = t1.len();
    let mut motions_a = Vec::with_capacity(pairs.len());
    let mut motions_b = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i >= j || j >= len {
            return Err(TrajectoryError::PairOutOfRange { i, j, len });
        }
        motions_a.push(t1.transform(i).inverse() * *t1.transform(j));
        motions_b.push(t2.transform(i).inverse() * *t2.transform(j));
    }
    Ok(MotionPairSet {
        pairs: pairs.to_vec(),
        motions_a,
        motions_b,
    })
}

/// Convenience: select pairs and build the motion set in one go.
pub fn build_motion_pairs(
    t1: &Trajectory,
    t2: &Trajectory,
    strategy: SelectionStrategy,
) -> Result<MotionPairSet, TrajectoryError> {
    if t1.len() != t2.len() {
        return Err(TrajectoryError::LengthMismatch(t1.len(), t2.len()));
    }
    let pairs = select_pairs(t1.len(), strategy)?;
    relative_motions(t1, t2, &pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSufficiency {
    /// Largest two singular values of the unit rotation-axis matrix, scaled by `1/sqrt(|S|)`.
    pub axis_singular_values: [f64; 2],
    pub min_translation: f64,
    pub max_translation: f64,
    pub degenerate: bool,
}

/// Observability diagnostic for a motion set: rotation axes of `A` must span
/// at least two directions.
pub fn motion_sufficiency(mps: &MotionPairSet) -> MotionSufficiency {
    let n = mps.len();
    let mut axes = DMatrix::<f64>::zeros(3, n.max(1));
    for (k, a) in mps.motions_a().iter().enumerate() {
        let r = a.rotvec();
        let angle = r.angle();
        if angle > 1e-12 {
            axes.set_column(k, &(r.vector() / angle));
        }
    }
    let mut sv: Vec<f64> = axes.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let scale = 1.0 / (n.max(1) as f64).sqrt();
    let s0 = sv.first().copied().unwrap_or(0.0) * scale;
    let s1 = sv.get(1).copied().unwrap_or(0.0) * scale;

    let norms = mps.motions_a().iter().map(|a| a.translation().norm());
    let (min_translation, max_translation) = norms.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    MotionSufficiency {
        axis_singular_values: [s0, s1],
        min_translation: if n == 0 { 0.0 } else { min_translation },
        max_translation,
        degenerate: n < 2 || s1 < DEGENERATE_AXIS_THRESHOLD,
    }
}

/// Result of timestamp association between two independently recorded trajectories.
#[derive(Debug, Clone)]
pub struct Association {
    pub first: Trajectory,
    pub second: Trajectory,
    pub dropped: usize,
}

/// Nearest-neighbour timestamp association. Poses of `t1` without a partner in
/// `t2` within `tolerance` seconds are dropped.
pub fn associate(t1: &Trajectory, t2: &Trajectory, tolerance: f64) -> Association {
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut dropped = 0;
    let other = t2.poses();
    let mut cursor = 0usize;
    let mut last_used: Option<usize> = None;
    for p in t1.poses() {
        while cursor + 1 < other.len()
            && (other[cursor + 1].timestamp - p.timestamp).abs()
                <= (other[cursor].timestamp - p.timestamp).abs()
        {
            cursor += 1;
        }
        let matched = other
            .get(cursor)
            .filter(|q| (q.timestamp - p.timestamp).abs() <= tolerance)
            .filter(|_| last_used != Some(cursor));
        match matched {
            Some(q) => {
                first.push(*p);
                second.push(Pose {
                    timestamp: p.timestamp,
                    transform: q.transform,
                });
                last_used = Some(cursor);
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("association dropped {dropped} poses without a partner within {tolerance} s");
    }
    Association {
        first: Trajectory { poses: first },
        second: Trajectory { poses: second },
        dropped,
    }
}

/// Reads a TUM trajectory: `timestamp tx ty tz qx qy qz qw` per row, `#` comments.
pub fn load_tum(path: impl AsRef<Path>) -> Result<Trajectory, TrajectoryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tum(&text, path)
}

pub fn parse_tum(text: &str, path: &Path) -> Result<Trajectory, TrajectoryError> {
    let mut poses = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| TrajectoryError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, found {}", fields.len())));
        }
        let mut values = [0.0f64; 8];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f
                .parse()
                .map_err(|_| parse_err(format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {f:?}")));
            }
        }
        let q = [values[4], values[5], values[6], values[7]];
        let qn = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if qn < 1e-12 {
            return Err(parse_err("zero quaternion".to_string()));
        }
        let transform =
            Transform::from_quaternion_xyzw(Vector3::new(values[1], values[2], values[3]), q);
        poses.push(Pose {
            timestamp: values[0],
            transform,
        });
    }
    Trajectory::new(poses)
}

/// Writes a TUM trajectory using shortest round-trip float formatting.
pub fn save_tum(trajectory: &Trajectory, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
    let path = path.as_ref();
    let io_err = |source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_tum(trajectory, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_tum<W: Write>(trajectory: &Trajectory, w: &mut W) -> io::Result<()> {
    writeln!(w, "# timestamp tx ty tz qx qy qz qw")?;
    for p in trajectory.poses() {
        let t = p.transform.translation();
        let q = p.transform.quaternion_xyzw();
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            p.timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )?;
    }
    Ok(())
}
