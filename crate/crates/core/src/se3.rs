//! Rigid-body transform algebra.
//!
//! Rotations are stored as 3x3 matrices inside [`Transform`] and exchanged with
//! the optimizer as rotation vectors ([`RotVec`]). All angles are radians.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// Orthonormality tolerance accepted by [`matrix_to_rotvec`].
pub const ROTATION_CHECK_TOL: f64 = 1e-6;

/// Number of compositions after which [`compose_chain`] projects back onto SO(3).
pub const REORTHONORMALIZE_EVERY: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("matrix is not a rotation (orthonormality defect {defect:.3e}, det {det:.6})")]
    NotARotation { defect: f64, det: f64 },
}

/// Axis-angle rotation: direction is the axis, magnitude the angle.
///
/// Always canonical: the angle lies in `[0, π]`. At exactly `π` the two
/// antipodal representations describe the same rotation; the one whose last
/// nonzero component is positive is kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotVec(Vector3<f64>);

impl RotVec {
    pub fn new(v: Vector3<f64>) -> Self {
        RotVec(canonicalize(v))
    }

    pub fn from_components(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        RotVec(Vector3::zeros())
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        rotvec_to_matrix(self)
    }
}

impl From<RotVec> for Vector3<f64> {
    fn from(r: RotVec) -> Self {
        r.0
    }
}

fn canonicalize(v: Vector3<f64>) -> Vector3<f64> {
    let angle = v.norm();
    if !(angle > PI) {
        return tie_break(v, angle);
    }
    let axis = v / angle;
    // fold into (-π, π]
    let mut folded = angle % (2.0 * PI);
    if folded > PI {
        folded -= 2.0 * PI;
    }
    let out = axis * folded;
    tie_break(out, folded.abs())
}

fn tie_break(v: Vector3<f64>, angle: f64) -> Vector3<f64> {
    if angle == PI {
        let last = [v.z, v.y, v.x].into_iter().find(|c| *c != 0.0).unwrap_or(0.0);
        if last < 0.0 {
            return -v;
        }
    }
    v
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn rotvec_to_matrix(r: &RotVec) -> Matrix3<f64> {
    exp_so3(&r.0)
}

pub(crate) fn exp_so3(v: &Vector3<f64>) -> Matrix3<f64> {
    let angle_sq = v.norm_squared();
    let k = skew(v);
    let (a, b) = if angle_sq < 1e-10 {
        // Taylor terms of sin(x)/x and (1 - cos x)/x^2
        (1.0 - angle_sq / 6.0, 0.5 - angle_sq / 24.0)
    } else {
        let angle = angle_sq.sqrt();
        (angle.sin() / angle, (1.0 - angle.cos()) / angle_sq)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Logarithm of a rotation matrix, extracted through a unit quaternion so that
/// angles near `π` stay well conditioned.
pub fn matrix_to_rotvec(m: &Matrix3<f64>) -> Result<RotVec, Se3Error> {
    check_rotation(m)?;
    Ok(quaternion_to_rotvec(&matrix_to_quaternion(m)))
}

fn check_rotation(m: &Matrix3<f64>) -> Result<(), Se3Error> {
    let defect = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if !(defect <= ROTATION_CHECK_TOL) || !((det - 1.0).abs() <= ROTATION_CHECK_TOL) {
        return Err(Se3Error::NotARotation { defect, det });
    }
    Ok(())
}

/// Shepperd's method. Returns `(w, x, y, z)` with `w >= 0`.
fn matrix_to_quaternion(m: &Matrix3<f64>) -> Quaternion<f64> {
    let trace = m.trace();
    let (w, x, y, z);
    if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
        let s = 2.0 * (1.0 + trace).sqrt();
        w = 0.25 * s;
        x = (m[(2, 1)] - m[(1, 2)]) / s;
        y = (m[(0, 2)] - m[(2, 0)]) / s;
        z = (m[(1, 0)] - m[(0, 1)]) / s;
    } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
        let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
        w = (m[(2, 1)] - m[(1, 2)]) / s;
        x = 0.25 * s;
        y = (m[(0, 1)] + m[(1, 0)]) / s;
        z = (m[(0, 2)] + m[(2, 0)]) / s;
    } else if m[(1, 1)] >= m[(2, 2)] {
        let s = 2.0 * (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt();
        w = (m[(0, 2)] - m[(2, 0)]) / s;
        x = (m[(0, 1)] + m[(1, 0)]) / s;
        y = 0.25 * s;
        z = (m[(1, 2)] + m[(2, 1)]) / s;
    } else {
        let s = 2.0 * (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt();
        w = (m[(1, 0)] - m[(0, 1)]) / s;
        x = (m[(0, 2)] + m[(2, 0)]) / s;
        y = (m[(1, 2)] + m[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let q = Quaternion::new(w, x, y, z).normalize();
    if q.w < 0.0 {
        -q
    } else {
        q
    }
}

fn quaternion_to_rotvec(q: &Quaternion<f64>) -> RotVec {
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < 1e-12 {
        return RotVec::new(v * (2.0 / w));
    }
    let angle = 2.0 * s.atan2(w);
    RotVec::new(v * (angle / s))
}

/// Intrinsic Z-Y-X composition: `angles = (yaw, pitch, roll)`, giving
/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_to_matrix(angles: &Vector3<f64>) -> Matrix3<f64> {
    let (sy, cy) = angles[0].sin_cos();
    let (sp, cp) = angles[1].sin_cos();
    let (sr, cr) = angles[2].sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    rz * ry * rx
}

/// Right Jacobian of the exponential map: `exp(θ + δ) ≈ exp(θ) exp(J_r(θ) δ)`.
pub fn right_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle_sq = theta.norm_squared();
    let k = skew(theta);
    let (a, b) = if angle_sq < 1e-8 {
        (0.5 - angle_sq / 24.0, 1.0 / 6.0 - angle_sq / 120.0)
    } else {
        let angle = angle_sq.sqrt();
        (
            (1.0 - angle.cos()) / angle_sq,
            (angle - angle.sin()) / (angle_sq * angle),
        )
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a matrix already known to be a rotation.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Transform {
            rotation,
            translation,
        }
    }

    /// Checked constructor.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, Se3Error> {
        check_rotation(&rotation)?;
        Ok(Self::from_parts(rotation, translation))
    }

    pub fn from_rotvec(theta: &RotVec, translation: Vector3<f64>) -> Self {
        Self::from_parts(theta.to_matrix(), translation)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), translation)
    }

    /// Quaternion given as `(qx, qy, qz, qw)`; normalized before use.
    pub fn from_quaternion_xyzw(translation: Vector3<f64>, q: [f64; 4]) -> Self {
        let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2]));
        Self::from_parts(*uq.to_rotation_matrix().matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotvec(&self) -> RotVec {
        quaternion_to_rotvec(&matrix_to_quaternion(&self.rotation))
    }

    /// Unit quaternion `(qx, qy, qz, qw)` with `qw >= 0`.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = matrix_to_quaternion(&self.rotation);
        [q.i, q.j, q.k, q.w]
    }

    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }

    pub fn orthonormalized(&self) -> Transform {
        Transform {
            rotation: project_to_so3(&self.rotation),
            translation: self.translation,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        self.rotvec().angle()
    }

    /// Largest absolute entry difference of the homogeneous matrices.
    pub fn max_abs_diff(&self, other: &Transform) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).abs().max()
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Transform> for &'a Transform {
    type Output = Transform;

    fn mul(self, rhs: &'a Transform) -> Transform {
        self.compose(rhs)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.translation;
        let r = self.rotvec().vector();
        write!(
            f,
            "t=[{:.6}, {:.6}, {:.6}] rotvec=[{:.6}, {:.6}, {:.6}]",
            t.x, t.y, t.z, r.x, r.y, r.z
        )
    }
}

/// Left-to-right product of a long sequence of transforms, re-projecting onto
/// SO(3) every [`REORTHONORMALIZE_EVERY`] compositions.
pub fn compose_chain<I>(transforms: I) -> Transform
where
    I: IntoIterator<Item = Transform>,
{
    let mut acc = Transform::identity();
    for (k, t) in transforms.into_iter().enumerate() {
        acc = acc.compose(&t);
        if (k + 1) % REORTHONORMALIZE_EVERY == 0 {
            acc = acc.orthonormalized();
        }
    }
    acc
}

/// Geodesic distance between two rotations, radians.
pub fn rotation_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    quaternion_to_rotvec(&matrix_to_quaternion(&(a.transpose() * b))).angle()
}

/// Log of a matrix assumed to be a rotation; skips the orthonormality check.
pub(crate) fn log_so3(m: &Matrix3<f64>) -> Vector3<f64> {
    quaternion_to_rotvec(&matrix_to_quaternion(m)).vector()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat_close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn vec_close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> Transform {
        let axis = random_unit(rng);
        let angle = rng.random_range(0.0..PI);
        let t = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        Transform::from_rotvec(&RotVec::new(axis * angle), t)
    }

    #[test]
    fn zero_rotvec_is_identity() {
        assert_eq!(RotVec::zero().to_matrix(), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_x_maps_y_to_z() {
        // Rodrigues by hand: cos = 0, sin = 1, K = skew(x) => R = I + K + K^2
        let r = RotVec::from_components(PI / 2.0, 0.0, 0.0).to_matrix();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!(mat_close(&r, &expected, 1e-15));
        assert!(vec_close(&(r * Vector3::y()), &Vector3::z(), 1e-15));
    }

    #[test]
    fn near_pi_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let axis = random_unit(&mut rng);
            let r = RotVec::new(axis * (PI - 1e-8));
            let back = matrix_to_rotvec(&r.to_matrix()).unwrap();
            let err = rotation_distance(&r.to_matrix(), &back.to_matrix());
            assert!(err < 1e-6, "angular error {err}");
            assert!(back.angle() <= PI);
        }
    }

    #[test]
    fn identity_log_is_zero() {
        assert_eq!(
            matrix_to_rotvec(&Matrix3::identity()).unwrap().vector(),
            Vector3::zeros()
        );
    }

    #[test]
    fn half_turn_about_z_breaks_tie_toward_positive() {
        let m = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let r = matrix_to_rotvec(&m).unwrap();
        assert!((r.angle() - PI).abs() < 1e-12);
        assert!(r.vector().z > 0.0);
        assert!(r.vector().x.abs() < 1e-12 && r.vector().y.abs() < 1e-12);

        let neg = RotVec::from_components(0.0, 0.0, -PI);
        assert_eq!(neg.vector(), Vector3::new(0.0, 0.0, PI));
    }

    #[test]
    fn log_exp_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let t = random_transform(&mut rng);
            let r = matrix_to_rotvec(t.rotation()).unwrap();
            assert!(r.angle() <= PI);
            assert!(mat_close(&r.to_matrix(), t.rotation(), 1e-9));
        }
    }

    #[test]
    fn canonicalization_folds_large_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let axis = random_unit(&mut rng);
            let angle = rng.random_range(0.0..4.0 * PI);
            let raw = axis * angle;
            let canon = RotVec::new(raw);
            let mut folded = angle % (2.0 * PI);
            if folded > PI {
                folded = 2.0 * PI - folded;
            }
            assert!((canon.angle() - folded).abs() < 1e-9);
            assert!(mat_close(&exp_so3(&raw), &canon.to_matrix(), 1e-9));
            let log = matrix_to_rotvec(&exp_so3(&raw)).unwrap();
            assert!((log.angle() - folded).abs() < 1e-9);
            if folded > 1e-6 && folded < PI - 1e-6 {
                assert!(vec_close(&log.vector(), &canon.vector(), 1e-8));
            }
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            matrix_to_rotvec(&m),
            Err(Se3Error::NotARotation { .. })
        ));
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matrix_to_rotvec(&reflection).is_err());
    }

    #[test]
    fn compose_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_transform(&mut rng);
        assert_eq!(t * Transform::identity(), t);
        assert!((t * t.inverse()).max_abs_diff(&Transform::identity()) < 1e-12);
        let a = Transform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = Transform::from_translation(Vector3::new(0.0, 2.0, 0.0));
        assert_eq!(*(a * b).translation(), Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn inverse_basics() {
        assert_eq!(Transform::identity().inverse(), Transform::identity());
        let t = Transform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(*t.inverse().translation(), Vector3::new(-1.0, -2.0, -3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let t = random_transform(&mut rng);
            assert!(t.inverse().inverse().max_abs_diff(&t) < 1e-12);
            assert!((t * t.inverse()).max_abs_diff(&Transform::identity()) < 1e-12);
        }
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (a, b, c) = (
                random_transform(&mut rng),
                random_transform(&mut rng),
                random_transform(&mut rng),
            );
            assert!(((a * b) * c).max_abs_diff(&(a * (b * c))) < 1e-12);
        }
    }

    #[test]
    fn long_chain_stays_on_so3() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let steps: Vec<Transform> = (0..1_000_000)
            .map(|_| {
                let axis = random_unit(&mut rng);
                Transform::from_rotvec(&RotVec::new(axis * 0.3), axis * 1e-3)
            })
            .collect();
        let acc = compose_chain(steps);
        assert!((acc.rotation().determinant() - 1.0).abs() < 1e-9);
        let defect = (acc.rotation().transpose() * acc.rotation() - Matrix3::identity())
            .abs()
            .max();
        assert!(defect < 1e-9);
    }

    #[test]
    fn euler_zero_and_yaw() {
        assert_eq!(euler_to_matrix(&Vector3::zeros()), Matrix3::identity());
        let r = euler_to_matrix(&Vector3::new(PI / 2.0, 0.0, 0.0));
        assert!(vec_close(&(r * Vector3::x()), &Vector3::y(), 1e-15));
    }

    #[test]
    fn euler_small_angles_first_order() {
        let a = 1e-4;
        let r = euler_to_matrix(&Vector3::new(a, a, a));
        // first order: I + skew(roll, pitch, yaw)
        let approx = Matrix3::identity() + skew(&Vector3::new(a, a, a));
        assert!((r - approx).abs().max() < 1e-7);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn right_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let theta = random_unit(&mut rng) * rng.random_range(0.0..3.0);
            let jr = right_jacobian(&theta);
            let r0 = exp_so3(&theta);
            for k in 0..3 {
                let h = 1e-6;
                let mut d = Vector3::zeros();
                d[k] = h;
                let rp = exp_so3(&(theta + d));
                let rm = exp_so3(&(theta - d));
                // R0^T dR/dθ_k is skew(J_r e_k)
                let deriv = r0.transpose() * (rp - rm) / (2.0 * h);
                let expected = skew(&jr.column(k).into_owned());
                assert!((deriv - expected).abs().max() < 1e-6);
            }
        }
    }

    #[test]
    fn quaternion_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let t = random_transform(&mut rng);
            let q = t.quaternion_xyzw();
            assert!(q[3] >= 0.0);
            let back = Transform::from_quaternion_xyzw(*t.translation(), q);
            assert!(back.max_abs_diff(&t) < 1e-12);
        }
    }
}
