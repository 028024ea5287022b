//! Orthogonal Procrustes (Kabsch) alignment.

use nalgebra::{Matrix3, Vector3};

/// Rotation `R` minimizing `Σ w_k |target_k - R source_k|²` (no centering).
pub fn kabsch_rotation<'a, I>(pairs: I) -> Matrix3<f64>
where
    I: IntoIterator<Item = (&'a Vector3<f64>, &'a Vector3<f64>)>,
{
    let mut h = Matrix3::zeros();
    for (target, source) in pairs {
        h += target * source.transpose();
    }
    rotation_from_correlation(&h)
}

fn rotation_from_correlation(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Rigid motion `(R, t)` minimizing `Σ |target_k - (R source_k + t)|²`.
///
/// Panics when the slices differ in length or are empty.
pub fn rigid_alignment(target: &[Vector3<f64>], source: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    assert_eq!(target.len(), source.len());
    assert!(!target.is_empty());
    let n = target.len() as f64;
    let ct = target.iter().sum::<Vector3<f64>>() / n;
    let cs = source.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (t, s) in target.iter().zip(source) {
        h += (t - ct) * (s - cs).transpose();
    }
    let r = rotation_from_correlation(&h);
    (r, ct - r * cs)
}
