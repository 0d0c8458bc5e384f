//! SO(3) primitives: skew maps, the Rodrigues exponential, unit quaternions,
//! ZYX Euler angles and polar re-orthonormalization.

use std::f64::consts::FRAC_PI_2;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `‖RᵀR − I‖_F` and `|det R − 1|` for a valid rotation.
pub const SO3_TOLERANCE: f64 = 1e-9;

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
pub const SMALL_ANGLE_THRESHOLD: f64 = 1e-6;

const SKEW_TOLERANCE: f64 = 1e-8;
const GIMBAL_GUARD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not skew-symmetric (‖M + Mᵀ‖_F = {0:e})")]
    NotSkewSymmetric(f64),
    #[error("pitch {0} rad is within the gimbal-lock guard of ±π/2")]
    GimbalLock(f64),
    #[error("matrix cannot be projected onto SO(3) (det = {0:e})")]
    Degenerate(f64),
    #[error("matrix is not a rotation (orthonormality defect {defect:e}, det {det})")]
    NotRotation { defect: f64, det: f64 },
    #[error("quaternion norm² {0} is not 1")]
    NotUnit(f64),
}

/// `u^×`, the matrix with `u^× w = u × w`.
pub fn skew(u: &Vec3) -> Mat3 {
    Mat3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Inverse of [`skew`], reading the antisymmetric part of `m`.
pub fn unskew(m: &Mat3) -> Result<Vec3, GeometryError> {
    let asym = (m + m.transpose()).norm();
    if asym > SKEW_TOLERANCE {
        return Err(GeometryError::NotSkewSymmetric(asym));
    }
    Ok(Vec3::new(0.5 * (m[(2, 1)] - m[(1, 2)]), 0.5 * (m[(0, 2)] - m[(2, 0)]), 0.5 * (m[(1, 0)] - m[(0, 1)])))
}

/// A 3×3 matrix in SO(3), body to inertial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Wraps `m` after checking the SO(3) invariant.
    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        let defect = orthonormality_defect(&m);
        let det = m.determinant();
        if defect > SO3_TOLERANCE || (det - 1.0).abs() > SO3_TOLERANCE {
            return Err(GeometryError::NotRotation { defect, det });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without checking. Callers own the invariant.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn defect(&self) -> f64 {
        orthonormality_defect(&self.0)
    }

    /// Re-projects onto SO(3) if the orthonormality defect has drifted past
    /// [`SO3_TOLERANCE`].
    pub fn renormalized(self) -> Self {
        if self.defect() > SO3_TOLERANCE {
            project_to_so3(&self.0).unwrap_or(self)
        } else {
            self
        }
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// `‖MᵀM − I‖_F`.
pub fn orthonormality_defect(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Rodrigues' formula for `exp(θ^×)`.
pub fn exp_so3(theta: &Vec3) -> RotationMatrix {
    let angle2 = theta.norm_squared();
    let angle = angle2.sqrt();
    let (a, b) = if angle < SMALL_ANGLE_THRESHOLD {
        (1.0 - angle2 / 6.0, 0.5 - angle2 / 24.0)
    } else {
        (angle.sin() / angle, (1.0 - angle.cos()) / angle2)
    };
    let k = skew(theta);
    RotationMatrix(Mat3::identity() + k * a + k * k * b)
}

/// Unit quaternion `(q0, q)` with scalar part `q0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub q0: f64,
    pub q: Vec3,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self { q0: 1.0, q: Vec3::zeros() }
    }

    pub fn new(q0: f64, q: Vec3) -> Result<Self, GeometryError> {
        let n2 = q0 * q0 + q.norm_squared();
        if (n2 - 1.0).abs() > SO3_TOLERANCE {
            return Err(GeometryError::NotUnit(n2));
        }
        Ok(Self { q0, q })
    }

    /// Normalizes `(q0, q)`; panics on the zero quaternion.
    pub fn normalized(q0: f64, q: Vec3) -> Self {
        let n = (q0 * q0 + q.norm_squared()).sqrt();
        assert!(n > 0.0, "zero quaternion");
        Self { q0: q0 / n, q: q / n }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let half = 0.5 * angle;
        Self::normalized(half.cos(), axis.normalize() * half.sin())
    }

    pub fn neg(&self) -> Self {
        Self { q0: -self.q0, q: -self.q }
    }
}

/// `R = I + 2 q^× (q0 I + q^×)`.
pub fn quat_to_rot(q: &UnitQuaternion) -> RotationMatrix {
    let k = skew(&q.q);
    RotationMatrix(Mat3::identity() + 2.0 * k * (Mat3::identity() * q.q0 + k))
}

/// Shepperd's method; the returned quaternion has `q0 ≥ 0`.
pub fn rot_to_quat(r: &RotationMatrix) -> UnitQuaternion {
    let m = r.matrix();
    let trace = m.trace();
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (q0, q) = if trace >= diag[0] && trace >= diag[1] && trace >= diag[2] {
        let s = 2.0 * (1.0 + trace).sqrt();
        (0.25 * s, Vec3::new((m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s))
    } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
        let s = 2.0 * (1.0 + diag[0] - diag[1] - diag[2]).sqrt();
        ((m[(2, 1)] - m[(1, 2)]) / s, Vec3::new(0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s))
    } else if diag[1] >= diag[2] {
        let s = 2.0 * (1.0 + diag[1] - diag[0] - diag[2]).sqrt();
        ((m[(0, 2)] - m[(2, 0)]) / s, Vec3::new((m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s))
    } else {
        let s = 2.0 * (1.0 + diag[2] - diag[0] - diag[1]).sqrt();
        ((m[(1, 0)] - m[(0, 1)]) / s, Vec3::new((m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s))
    };
    let q = UnitQuaternion::normalized(q0, q);
    if q.q0 < 0.0 {
        q.neg()
    } else {
        q
    }
}

/// First-order attitude error `λ = 2 sign(q0) q`, with `sign(0) = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallAngleError(pub Vec3);

impl SmallAngleError {
    pub fn vector(&self) -> &Vec3 {
        &self.0
    }
}

pub fn small_angle(q: &UnitQuaternion) -> SmallAngleError {
    let sign = if q.q0 < 0.0 { -1.0 } else { 1.0 };
    SmallAngleError(2.0 * sign * q.q)
}

/// `R = R_z(yaw) R_y(pitch) R_x(roll)`.
pub fn euler_zyx_to_rot(roll: f64, pitch: f64, yaw: f64) -> RotationMatrix {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rz = Mat3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Mat3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    RotationMatrix(rz * ry * rx)
}

/// Inverse of [`euler_zyx_to_rot`], returning `(roll, pitch, yaw)`.
pub fn rot_to_euler_zyx(r: &RotationMatrix) -> Result<(f64, f64, f64), GeometryError> {
    let m = r.matrix();
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    if pitch.abs() >= FRAC_PI_2 - GIMBAL_GUARD {
        return Err(GeometryError::GimbalLock(pitch));
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    Ok((roll, pitch, yaw))
}

/// Nearest rotation in Frobenius norm (orthogonal polar factor).
pub fn project_to_so3(m: &Mat3) -> Result<RotationMatrix, GeometryError> {
    let det = m.determinant();
    if det <= f64::EPSILON * m.norm().powi(3) {
        return Err(GeometryError::Degenerate(det));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::Degenerate(det)),
    };
    if svd.singular_values.min() <= 0.0 {
        return Err(GeometryError::Degenerate(det));
    }
    Ok(RotationMatrix(u * v_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    fn quarter_turn_z() -> Mat3 {
        Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    }

    /// Truncated power series of the matrix exponential.
    fn exp_series(k: &Mat3, terms: usize) -> Mat3 {
        let mut sum = Mat3::identity();
        let mut term = Mat3::identity();
        for n in 1..terms {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vec3::x()), Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(skew(&Vec3::new(0.0, 0.0, -9.81)), Mat3::new(0.0, 9.81, 0.0, -9.81, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn unskew_examples() {
        let m = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(unskew(&m).unwrap(), Vec3::x());
        assert_eq!(unskew(&Mat3::zeros()).unwrap(), Vec3::zeros());
        assert!(matches!(unskew(&Mat3::identity()), Err(GeometryError::NotSkewSymmetric(_))));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Mat3::identity());
        let r = exp_so3(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(*r.matrix(), quarter_turn_z(), epsilon = 1e-15);
    }

    #[test]
    fn exp_branch_switch_is_continuous() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let below = exp_so3(&(axis * (SMALL_ANGLE_THRESHOLD * (1.0 - 1e-9))));
        let above = exp_so3(&(axis * (SMALL_ANGLE_THRESHOLD * (1.0 + 1e-9))));
        assert!((below.matrix() - above.matrix()).norm() < 1e-12);
        let k = skew(&(axis * SMALL_ANGLE_THRESHOLD));
        assert!((below.matrix() - exp_series(&k, 10)).norm() < 1e-12);
    }

    #[test]
    fn quaternion_examples() {
        assert_eq!(*quat_to_rot(&UnitQuaternion::identity()).matrix(), Mat3::identity());
        let q = UnitQuaternion::new(FRAC_PI_4.cos(), Vec3::new(0.0, 0.0, FRAC_PI_4.sin())).unwrap();
        assert_relative_eq!(*quat_to_rot(&q).matrix(), quarter_turn_z(), epsilon = 1e-15);

        let back = rot_to_quat(&RotationMatrix::identity());
        assert_eq!(back, UnitQuaternion::identity());
        let back = rot_to_quat(&RotationMatrix::new(quarter_turn_z()).unwrap());
        assert_relative_eq!(back.q0, q.q0, epsilon = 1e-15);
        assert_relative_eq!(back.q, q.q, epsilon = 1e-15);
    }

    #[test]
    fn rot_to_quat_handles_half_turns() {
        for axis in [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::new(1.0, 1.0, 0.0).normalize()] {
            let r = exp_so3(&(axis * std::f64::consts::PI));
            let q = rot_to_quat(&r);
            assert!(q.q0 >= 0.0);
            assert!((quat_to_rot(&q).matrix() - r.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn small_angle_examples() {
        assert_eq!(small_angle(&UnitQuaternion::identity()).0, Vec3::zeros());
        let q = UnitQuaternion::from_axis_angle(&Vec3::z(), 0.01);
        let lam = small_angle(&q).0;
        assert_relative_eq!(lam, Vec3::new(0.0, 0.0, 0.01), epsilon = 1e-7);
        let neg = q.neg();
        assert_eq!(small_angle(&neg).0, 2.0 * q.q);
        let zero_scalar = UnitQuaternion::new(0.0, Vec3::x()).unwrap();
        assert_eq!(small_angle(&zero_scalar).0, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn euler_examples() {
        assert_eq!(*euler_zyx_to_rot(0.0, 0.0, 0.0).matrix(), Mat3::identity());
        let r = euler_zyx_to_rot(0.0, 0.0, FRAC_PI_6);
        assert_relative_eq!(*r.matrix(), *exp_so3(&Vec3::new(0.0, 0.0, FRAC_PI_6)).matrix(), epsilon = 1e-15);
        let locked = euler_zyx_to_rot(0.1, FRAC_PI_2, 0.2);
        assert!(matches!(rot_to_euler_zyx(&locked), Err(GeometryError::GimbalLock(_))));
    }

    #[test]
    fn projection_examples() {
        let r = euler_zyx_to_rot(0.3, -0.2, 1.1);
        assert_relative_eq!(*project_to_so3(r.matrix()).unwrap().matrix(), *r.matrix(), epsilon = 1e-14);

        let mut perturbed = *r.matrix();
        perturbed[(0, 1)] += 1e-6;
        perturbed[(2, 0)] -= 1e-6;
        let p = project_to_so3(&perturbed).unwrap();
        assert!(p.defect() < 1e-14);
        assert!((p.matrix() - r.matrix()).norm() < 2e-6);

        let scaled = Mat3::identity() * 1.01;
        assert_relative_eq!(*project_to_so3(&scaled).unwrap().matrix(), Mat3::identity(), epsilon = 1e-15);

        assert!(matches!(project_to_so3(&Mat3::zeros()), Err(GeometryError::Degenerate(_))));
        let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(project_to_so3(&reflection).is_err());
    }

    #[test]
    fn rotation_new_rejects_non_rotations() {
        assert!(RotationMatrix::new(Mat3::identity() * 2.0).is_err());
        assert!(RotationMatrix::new(quarter_turn_z()).is_ok());
    }

    proptest! {
        #[test]
        fn skew_is_cross_product(u in vec3(), v in vec3()) {
            let m = skew(&u);
            prop_assert_eq!(m.transpose(), -m);
            prop_assert!((m * v - u.cross(&v)).norm() <= 1e-14 * (1.0 + u.norm() * v.norm()));
            prop_assert!((unskew(&m).unwrap() - u).norm() <= 1e-12);
        }

        #[test]
        fn exp_matches_power_series(u in vec3()) {
            prop_assume!(u.norm() > 1e-3);
            let theta = u.normalize();
            let r = exp_so3(&theta);
            prop_assert!((r.matrix() - exp_series(&skew(&theta), 30)).norm() <= 1e-12);
            prop_assert!(r.defect() <= 1e-12);
            prop_assert!((exp_so3(&-theta).matrix() - r.matrix().transpose()).norm() <= 1e-14);
        }

        #[test]
        fn quaternion_double_cover_and_round_trip(w in -1.0..1.0f64, u in vec3()) {
            let q = UnitQuaternion::normalized(w, u);
            let r = quat_to_rot(&q);
            prop_assert!((r.matrix() - quat_to_rot(&q.neg()).matrix()).norm() <= 1e-14);
            let back = rot_to_quat(&r);
            prop_assert!(back.q0 >= 0.0);
            prop_assert!((quat_to_rot(&back).matrix() - r.matrix()).norm() <= 1e-9);
        }

        #[test]
        fn euler_round_trip(roll in -1.0..1.0f64, pitch in -1.0..1.0f64, yaw in -1.0..1.0f64) {
            let (r2, p2, y2) = rot_to_euler_zyx(&euler_zyx_to_rot(roll, pitch, yaw)).unwrap();
            prop_assert!((r2 - roll).abs() <= 1e-12);
            prop_assert!((p2 - pitch).abs() <= 1e-12);
            prop_assert!((y2 - yaw).abs() <= 1e-12);
        }
    }
}
