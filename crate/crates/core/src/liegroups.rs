//! Rotation and rigid-transform arithmetic on SO(3) and SE(3).
//!
//! Rotations are stored as unit quaternions and renormalized on every
//! composition. Tangent vectors are ordered translation first, rotation
//! second (`[rho, phi]`), which is also the ordering of every residual in
//! the factor graph. Manifold updates use right perturbation:
//! `T <- T * Exp(delta)`.

use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector6};
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

/// Below this rotation angle the closed-form exp/log switch to Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// `log` refuses rotations whose angle is within this margin of pi.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

// Series cutoff for the second-order coefficients of V, V^-1 and Jr^-1.
// Their closed forms cancel catastrophically well above SMALL_ANGLE.
const SERIES_ANGLE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LieError {
    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    NearPiRotation { angle: f64 },
}

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Coefficient of `hat(phi)^2` shared by `V^-1` and `Jr^-1`:
/// `1/θ² - (1 + cos θ) / (2 θ sin θ)`.
fn inverse_jacobian_coeff(theta: f64) -> f64 {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    }
}

/// Inverse of the SO(3) right Jacobian.
///
/// Maps a small right perturbation of a rotation onto the change of its
/// logarithm: `Log(Exp(phi) * Exp(d)) ≈ phi + Jr^-1(phi) d`.
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let skew = hat(phi);
    Matrix3::identity() + skew * 0.5 + skew * skew * inverse_jacobian_coeff(theta)
}

/// A 3D rotation backed by a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion coefficients, normalizing them.
    /// Coefficients already unit to within a few ulp are kept bit for bit, so
    /// serialized rotations load back unchanged. Returns `None` for a zero or
    /// non-finite quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Some(Self(UnitQuaternion::new_unchecked(q)));
        }
        Some(Self(UnitQuaternion::new_unchecked(q / n)))
    }

    /// Nearest rotation to a (close to) orthonormal matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self(UnitQuaternion::from_rotation_matrix(&rot)).renormalized()
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Exponential map from an axis-angle vector.
    pub fn exp(phi: &Vector3<f64>) -> Self {
        let theta = phi.norm();
        let (w, s) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        let q = Quaternion::new(w, phi.x * s, phi.y * s, phi.z * s);
        Self(UnitQuaternion::new_unchecked(q)).renormalized()
    }

    /// Logarithm map, total on SO(3). The returned angle lies in `[0, pi]`.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.0.quaternion();
        // q and -q are the same rotation; pick the hemisphere with w >= 0.
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let vn = v.norm();
        if vn < 0.5 * SMALL_ANGLE {
            // atan2(|v|, w) * 2 / |v| expanded around |v| = 0.
            let scale = 2.0 / w * (1.0 - vn * vn / (3.0 * w * w));
            return v * scale;
        }
        let theta = 2.0 * vn.atan2(w);
        v * (theta / vn)
    }

    /// Logarithm that refuses rotations near pi, where the axis flips sign
    /// under arbitrarily small perturbations.
    pub fn log_checked(&self) -> Result<Vector3<f64>, LieError> {
        let angle = self.angle();
        if angle >= core::f64::consts::PI - NEAR_PI_MARGIN {
            return Err(LieError::NearPiRotation { angle });
        }
        Ok(self.log())
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0).renormalized()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transform_vector(v)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    /// Quaternion coefficients in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    fn renormalized(self) -> Self {
        let q = self.0.into_inner();
        Self(UnitQuaternion::new_unchecked(q / q.norm()))
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// Tangent vector of SE(3): translational part `rho` (meters) and
/// rotational part `phi` (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Packs as `[rho; phi]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            rho: Vector3::new(v[0], v[1], v[2]),
            phi: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

/// Left Jacobian of SO(3), the `V` matrix of the SE(3) exponential.
fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let skew = hat(phi);
    let (a, b) = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let t2 = theta * theta;
        let half_sin = (0.5 * theta).sin();
        (
            2.0 * half_sin * half_sin / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    };
    Matrix3::identity() + skew * a + skew * skew * b
}

fn left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let skew = hat(phi);
    Matrix3::identity() - skew * 0.5 + skew * skew * inverse_jacobian_coeff(theta)
}

/// Rigid transform. `act(p) = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vector3::zeros())
    }

    pub fn exp(xi: &Twist) -> Self {
        Self {
            rotation: Rotation::exp(&xi.phi),
            translation: left_jacobian(&xi.phi) * xi.rho,
        }
    }

    pub fn log(&self) -> Result<Twist, LieError> {
        let phi = self.rotation.log_checked()?;
        Ok(Twist {
            rho: left_jacobian_inv(&phi) * self.translation,
            phi,
        })
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -rinv.rotate(&self.translation),
        }
    }

    /// `self^-1 * other`, the pose of `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// Right-perturbation retraction `self * Exp(delta)`.
    pub fn retract(&self, delta: &Vector6<f64>) -> Pose {
        self.compose(&Pose::exp(&Twist::from_vector(delta)))
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `[qw, qx, qy, qz, tx, ty, tz]`.
    pub fn to_array7(&self) -> [f64; 7] {
        let [w, x, y, z] = self.rotation.wxyz();
        let t = self.translation;
        [w, x, y, z, t.x, t.y, t.z]
    }

    /// Inverse of [`Pose::to_array7`]; the quaternion is normalized.
    pub fn from_array7(a: &[f64; 7]) -> Option<Pose> {
        let rotation = Rotation::from_wxyz(a[0], a[1], a[2], a[3])?;
        Some(Pose::new(rotation, Vector3::new(a[4], a[5], a[6])))
    }

    /// Builds a pose from a row-major 3x4 `[R | t]` matrix.
    pub fn from_matrix3x4(m: &[f64; 12]) -> Pose {
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Pose::new(Rotation::from_matrix(&r), Vector3::new(m[3], m[7], m[11]))
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn close3(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).amax() < tol
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let p = Pose::exp(&Twist::zero());
        assert_eq!(p.rotation.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.translation, Vector3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = Pose::exp(&Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2)));
        let x = p.act(&Vector3::x());
        assert!(close3(&x, &Vector3::y(), 1e-15));
        assert_eq!(p.translation, Vector3::zeros());
        let xi = p.log().unwrap();
        assert!(close3(&xi.phi, &Vector3::new(0.0, 0.0, FRAC_PI_2), 1e-15));
        assert!(close3(&xi.rho, &Vector3::zeros(), 1e-15));
    }

    #[test]
    fn log_of_identity_is_zero() {
        let xi = Pose::identity().log().unwrap();
        assert_eq!(xi.to_vector(), Vector6::zeros());
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = Pose::from_rotation(Rotation::from_axis_angle(&Vector3::x(), core::f64::consts::PI));
        assert!(matches!(p.log(), Err(LieError::NearPiRotation { .. })));
        // the unchecked rotation log stays total
        let phi = p.rotation.log();
        assert!((phi.norm() - core::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn tiny_angles_round_trip() {
        for &scale in &[1e-12, 1e-9, 3e-8, 1e-6, 1e-4, 2e-3] {
            let phi = Vector3::new(0.3, -0.5, 0.8) * scale;
            let rho = Vector3::new(0.1, 0.2, -0.3);
            let xi = Twist::new(rho, phi);
            let back = Pose::exp(&xi).log().unwrap();
            assert!((back.to_vector() - xi.to_vector()).amax() < 1e-14, "scale {scale}");
        }
    }

    #[test]
    fn compose_with_identity() {
        let t = Pose::exp(&Twist::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.1, 0.2, 0.3)));
        let c = t.compose(&Pose::identity());
        assert!((c.matrix() - t.matrix()).amax() < 1e-15);
        assert_eq!(Pose::identity().act(&Vector3::new(4.0, 5.0, 6.0)), Vector3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn matrix3x4_round_trip() {
        let t = Pose::exp(&Twist::new(Vector3::new(1.0, -2.0, 0.5), Vector3::new(-0.7, 0.2, 1.3)));
        let m = t.matrix();
        let mut rows = [0.0; 12];
        for r in 0..3 {
            for c in 0..4 {
                rows[r * 4 + c] = m[(r, c)];
            }
        }
        let back = Pose::from_matrix3x4(&rows);
        assert!((back.matrix() - m).amax() < 1e-14);
    }

    #[test]
    fn jr_inverse_series_matches_closed_form_at_cutoff() {
        let below = inverse_jacobian_coeff(SERIES_ANGLE * (1.0 - 1e-9));
        let above = inverse_jacobian_coeff(SERIES_ANGLE * (1.0 + 1e-9));
        assert!((below - above).abs() < 1e-9);
    }
}
