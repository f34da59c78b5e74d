//! Residuals and analytic Jacobians of the camera, asymmetric-object and
//! symmetric-object factors.
//!
//! Every residual is 6-dimensional. Jacobians are taken with respect to right
//! perturbations `X <- X * Exp([rho; phi])` of the two connected states.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::liegroups::{hat, right_jacobian_inv, LieError, Pose};

/// A linearized factor: residual, Jacobians with respect to the first and
/// second connected state, and the diagonal of its information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBlock {
    pub value: Vector6<f64>,
    pub jacobians: [Matrix6<f64>; 2],
    pub weight: Vector6<f64>,
}

impl ResidualBlock {
    /// Squared Mahalanobis norm `r^T W r`.
    pub fn cost(&self) -> f64 {
        self.value.component_mul(&self.value).dot(&self.weight)
    }
}

/// Information diagonal from a covariance diagonal.
pub fn information(covariance: &[f64; 6]) -> Vector6<f64> {
    Vector6::from_fn(|i, _| 1.0 / covariance[i])
}

/// Isotropic object-factor information: `Sigma = sigma_norm^2 I`.
pub fn object_information(sigma_norm: f64) -> Vector6<f64> {
    Vector6::repeat(1.0 / (sigma_norm * sigma_norm))
}

/// Residual of the measured relative pose `meas ≈ a^-1 b`:
/// `dt = R_a^T (t_b - t_a) - t_meas`, `dphi = Log(R_meas^T R_a^T R_b)`.
pub fn relative_pose_residual(a: &Pose, b: &Pose, meas: &Pose) -> Result<(Vector6<f64>, [Matrix6<f64>; 2]), LieError> {
    let rel = a.between(b);
    let err_rot = meas.rotation.inverse().compose(&rel.rotation);
    let dphi = err_rot.log_checked()?;
    let dt = rel.translation - meas.translation;

    let r_rel = rel.rotation.matrix();
    let jr_inv = right_jacobian_inv(&dphi);

    let mut ja = Matrix6::zeros();
    ja.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-Matrix3::identity()));
    ja.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat(&rel.translation));
    ja.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-jr_inv * r_rel.transpose()));

    let mut jb = Matrix6::zeros();
    jb.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_rel);
    jb.fixed_view_mut::<3, 3>(3, 3).copy_from(&jr_inv);

    let value = Vector6::new(dt.x, dt.y, dt.z, dphi.x, dphi.y, dphi.z);
    Ok((value, [ja, jb]))
}

/// Camera pose factor between the base and the camera at time `t`.
pub fn camera_residual(base: &Pose, camera: &Pose, meas: &Pose, covariance: &[f64; 6]) -> Result<ResidualBlock, LieError> {
    let (value, jacobians) = relative_pose_residual(base, camera, meas)?;
    Ok(ResidualBlock {
        value,
        jacobians,
        weight: information(covariance),
    })
}

/// Object pose factor for an object without symmetry ambiguity.
pub fn asymmetric_object_residual(camera: &Pose, object: &Pose, meas: &Pose, sigma_norm: f64) -> Result<ResidualBlock, LieError> {
    let (value, jacobians) = relative_pose_residual(camera, object, meas)?;
    Ok(ResidualBlock {
        value,
        jacobians,
        weight: object_information(sigma_norm),
    })
}

/// Object pose factor for a symmetric object.
///
/// Two constraint points are compared in the camera frame: the object center
/// `c = t` and a point on the dominant axis `a = t + R * axis`, where
/// `axis` is the dominant axis scaled by the chosen offset. Rotation about the
/// dominant axis leaves the residual unchanged.
pub fn symmetric_object_residual(
    camera: &Pose,
    object: &Pose,
    meas: &Pose,
    sigma_norm: f64,
    axis: &Vector3<f64>,
) -> ResidualBlock {
    let rel = camera.between(object);
    let r_rel = rel.rotation.matrix();
    let axis_pred = r_rel * axis;
    let center = rel.translation;
    let tip = center + axis_pred;
    let center_meas = meas.translation;
    let tip_meas = meas.translation + meas.rotation.rotate(axis);
    let dc = center - center_meas;
    let da = tip - tip_meas;

    let mut jc = Matrix6::zeros();
    jc.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-Matrix3::identity()));
    jc.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat(&center));
    jc.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-Matrix3::identity()));
    jc.fixed_view_mut::<3, 3>(3, 3).copy_from(&hat(&tip));

    let mut jo = Matrix6::zeros();
    jo.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_rel);
    jo.fixed_view_mut::<3, 3>(3, 0).copy_from(&r_rel);
    jo.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-r_rel * hat(axis)));

    ResidualBlock {
        value: Vector6::new(dc.x, dc.y, dc.z, da.x, da.y, da.z),
        jacobians: [jc, jo],
        weight: object_information(sigma_norm),
    }
}

/// Unary prior on a pose: `[t - t_prior; Log(R_prior^T R)]`.
pub fn prior_residual(state: &Pose, prior: &Pose, covariance: &[f64; 6]) -> Result<ResidualBlock, LieError> {
    let err_rot = prior.rotation.inverse().compose(&state.rotation);
    let dphi = err_rot.log_checked()?;
    let dt = state.translation - prior.translation;
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&state.rotation.matrix());
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&right_jacobian_inv(&dphi));
    Ok(ResidualBlock {
        value: Vector6::new(dt.x, dt.y, dt.z, dphi.x, dphi.y, dphi.z),
        jacobians: [j, Matrix6::zeros()],
        weight: information(covariance),
    })
}
