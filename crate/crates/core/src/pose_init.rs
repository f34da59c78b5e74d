//! Single-view pose initialization: pinhole projection, PnP from merged
//! keypoints (normalized DLT followed by Levenberg-Marquardt on SE(3)) and
//! uncertainty-gated point-to-point ICP against depth points.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Matrix3x4, Matrix4, Matrix6, Vector2, Vector3, Vector4, Vector6};
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

use crate::ambiguity::MergedKeypoints;
use crate::liegroups::{hat, Pose, Rotation};
use crate::object_model::ObjectModel;
use crate::spatial::NearestIndex;

/// Points closer than this to the camera plane cannot be projected.
pub const MIN_DEPTH: f64 = 1e-6;
/// Default ICP gate.
pub const DEFAULT_SIGMA_ICP: f64 = 0.4;
pub const MIN_ICP_POINTS: usize = 50;

const PNP_MAX_ITERATIONS: usize = 100;
const LM_INITIAL_DAMPING: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseInitError {
    #[error("point at depth {depth} m is behind the camera")]
    BehindCamera { depth: f64 },
    #[error("correspondences are degenerate (rank-deficient DLT system)")]
    DegenerateConfiguration,
    #[error("PnP refinement did not converge within {PNP_MAX_ITERATIONS} iterations")]
    NoConvergence { best: PoseProposal },
    #[error("ICP needs at least {need} observed points, got {got}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("{points} image points but {correspondences} model points")]
    LengthMismatch { points: usize, correspondences: usize },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, PoseInitError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(PoseInitError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(cx > 0.0 && cx < f64::from(width) && cy > 0.0 && cy < f64::from(height)) {
            return Err(PoseInitError::InvalidIntrinsics("principal point must lie inside the image"));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= 0.0 && uv.y >= 0.0 && uv.x < f64::from(self.width) && uv.y < f64::from(self.height)
    }

    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }

    fn project_camera_point(&self, pc: &Vector3<f64>) -> Result<Vector2<f64>, PoseInitError> {
        if !(pc.z > MIN_DEPTH) {
            return Err(PoseInitError::BehindCamera { depth: pc.z });
        }
        Ok(Vector2::new(self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }
}

/// Pinhole projection of an object-frame point through the camera-from-object pose.
pub fn project(k: &CameraIntrinsics, camera_from_object: &Pose, p_obj: &Vector3<f64>) -> Result<Vector2<f64>, PoseInitError> {
    k.project_camera_point(&camera_from_object.act(p_obj))
}

/// Camera-from-object pose estimate for one object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseProposal {
    pub pose: Pose,
    pub sigma_norm: f64,
    pub reprojection_rmse: f64,
    pub refined_by_icp: bool,
}

pub fn solve_pnp(k: &CameraIntrinsics, merged: &MergedKeypoints) -> Result<PoseProposal, PoseInitError> {
    solve_pnp_points(k, &merged.points, &merged.correspondences, merged.sigma_norm)
}

/// PnP over explicit correspondences. `sigma_norm` is carried into the proposal.
pub fn solve_pnp_points(
    k: &CameraIntrinsics,
    image: &[Vector2<f64>],
    model: &[Vector3<f64>],
    sigma_norm: f64,
) -> Result<PoseProposal, PoseInitError> {
    if image.len() != model.len() {
        return Err(PoseInitError::LengthMismatch {
            points: image.len(),
            correspondences: model.len(),
        });
    }
    let init = dlt_pose(k, image, model)?;
    refine_reprojection(k, image, model, init, sigma_norm)
}

/// Hartley-normalized DLT on calibrated rays, projected onto SE(3).
fn dlt_pose(k: &CameraIntrinsics, image: &[Vector2<f64>], model: &[Vector3<f64>]) -> Result<Pose, PoseInitError> {
    let n = image.len();
    if n < 6 {
        return Err(PoseInitError::DegenerateConfiguration);
    }
    let rays: Vec<Vector2<f64>> = image
        .iter()
        .map(|u| Vector2::new((u.x - k.cx) / k.fx, (u.y - k.cy) / k.fy))
        .collect();

    let c2 = rays.iter().sum::<Vector2<f64>>() / n as f64;
    let d2 = rays.iter().map(|r| (r - c2).norm()).sum::<f64>() / n as f64;
    let c3 = model.iter().sum::<Vector3<f64>>() / n as f64;
    let d3 = model.iter().map(|p| (p - c3).norm()).sum::<f64>() / n as f64;
    if !(d2 > 0.0 && d3 > 0.0) {
        return Err(PoseInitError::DegenerateConfiguration);
    }
    let s2 = core::f64::consts::SQRT_2 / d2;
    let s3 = 3f64.sqrt() / d3;

    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for i in 0..n {
        let x = (rays[i] - c2) * s2;
        let p = (model[i] - c3) * s3;
        let ph = [p.x, p.y, p.z, 1.0];
        for j in 0..4 {
            a[(2 * i, j)] = ph[j];
            a[(2 * i, 8 + j)] = -x.x * ph[j];
            a[(2 * i + 1, 4 + j)] = ph[j];
            a[(2 * i + 1, 8 + j)] = -x.y * ph[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(PoseInitError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    if order.len() < 12 {
        return Err(PoseInitError::DegenerateConfiguration);
    }
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[10]];
    if !(second_smallest > 1e-8 * largest) {
        return Err(PoseInitError::DegenerateConfiguration);
    }
    let null = v_t.row(order[11]);
    let pn = Matrix3x4::from_fn(|r, c| null[4 * r + c]);

    // undo the normalizations: P = T2^-1 Pn T3
    let t2_inv = Matrix3::new(1.0 / s2, 0.0, c2.x, 0.0, 1.0 / s2, c2.y, 0.0, 0.0, 1.0);
    let mut t3 = Matrix4::identity() * s3;
    t3[(3, 3)] = 1.0;
    t3.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-c3 * s3));
    let mut p = t2_inv * pn * t3;

    let mut m = p.fixed_view::<3, 3>(0, 0).into_owned();
    if m.determinant() < 0.0 {
        p = -p;
        m = -m;
    }
    let msvd = m.svd(true, true);
    let (u, v_t) = match (msvd.u, msvd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(PoseInitError::DegenerateConfiguration),
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let mut col = u.column_mut(2);
        col *= -1.0;
        r = u * v_t;
    }
    let scale = msvd.singular_values.sum() / 3.0;
    if !(scale > 0.0) {
        return Err(PoseInitError::DegenerateConfiguration);
    }
    let t = p.column(3) / scale;
    Ok(Pose::new(Rotation::from_matrix(&r), t.into_owned()))
}

fn reprojection(
    k: &CameraIntrinsics,
    image: &[Vector2<f64>],
    model: &[Vector3<f64>],
    pose: &Pose,
) -> Result<f64, PoseInitError> {
    let mut cost = 0.0;
    for (u, p) in image.iter().zip(model) {
        cost += (project(k, pose, p)? - u).norm_squared();
    }
    Ok(cost)
}

/// Levenberg-Marquardt on the reprojection error with right-perturbation
/// updates `T <- T * Exp(delta)`.
fn refine_reprojection(
    k: &CameraIntrinsics,
    image: &[Vector2<f64>],
    model: &[Vector3<f64>],
    init: Pose,
    sigma_norm: f64,
) -> Result<PoseProposal, PoseInitError> {
    let n = image.len() as f64;
    let mut pose = init;
    let mut cost = reprojection(k, image, model, &pose)?;
    let mut lambda = LM_INITIAL_DAMPING;
    let proposal = |pose: Pose, cost: f64| PoseProposal {
        pose,
        sigma_norm,
        reprojection_rmse: (cost / n).sqrt(),
        refined_by_icp: false,
    };

    for _ in 0..PNP_MAX_ITERATIONS {
        if cost == 0.0 {
            return Ok(proposal(pose, cost));
        }
        let rot = pose.rotation.matrix();
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for (u, p) in image.iter().zip(model) {
            let pc = pose.act(p);
            let r = k.project_camera_point(&pc)? - u;
            let iz = 1.0 / pc.z;
            let dproj = Matrix2x3::new(
                k.fx * iz,
                0.0,
                -k.fx * pc.x * iz * iz,
                0.0,
                k.fy * iz,
                -k.fy * pc.y * iz * iz,
            );
            let mut dp = nalgebra::Matrix3x6::<f64>::zeros();
            dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
            dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rot * hat(p)));
            let j = dproj * dp;
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        if g.amax() < 1e-14 * (1.0 + cost) {
            return Ok(proposal(pose, cost));
        }
        loop {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-g)));
            let candidate = step.map(|d| (d, pose.retract(&d)));
            let trial = candidate.and_then(|(d, p)| reprojection(k, image, model, &p).ok().map(|c| (d, p, c)));
            match trial {
                Some((d, p, c)) if c < cost => {
                    let rel = (cost - c) / cost;
                    pose = p;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    if rel < 1e-15 || d.amax() < 1e-15 {
                        return Ok(proposal(pose, cost));
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        // no descent direction left at working precision
                        return Ok(proposal(pose, cost));
                    }
                }
            }
        }
    }
    Err(PoseInitError::NoConvergence {
        best: proposal(pose, cost),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpSettings {
    pub max_iterations: usize,
    /// Stop once the RMS residual changes by less than this (meters).
    pub tolerance: f64,
}

impl Default for IcpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub pose: Pose,
    /// RMS nearest-neighbour residual at the start of every iteration.
    pub residuals: Vec<f64>,
}

/// Point-to-point ICP aligning `model` (object frame) to `observed` (camera
/// frame), starting from the camera-from-object pose `initial`.
pub fn icp_point_to_point(
    model: &NearestIndex,
    observed: &[Vector3<f64>],
    initial: &Pose,
    settings: &IcpSettings,
) -> IcpOutcome {
    let mut pose = *initial;
    let mut residuals = Vec::new();
    let mut matched = Vec::with_capacity(observed.len());
    for _ in 0..settings.max_iterations.max(1) {
        let inv = pose.inverse();
        matched.clear();
        let mut sq = 0.0;
        for q in observed {
            let (i, d) = model.nearest(&inv.act(q));
            sq += d;
            matched.push(model.points()[i]);
        }
        let rms = (sq / observed.len() as f64).sqrt();
        let done = residuals.last().is_some_and(|prev: &f64| (prev - rms).abs() < settings.tolerance);
        residuals.push(rms);
        if done || rms == 0.0 {
            break;
        }
        match kabsch(&matched, observed) {
            Some(p) => pose = p,
            None => break,
        }
    }
    IcpOutcome { pose, residuals }
}

/// Rigid transform minimizing `sum |T src_i - dst_i|^2`.
pub fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<Pose> {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (s - cs) * (d - cd).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    let rotation = Rotation::from_matrix(&r);
    Some(Pose::new(rotation, cd - rotation.rotate(&cs)))
}

/// Gated ICP refinement. When `proposal.sigma_norm >= sigma_icp` the proposal
/// is returned untouched.
pub fn refine_icp(
    proposal: &PoseProposal,
    observed: &[Vector3<f64>],
    model: &ObjectModel,
    sigma_icp: f64,
) -> Result<PoseProposal, PoseInitError> {
    if !(proposal.sigma_norm < sigma_icp) {
        return Ok(proposal.clone());
    }
    if observed.len() < MIN_ICP_POINTS {
        return Err(PoseInitError::InsufficientPoints {
            got: observed.len(),
            need: MIN_ICP_POINTS,
        });
    }
    let index = NearestIndex::new(&model.surface_points).ok_or(PoseInitError::InsufficientPoints {
        got: 0,
        need: 1,
    })?;
    let outcome = icp_point_to_point(&index, observed, &proposal.pose, &IcpSettings::default());
    Ok(PoseProposal {
        pose: outcome.pose,
        refined_by_icp: true,
        ..proposal.clone()
    })
}

/// 4x4 homogeneous form of a camera-from-object pose applied to a point,
/// exposed for cross-checks.
pub fn homogeneous_project(k: &CameraIntrinsics, pose: &Pose, p: &Vector3<f64>) -> Vector2<f64> {
    let kmat = Matrix3x4::new(k.fx, 0.0, k.cx, 0.0, 0.0, k.fy, k.cy, 0.0, 0.0, 0.0, 1.0, 0.0);
    let h = kmat * (pose.matrix() * Vector4::new(p.x, p.y, p.z, 1.0));
    Vector2::new(h.x / h.z, h.y / h.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroups::Twist;
    use crate::object_model::{make_primitive_layout, Axis, ObjectSpec, Shape, SymmetryKind};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn optical_axis_projection() {
        let uv = project(&k(), &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(uv, Vector2::new(320.0, 240.0));
        let uv = project(&k(), &Pose::identity(), &Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((uv - Vector2::new(370.0, 240.0)).amax() < 1e-12);
        assert!(matches!(
            project(&k(), &Pose::identity(), &Vector3::new(0.0, 0.0, -1.0)),
            Err(PoseInitError::BehindCamera { .. })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.0, 1.0, 2, 2).is_err());
    }

    #[test]
    fn coplanar_four_points_are_degenerate() {
        let model = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(0.0, 0.1, 0.0),
            Vector3::new(0.1, 0.1, 0.0),
        ];
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let image: Vec<_> = model.iter().map(|p| project(&k(), &pose, p).unwrap()).collect();
        assert_eq!(solve_pnp_points(&k(), &image, &model, 0.1), Err(PoseInitError::DegenerateConfiguration));
    }

    #[test]
    fn coplanar_many_points_are_degenerate() {
        let model: Vec<_> = (0..12)
            .map(|i| Vector3::new((i % 4) as f64 * 0.05, (i / 4) as f64 * 0.05, 0.0))
            .collect();
        let pose = Pose::exp(&Twist::new(Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.2, 0.1, 0.0)));
        let image: Vec<_> = model.iter().map(|p| project(&k(), &pose, p).unwrap()).collect();
        assert_eq!(solve_pnp_points(&k(), &image, &model, 0.1), Err(PoseInitError::DegenerateConfiguration));
    }

    #[test]
    fn single_axis_layout_recovered() {
        let layout = make_primitive_layout(0.05).unwrap();
        let model = layout.axis_keypoints(Axis::Y);
        let pose = Pose::exp(&Twist::new(Vector3::new(0.05, -0.02, 0.8), Vector3::new(0.4, -0.3, 1.2)));
        let image: Vec<_> = model.iter().map(|p| project(&k(), &pose, p).unwrap()).collect();
        let est = solve_pnp_points(&k(), &image, &model, 0.2).unwrap();
        assert!((est.pose.translation - pose.translation).amax() < 1e-9);
        assert!(est.pose.rotation.inverse().compose(&pose.rotation).angle() < 1e-9);
        assert!(est.reprojection_rmse < 1e-9);
        assert_eq!(est.sigma_norm, 0.2);
    }

    fn box_model() -> ObjectModel {
        ObjectSpec::new(1, Shape::Box { size: Vector3::new(0.1, 0.07, 0.05) }, SymmetryKind::Asymmetric)
            .build()
            .unwrap()
    }

    fn proposal(pose: Pose, sigma_norm: f64) -> PoseProposal {
        PoseProposal { pose, sigma_norm, reprojection_rmse: 0.0, refined_by_icp: false }
    }

    #[test]
    fn icp_gate_closed_leaves_proposal() {
        let m = box_model();
        let p = proposal(Pose::from_translation(Vector3::new(0.0, 0.0, 0.7)), 0.5);
        let out = refine_icp(&p, &[], &m, 0.4).unwrap();
        assert_eq!(out, p);
        let p = proposal(p.pose, 0.4);
        assert_eq!(refine_icp(&p, &[], &m, 0.4).unwrap(), p);
    }

    #[test]
    fn icp_needs_points() {
        let m = box_model();
        let p = proposal(Pose::from_translation(Vector3::new(0.0, 0.0, 0.7)), 0.1);
        let few: Vec<_> = m.surface_points.iter().take(10).copied().collect();
        assert_eq!(
            refine_icp(&p, &few, &m, 0.4),
            Err(PoseInitError::InsufficientPoints { got: 10, need: MIN_ICP_POINTS })
        );
    }

    #[test]
    fn icp_exact_pose_is_fixed_point() {
        let m = box_model();
        let gt = Pose::exp(&Twist::new(Vector3::new(0.02, 0.01, 0.7), Vector3::new(0.3, -0.2, 0.5)));
        let observed: Vec<_> = m.surface_points.iter().step_by(3).map(|p| gt.act(p)).collect();
        let out = refine_icp(&proposal(gt, 0.1), &observed, &m, 0.4).unwrap();
        assert!(out.refined_by_icp);
        assert!((out.pose.matrix() - gt.matrix()).amax() < 1e-9);
    }

    #[test]
    fn icp_converges_from_perturbation() {
        let m = box_model();
        let gt = Pose::exp(&Twist::new(Vector3::new(0.02, 0.01, 0.7), Vector3::new(0.3, -0.2, 0.5)));
        let observed: Vec<_> = m.surface_points.iter().step_by(2).map(|p| gt.act(p)).collect();
        let axis = Vector3::new(1.0, 2.0, -1.0).normalize();
        let perturb = Pose::new(
            Rotation::from_axis_angle(&axis, 5f64.to_radians()),
            Vector3::new(0.01, 0.0, 0.0),
        );
        let init = gt.compose(&perturb);
        let index = NearestIndex::new(&m.surface_points).unwrap();
        let out = icp_point_to_point(&index, &observed, &init, &IcpSettings::default());
        let err = out.pose.inverse().compose(&gt);
        assert!(err.rotation.angle() < 0.1f64.to_radians(), "{}", err.rotation.angle());
        assert!(err.translation.norm() < 5e-4, "{}", err.translation.norm());
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn kabsch_recovers_transform() {
        let m = box_model();
        let t = Pose::exp(&Twist::new(Vector3::new(0.3, -0.1, 0.2), Vector3::new(-1.0, 0.5, 2.0)));
        let dst: Vec<_> = m.surface_points.iter().map(|p| t.act(p)).collect();
        let est = kabsch(&m.surface_points, &dst).unwrap();
        assert!((est.matrix() - t.matrix()).amax() < 1e-12);
    }
}
