//! Synthetic scenes standing in for the keypoint network: camera
//! trajectories, noisy forward kinematics, per-axis keypoint predictions with
//! occlusion- and symmetry-driven uncertainty, segmented depth points, and
//! the ground truth behind all of it.

use alloc::vec::Vec;

use nalgebra::{Vector2, Vector3};
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ambiguity::AxisPrediction;
use crate::liegroups::{Pose, Rotation, Twist};
use crate::object_model::{Axis, ModelError, ObjectModel, ObjectSpec, Shape, SymmetryKind, KEYPOINTS_PER_AXIS};
use crate::pose_init::{project, CameraIntrinsics};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("the scenario has no camera views")]
    NoViews,
    #[error("occlusion {value} at frame {frame}, object index {object} is outside [0, 1]")]
    InvalidOcclusion { frame: usize, object: usize, value: f64 },
    #[error("explicit occlusion schedule has {got} rows, expected {expected}")]
    ScheduleShape { got: usize, expected: usize },
    #[error("noise parameter {0} must be non-negative")]
    NegativeNoise(&'static str),
    #[error("duplicate object id {0}")]
    DuplicateObject(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Reported but not fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimWarning {
    ObjectNeverVisible(u32),
}

/// Linear occlusion-to-uncertainty model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyModel {
    pub floor: f64,
    pub slope: f64,
    pub noise: f64,
    /// Non-dominant axes of symmetric objects get at least
    /// `reference_sigma_o + symmetric_margin`.
    pub reference_sigma_o: f64,
    pub symmetric_margin: f64,
}

impl Default for UncertaintyModel {
    fn default() -> Self {
        Self {
            floor: 0.01,
            slope: 0.6,
            noise: 0.02,
            reference_sigma_o: 0.4,
            symmetric_margin: 0.1,
        }
    }
}

/// Emitted axis uncertainty for a given occlusion fraction.
pub fn uncertainty_model<R: Rng + ?Sized>(
    occlusion: f64,
    symmetric_nondominant: bool,
    model: &UncertaintyModel,
    rng: &mut R,
) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let sigma = (model.floor + model.slope * occlusion + model.noise * n).max(model.floor);
    if symmetric_nondominant {
        sigma.max(model.reference_sigma_o + model.symmetric_margin)
    } else {
        sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OcclusionModel {
    Constant(f64),
    /// Per (frame, object): with probability `occluded_fraction` uniform on
    /// `[split, 1]`, otherwise uniform on `[0, split)`.
    Random { occluded_fraction: f64, split: f64 },
    /// `schedule[frame][object_index]`.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Keypoint pixel noise at zero occlusion.
    pub pixel_sigma: f64,
    pub fk_translation_sigma: f64,
    pub fk_rotation_sigma: f64,
    pub depth_sigma: f64,
    pub occlusion: OcclusionModel,
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            pixel_sigma: 0.0,
            fk_translation_sigma: 0.0,
            fk_rotation_sigma: 0.0,
            depth_sigma: 0.0,
            occlusion: OcclusionModel::Constant(0.0),
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pixel_sigma: 1.0,
            fk_translation_sigma: 2e-5,
            fk_rotation_sigma: 2e-5,
            depth_sigma: 0.002,
            occlusion: OcclusionModel::Random {
                occluded_fraction: 0.3,
                split: 0.3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// Cameras on a horizontal circle around `target`, all looking at it.
    Orbit {
        radius: f64,
        height: f64,
        n_views: usize,
        /// Swept angle in radians.
        arc: f64,
        target: Vector3<f64>,
    },
    /// World-from-camera poses.
    Explicit(Vec<Pose>),
}

impl Trajectory {
    pub fn poses(&self) -> Vec<Pose> {
        match self {
            Trajectory::Explicit(p) => p.clone(),
            Trajectory::Orbit {
                radius,
                height,
                n_views,
                arc,
                target,
            } => (0..*n_views)
                .map(|i| {
                    let a = arc * i as f64 / *n_views as f64;
                    let eye = target + Vector3::new(radius * a.cos(), radius * a.sin(), *height);
                    look_at(&eye, target)
                })
                .collect(),
        }
    }
}

/// Camera pose at `eye` with optical axis (`+z`) through `target` and image
/// `y` pointing down towards world `-z`.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let mut x = z.cross(&Vector3::z());
    if x.norm() < 1e-9 {
        x = Vector3::x();
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
    Pose::new(Rotation::from_matrix(&m), *eye)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub model: ObjectModel,
    /// World-from-object ground truth.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// World-from-base ground truth.
    pub base: Pose,
    pub objects: Vec<SceneObject>,
    pub trajectory: Trajectory,
    pub noise: NoiseConfig,
    pub uncertainty: UncertaintyModel,
    pub intrinsics: CameraIntrinsics,
    /// Depth points sampled from the camera-facing half before occlusion.
    pub depth_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectObservation {
    pub object: u32,
    pub occlusion: f64,
    /// `false` when some keypoint falls outside the image or behind the camera.
    pub in_view: bool,
    /// One per axis, x, y, z order.
    pub predictions: Vec<AxisPrediction>,
    /// Camera-frame segmented depth points.
    pub depth: Vec<Vector3<f64>>,
    pub gt_camera_from_object: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeasurement {
    pub t: usize,
    /// Noisy `^B_{C_t} T`.
    pub fk: Pose,
    /// World-from-camera ground truth.
    pub gt_camera: Pose,
    pub objects: Vec<ObjectObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames: Vec<FrameMeasurement>,
    pub warnings: Vec<SimWarning>,
}

/// The four demo objects: an asymmetric box, a cylinder, a square prism
/// with 4-fold symmetry and an L-shaped block.
pub fn demo_objects() -> Result<Vec<SceneObject>, ModelError> {
    let specs = [
        (
            ObjectSpec::new(1, Shape::Box { size: Vector3::new(0.10, 0.06, 0.04) }, SymmetryKind::Asymmetric),
            Pose::new(Rotation::from_axis_angle(&Vector3::z(), 0.4), Vector3::new(0.08, 0.05, 0.02)),
        ),
        (
            ObjectSpec::new(2, Shape::Cylinder { radius: 0.03, height: 0.10 }, SymmetryKind::Continuous { axis: Vector3::z() }),
            Pose::new(Rotation::identity(), Vector3::new(-0.07, 0.06, 0.05)),
        ),
        (
            ObjectSpec::new(
                3,
                Shape::Box { size: Vector3::new(0.05, 0.05, 0.09) },
                SymmetryKind::Discrete { order: 4, axis: Vector3::z() },
            ),
            Pose::new(Rotation::from_axis_angle(&Vector3::z(), -0.7), Vector3::new(-0.05, -0.08, 0.045)),
        ),
        (
            ObjectSpec::new(
                4,
                Shape::LBlock {
                    length: 0.09,
                    width: 0.04,
                    height: 0.06,
                    thickness: 0.02,
                },
                SymmetryKind::Asymmetric,
            ),
            Pose::new(Rotation::from_axis_angle(&Vector3::new(0.2, 0.1, 1.0), 1.9), Vector3::new(0.07, -0.07, 0.03)),
        ),
    ];
    specs
        .into_iter()
        .map(|(spec, pose)| Ok(SceneObject { model: spec.build()?, pose }))
        .collect()
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 600.0,
        fy: 600.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

/// Default 20-view orbit over the demo objects.
pub fn demo_scenario(seed: u64) -> Result<ScenarioConfig, ModelError> {
    Ok(ScenarioConfig {
        seed,
        base: Pose::identity(),
        objects: demo_objects()?,
        trajectory: Trajectory::Orbit {
            radius: 0.45,
            height: 0.40,
            n_views: 20,
            arc: core::f64::consts::TAU,
            target: Vector3::new(0.0, 0.0, 0.03),
        },
        noise: NoiseConfig::default(),
        uncertainty: UncertaintyModel::default(),
        intrinsics: default_intrinsics(),
        depth_points: 200,
    })
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    sigma * rng.sample::<f64, _>(StandardNormal)
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(gaussian(rng, sigma), gaussian(rng, sigma), gaussian(rng, sigma))
}

fn dominant_axis(model: &ObjectModel) -> Axis {
    let a = model.dominant_axis.abs();
    if a.x >= a.y && a.x >= a.z {
        Axis::X
    } else if a.y >= a.z {
        Axis::Y
    } else {
        Axis::Z
    }
}

impl ScenarioConfig {
    fn validate(&self, n_views: usize) -> Result<(), SimError> {
        if n_views == 0 {
            return Err(SimError::NoViews);
        }
        let n = &self.noise;
        for (name, v) in [
            ("pixel_sigma", n.pixel_sigma),
            ("fk_translation_sigma", n.fk_translation_sigma),
            ("fk_rotation_sigma", n.fk_rotation_sigma),
            ("depth_sigma", n.depth_sigma),
            ("uncertainty noise", self.uncertainty.noise),
        ] {
            if !(v >= 0.0) {
                return Err(SimError::NegativeNoise(name));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if self.objects[..i].iter().any(|p| p.model.id == o.model.id) {
                return Err(SimError::DuplicateObject(o.model.id));
            }
        }
        let check = |frame: usize, object: usize, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimError::InvalidOcclusion { frame, object, value })
            }
        };
        match &n.occlusion {
            OcclusionModel::Constant(v) => check(0, 0, *v)?,
            OcclusionModel::Random { occluded_fraction, split } => {
                check(0, 0, *occluded_fraction)?;
                check(0, 0, *split)?;
            }
            OcclusionModel::Explicit(rows) => {
                if rows.len() != n_views {
                    return Err(SimError::ScheduleShape {
                        got: rows.len(),
                        expected: n_views,
                    });
                }
                for (f, row) in rows.iter().enumerate() {
                    if row.len() != self.objects.len() {
                        return Err(SimError::ScheduleShape {
                            got: row.len(),
                            expected: self.objects.len(),
                        });
                    }
                    for (o, v) in row.iter().enumerate() {
                        check(f, o, *v)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates every frame of a scenario. Identical configs give identical
/// output.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario, SimError> {
    let cameras = config.trajectory.poses();
    config.validate(cameras.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = &config.noise;
    let k = &config.intrinsics;
    let mut seen = alloc::vec![false; config.objects.len()];

    let mut frames = Vec::with_capacity(cameras.len());
    for (t, cam) in cameras.iter().enumerate() {
        let true_fk = config.base.between(cam);
        let fk_noise = Twist::new(
            gaussian3(&mut rng, noise.fk_translation_sigma),
            gaussian3(&mut rng, noise.fk_rotation_sigma),
        );
        let fk = true_fk.compose(&Pose::exp(&fk_noise));

        let mut objects = Vec::with_capacity(config.objects.len());
        for (i, obj) in config.objects.iter().enumerate() {
            let occlusion = match &noise.occlusion {
                OcclusionModel::Constant(v) => *v,
                OcclusionModel::Random { occluded_fraction, split } => {
                    if rng.random::<f64>() < *occluded_fraction {
                        rng.random_range(*split..=1.0)
                    } else {
                        rng.random::<f64>() * split
                    }
                }
                OcclusionModel::Explicit(rows) => rows[t][i],
            };
            let gt = cam.between(&obj.pose);
            let model = &obj.model;
            let dominant = dominant_axis(model);
            let pixel_sigma = noise.pixel_sigma * (1.0 + 4.0 * occlusion);
            let mut in_view = true;
            let mut predictions = Vec::with_capacity(3);
            for axis in Axis::ALL {
                let nondominant = model.is_symmetric() && axis != dominant;
                let sigma = uncertainty_model(occlusion, nondominant, &config.uncertainty, &mut rng);
                // symmetric objects are only recovered up to symmetry off the dominant axis
                let pose = if nondominant {
                    let transforms = &model.symmetry.transforms;
                    let s = transforms[rng.random_range(0..transforms.len())];
                    gt.compose(&Pose::from_rotation(s))
                } else {
                    gt
                };
                let points = model.layout.axis_keypoints(axis);
                let mut keypoints = [Vector2::zeros(); KEYPOINTS_PER_AXIS];
                for (kp, p) in keypoints.iter_mut().zip(points.iter()) {
                    match project(k, &pose, p) {
                        Ok(uv) => {
                            *kp = uv + Vector2::new(gaussian(&mut rng, pixel_sigma), gaussian(&mut rng, pixel_sigma));
                            in_view &= k.contains(kp);
                        }
                        Err(_) => in_view = false,
                    }
                }
                predictions.push(AxisPrediction { axis, keypoints, sigma });
            }
            let depth = depth_points(model, &gt, occlusion, config.depth_points, noise.depth_sigma, &mut rng);
            seen[i] |= in_view;
            objects.push(ObjectObservation {
                object: model.id,
                occlusion,
                in_view,
                predictions,
                depth,
                gt_camera_from_object: gt,
            });
        }
        frames.push(FrameMeasurement {
            t,
            fk,
            gt_camera: *cam,
            objects,
        });
    }
    let warnings = config
        .objects
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(o, _)| SimWarning::ObjectNeverVisible(o.model.id))
        .collect();
    Ok(Scenario { frames, warnings })
}

/// Camera-facing surface samples, thinned by the occlusion fraction, with
/// Gaussian noise along the viewing ray.
fn depth_points<R: Rng + ?Sized>(
    model: &ObjectModel,
    gt: &Pose,
    occlusion: f64,
    count: usize,
    sigma: f64,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let center_depth = gt.translation.z;
    let front: Vec<Vector3<f64>> = model
        .surface_points
        .iter()
        .map(|p| gt.act(p))
        .filter(|p| p.z <= center_depth)
        .collect();
    let keep = ((count.min(front.len()) as f64) * (1.0 - occlusion)).round() as usize;
    let mut picked: Vec<usize> = sample(rng, front.len(), keep).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| {
            let p = front[i];
            p + p.normalize() * gaussian(rng, sigma)
        })
        .collect()
}
