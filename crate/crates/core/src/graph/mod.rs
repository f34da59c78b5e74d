//! Object SLAM factor graph.
//!
//! The state holds the manipulator base `B`, one camera pose per frame and one
//! pose per object, all expressed in the world frame. Camera pose factors tie
//! `B` to each camera through forward kinematics; object pose factors tie a
//! camera to an object through the single-view proposal. Asymmetric objects
//! use a full relative-pose residual, symmetric objects two translation-only
//! constraint points on their dominant axis, never both. The global gauge is
//! fixed by a stiff prior on `B`.

mod factors;
mod solver;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::liegroups::{LieError, Pose};

pub use factors::{
    asymmetric_object_residual, camera_residual, information, object_information, prior_residual,
    relative_pose_residual, symmetric_object_residual, ResidualBlock,
};
pub use solver::{OptimizeReport, SolverConfig, Termination};

/// Default forward-kinematics covariance: 1e-6 m² per translation axis,
/// 1e-6 rad² per rotation axis.
pub const DEFAULT_CAMERA_COVARIANCE: [f64; 6] = [1e-6; 6];
/// Default gauge prior on the base.
pub const DEFAULT_BASE_PRIOR_COVARIANCE: [f64; 6] = [1e-12; 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateKey {
    Base,
    Camera(usize),
    Object(u32),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("a measurement for time {0} already exists")]
    DuplicateTime(usize),
    #[error("time {got} skips ahead of the next expected time {expected}")]
    NonContiguousTime { got: usize, expected: usize },
    #[error("factor time {factor} does not match measurement time {time}")]
    TimeMismatch { time: usize, factor: usize },
    #[error("object {0} changed symmetry class between observations")]
    ClassChanged(u32),
    #[error("object factor for object {object} at time {time} has non-positive sigma {sigma}")]
    InvalidSigma { time: usize, object: u32, sigma: f64 },
    #[error("covariance entries must be positive")]
    InvalidCovariance,
    #[error("factor references missing state {0:?}")]
    MissingState(StateKey),
    #[error("the system is rank deficient in states {0:?}")]
    RankDeficient(Vec<StateKey>),
    #[error("the graph has no camera factors")]
    Empty,
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// `X = {B, C_0..t, O_1..k}`, world-frame poses.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub base: Pose,
    pub cameras: Vec<Pose>,
    pub objects: BTreeMap<u32, Pose>,
}

impl StateVector {
    pub fn get(&self, key: StateKey) -> Option<&Pose> {
        match key {
            StateKey::Base => Some(&self.base),
            StateKey::Camera(t) => self.cameras.get(t),
            StateKey::Object(k) => self.objects.get(&k),
        }
    }

    pub fn len(&self) -> usize {
        1 + self.cameras.len() + self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Pose of object `k` in the frame of camera `t`.
    pub fn camera_from_object(&self, t: usize, k: u32) -> Option<Pose> {
        Some(self.cameras.get(t)?.between(self.objects.get(&k)?))
    }
}

/// Forward-kinematics measurement `^B_{C_t} T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPoseFactor {
    pub t: usize,
    pub measurement: Pose,
    /// Diagonal covariance `[tx, ty, tz, rx, ry, rz]` in m² and rad².
    pub covariance: [f64; 6],
}

/// Single-view object pose proposal `^{C_t}_{O_k} T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectPoseFactor {
    pub t: usize,
    pub object: u32,
    pub measurement: Pose,
    /// Combined uncertainty of the valid axes; the factor covariance is
    /// `sigma_norm^2 I`.
    pub sigma_norm: f64,
    pub symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePrior {
    pub pose: Pose,
    pub covariance: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub state: StateVector,
    pub base_prior: Option<BasePrior>,
    pub camera_factors: Vec<CameraPoseFactor>,
    pub object_factors: Vec<ObjectPoseFactor>,
    /// Dominant axis per symmetric object, object frame; `z` when absent.
    pub dominant_axes: BTreeMap<u32, Vector3<f64>>,
    /// Distance of the axis constraint point from the object center (m).
    pub axis_offset: f64,
}

impl FactorGraph {
    /// Empty graph whose base is initialized at, and anchored to, `prior`.
    pub fn new(prior: BasePrior) -> Self {
        Self {
            state: StateVector {
                base: prior.pose,
                cameras: Vec::new(),
                objects: BTreeMap::new(),
            },
            base_prior: Some(prior),
            camera_factors: Vec::new(),
            object_factors: Vec::new(),
            dominant_axes: BTreeMap::new(),
            axis_offset: 1.0,
        }
    }

    pub fn with_axis_offset(mut self, offset: f64) -> Self {
        self.axis_offset = offset;
        self
    }

    pub fn set_dominant_axis(&mut self, object: u32, axis: Vector3<f64>) {
        self.dominant_axes.insert(object, axis.normalize());
    }

    /// Axis constraint vector (direction times offset) of an object.
    pub fn axis_vector(&self, object: u32) -> Vector3<f64> {
        self.dominant_axes.get(&object).copied().unwrap_or_else(Vector3::z) * self.axis_offset
    }

    pub fn num_times(&self) -> usize {
        self.state.cameras.len()
    }

    /// Adds the forward-kinematics factor and the object factors of time `t`.
    /// New cameras start at `B * F_t`; objects seen for the first time start
    /// at `C_t * P`.
    pub fn add_measurement(
        &mut self,
        t: usize,
        camera: CameraPoseFactor,
        objects: &[ObjectPoseFactor],
    ) -> Result<(), GraphError> {
        let expected = self.state.cameras.len();
        if t < expected {
            return Err(GraphError::DuplicateTime(t));
        }
        if t > expected {
            return Err(GraphError::NonContiguousTime { got: t, expected });
        }
        if camera.t != t {
            return Err(GraphError::TimeMismatch { time: t, factor: camera.t });
        }
        if camera.covariance.iter().any(|c| !(*c > 0.0)) {
            return Err(GraphError::InvalidCovariance);
        }
        for f in objects {
            if f.t != t {
                return Err(GraphError::TimeMismatch { time: t, factor: f.t });
            }
            if !(f.sigma_norm > 0.0) {
                return Err(GraphError::InvalidSigma {
                    time: t,
                    object: f.object,
                    sigma: f.sigma_norm,
                });
            }
            let class = self.object_factors.iter().find(|g| g.object == f.object).map(|g| g.symmetric);
            let class = class.or_else(|| objects.iter().find(|g| g.object == f.object).map(|g| g.symmetric));
            if class != Some(f.symmetric) {
                return Err(GraphError::ClassChanged(f.object));
            }
        }

        let cam = self.state.base.compose(&camera.measurement);
        self.state.cameras.push(cam);
        self.camera_factors.push(camera);
        for f in objects {
            self.state
                .objects
                .entry(f.object)
                .or_insert_with(|| cam.compose(&f.measurement));
            self.object_factors.push(*f);
        }
        Ok(())
    }

    /// Checks that every factor references existing states.
    pub fn validate(&self) -> Result<(), GraphError> {
        for f in &self.camera_factors {
            if f.t >= self.state.cameras.len() {
                return Err(GraphError::MissingState(StateKey::Camera(f.t)));
            }
        }
        for f in &self.object_factors {
            if f.t >= self.state.cameras.len() {
                return Err(GraphError::MissingState(StateKey::Camera(f.t)));
            }
            if !self.state.objects.contains_key(&f.object) {
                return Err(GraphError::MissingState(StateKey::Object(f.object)));
            }
        }
        Ok(())
    }

    /// Residual blocks of every factor at the current state, prior first,
    /// then camera factors, then object factors.
    pub fn residuals(&self) -> Result<Vec<(StateKey, StateKey, ResidualBlock)>, GraphError> {
        let mut out = Vec::with_capacity(1 + self.camera_factors.len() + self.object_factors.len());
        let s = &self.state;
        if let Some(prior) = &self.base_prior {
            out.push((StateKey::Base, StateKey::Base, prior_residual(&s.base, &prior.pose, &prior.covariance)?));
        }
        for f in &self.camera_factors {
            let cam = s.cameras.get(f.t).ok_or(GraphError::MissingState(StateKey::Camera(f.t)))?;
            out.push((
                StateKey::Base,
                StateKey::Camera(f.t),
                camera_residual(&s.base, cam, &f.measurement, &f.covariance)?,
            ));
        }
        for f in &self.object_factors {
            let cam = s.cameras.get(f.t).ok_or(GraphError::MissingState(StateKey::Camera(f.t)))?;
            let obj = s
                .objects
                .get(&f.object)
                .ok_or(GraphError::MissingState(StateKey::Object(f.object)))?;
            let block = if f.symmetric {
                symmetric_object_residual(cam, obj, &f.measurement, f.sigma_norm, &self.axis_vector(f.object))
            } else {
                asymmetric_object_residual(cam, obj, &f.measurement, f.sigma_norm)?
            };
            out.push((StateKey::Camera(f.t), StateKey::Object(f.object), block));
        }
        Ok(out)
    }

    /// Total cost `sum r^T W r` without a robust kernel.
    pub fn cost(&self) -> Result<f64, GraphError> {
        Ok(self.residuals()?.iter().map(|(_, _, r)| r.cost()).sum())
    }
}
