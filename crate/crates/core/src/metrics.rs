//! Pose error metrics: ADD, ADD-S, AUC, MSSD, MSPD and BOP-style average
//! recall.

use alloc::vec::Vec;

use nalgebra::Vector3;
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

use crate::liegroups::Pose;
use crate::object_model::ObjectModel;
use crate::pose_init::{project, CameraIntrinsics, PoseInitError};
use crate::spatial::NearestIndex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("the object model has no surface points")]
    EmptyModel,
    #[error("a model point projects with non-positive depth {depth}")]
    BehindCamera { depth: f64 },
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("no samples to aggregate")]
    NoSamples,
}

impl From<PoseInitError> for MetricsError {
    fn from(e: PoseInitError) -> Self {
        match e {
            PoseInitError::BehindCamera { depth } => MetricsError::BehindCamera { depth },
            _ => MetricsError::BehindCamera { depth: f64::NAN },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub add: f64,
    pub add_s: f64,
    pub mssd: f64,
    /// Pixels.
    pub mspd: f64,
}

impl PoseError {
    /// Error record of a missing estimate: every metric is infinite.
    pub fn missing() -> Self {
        Self {
            add: f64::INFINITY,
            add_s: f64::INFINITY,
            mssd: f64::INFINITY,
            mspd: f64::INFINITY,
        }
    }

    /// All four metrics for a camera-frame estimate of `model`.
    pub fn evaluate(est: &Pose, gt: &Pose, model: &ObjectModel, k: &CameraIntrinsics) -> Result<Self, MetricsError> {
        Ok(Self {
            add: add_error(est, gt, model)?,
            add_s: adds_error(est, gt, model)?,
            mssd: mssd(est, gt, model)?,
            mspd: mspd(est, gt, model, k)?,
        })
    }

    /// ADD for asymmetric objects, ADD-S for symmetric ones.
    pub fn add_or_adds(&self, symmetric: bool) -> f64 {
        if symmetric {
            self.add_s
        } else {
            self.add
        }
    }
}

fn points(model: &ObjectModel) -> Result<&[Vector3<f64>], MetricsError> {
    if model.surface_points.is_empty() {
        Err(MetricsError::EmptyModel)
    } else {
        Ok(&model.surface_points)
    }
}

pub fn add_error(est: &Pose, gt: &Pose, model: &ObjectModel) -> Result<f64, MetricsError> {
    let pts = points(model)?;
    let sum: f64 = pts.iter().map(|p| (est.act(p) - gt.act(p)).norm()).sum();
    Ok(sum / pts.len() as f64)
}

pub fn adds_error(est: &Pose, gt: &Pose, model: &ObjectModel) -> Result<f64, MetricsError> {
    let pts = points(model)?;
    let target: Vec<Vector3<f64>> = pts.iter().map(|q| gt.act(q)).collect();
    let index = NearestIndex::new(&target).ok_or(MetricsError::EmptyModel)?;
    let sum: f64 = pts.iter().map(|p| index.nearest(&est.act(p)).1.sqrt()).sum();
    Ok(sum / pts.len() as f64)
}

/// Area under the accuracy-threshold curve on `[0, max_threshold]`,
/// normalized to `[0, 1]`. Accuracy at `tau` is the fraction of errors not
/// above `tau`; the curve is a step function, integrated exactly.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64, MetricsError> {
    if !(max_threshold > 0.0) {
        return Err(MetricsError::InvalidThreshold(max_threshold));
    }
    if errors.is_empty() {
        return Ok(0.0);
    }
    let area: f64 = errors
        .iter()
        .map(|&e| if e >= 0.0 { (1.0 - e / max_threshold).max(0.0) } else { 1.0 })
        .sum();
    Ok(area / errors.len() as f64)
}

pub fn mssd(est: &Pose, gt: &Pose, model: &ObjectModel) -> Result<f64, MetricsError> {
    let pts = points(model)?;
    let moved: Vec<Vector3<f64>> = pts.iter().map(|p| est.act(p)).collect();
    let mut best = f64::INFINITY;
    for s in &model.symmetry.transforms {
        let g = gt.compose(&Pose::from_rotation(*s));
        let mut worst = 0.0f64;
        for (p, e) in pts.iter().zip(&moved) {
            worst = worst.max((e - g.act(p)).norm());
            if worst >= best {
                break;
            }
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Maximum symmetry-aware projection distance in pixels; both poses map the
/// object into the camera frame.
pub fn mspd(est: &Pose, gt: &Pose, model: &ObjectModel, k: &CameraIntrinsics) -> Result<f64, MetricsError> {
    let pts = points(model)?;
    let moved = pts.iter().map(|p| project(k, est, p)).collect::<Result<Vec<_>, _>>()?;
    let mut best = f64::INFINITY;
    for s in &model.symmetry.transforms {
        let g = gt.compose(&Pose::from_rotation(*s));
        let mut worst = 0.0f64;
        for (p, e) in pts.iter().zip(&moved) {
            worst = worst.max((e - project(k, &g, p)?).norm());
            if worst >= best {
                break;
            }
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// BOP threshold grids.
#[derive(Debug, Clone, PartialEq)]
pub struct BopThresholds {
    /// MSSD thresholds as fractions of the object diameter.
    pub mssd_fractions: Vec<f64>,
    /// MSPD thresholds in pixels at a 640 px wide image.
    pub mspd_pixels: Vec<f64>,
    /// VSD thresholds on the (unitless) VSD error.
    pub vsd: Vec<f64>,
}

impl Default for BopThresholds {
    fn default() -> Self {
        Self {
            mssd_fractions: (1..=10).map(|i| 0.05 * i as f64).collect(),
            mspd_pixels: (1..=10).map(|i| 5.0 * i as f64).collect(),
            vsd: (1..=10).map(|i| 0.05 * i as f64).collect(),
        }
    }
}

/// One evaluated (frame, object) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArSample {
    pub mssd: f64,
    pub mspd: f64,
    pub diameter: f64,
    pub vsd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArReport {
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub ar_vsd: Option<f64>,
    /// Mean over MSSD and MSPD.
    pub ar_in_scope: f64,
    /// Mean over all three metrics, present only with VSD errors for every sample.
    pub combined: Option<f64>,
}

/// Fraction of `errors` strictly below each threshold.
pub fn recall_curve(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let n = errors.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e < t).count() as f64 / n)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn average_recall(samples: &[ArSample], grid: &BopThresholds, image_width: u32) -> Result<ArReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let n = samples.len() as f64;
    let mut mssd_recall = Vec::with_capacity(grid.mssd_fractions.len());
    for &f in &grid.mssd_fractions {
        let hits = samples.iter().filter(|s| s.mssd < f * s.diameter).count();
        mssd_recall.push(hits as f64 / n);
    }
    let scale = f64::from(image_width) / 640.0;
    let mspd_thresholds: Vec<f64> = grid.mspd_pixels.iter().map(|p| p * scale).collect();
    let mspd_errors: Vec<f64> = samples.iter().map(|s| s.mspd).collect();
    let ar_mssd = mean(&mssd_recall);
    let ar_mspd = mean(&recall_curve(&mspd_errors, &mspd_thresholds));
    let ar_vsd = samples
        .iter()
        .map(|s| s.vsd)
        .collect::<Option<Vec<f64>>>()
        .map(|v| mean(&recall_curve(&v, &grid.vsd)));
    Ok(ArReport {
        ar_mssd,
        ar_mspd,
        ar_vsd,
        ar_in_scope: 0.5 * (ar_mssd + ar_mspd),
        combined: ar_vsd.map(|v| (v + ar_mssd + ar_mspd) / 3.0),
    })
}
