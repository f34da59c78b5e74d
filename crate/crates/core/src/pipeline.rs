//! End-to-end processing of a measurement sequence: uncertainty-based axis
//! selection, PnP, gated ICP, factor-graph ingestion and a final batch
//! optimization, followed by evaluation against ground truth.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

use crate::ambiguity::{select_and_merge, AmbiguityError, DEFAULT_SIGMA_O};
use crate::graph::{
    BasePrior, CameraPoseFactor, FactorGraph, GraphError, ObjectPoseFactor, OptimizeReport, SolverConfig, StateVector,
    DEFAULT_BASE_PRIOR_COVARIANCE, DEFAULT_CAMERA_COVARIANCE,
};
use crate::liegroups::Pose;
use crate::metrics::{average_recall, ArReport, ArSample, BopThresholds, MetricsError, PoseError};
use crate::object_model::ObjectModel;
use crate::pose_init::{refine_icp, solve_pnp, CameraIntrinsics, PoseInitError, PoseProposal, DEFAULT_SIGMA_ICP};
use crate::sim::FrameMeasurement;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sigma_o: f64,
    pub sigma_icp: f64,
    pub use_icp: bool,
    pub solver: SolverConfig,
    pub camera_covariance: [f64; 6],
    pub base_prior: Pose,
    pub base_prior_covariance: [f64; 6],
    /// Distance of the symmetric-factor axis point from the object center.
    pub axis_offset: f64,
    /// Lower bound on the object-factor sigma.
    pub min_factor_sigma: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sigma_o: DEFAULT_SIGMA_O,
            sigma_icp: DEFAULT_SIGMA_ICP,
            use_icp: true,
            solver: SolverConfig::default(),
            camera_covariance: DEFAULT_CAMERA_COVARIANCE,
            base_prior: Pose::identity(),
            base_prior_covariance: DEFAULT_BASE_PRIOR_COVARIANCE,
            axis_offset: 1.0,
            min_factor_sigma: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("object {0} has no model")]
    UnknownObject(u32),
    #[error(transparent)]
    Ambiguity(#[from] AmbiguityError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// What happened to one object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FrontEnd {
    OutOfView,
    /// Every axis exceeded `sigma_o`.
    Rejected,
    PnpFailed(PoseInitError),
    Accepted {
        valid_axes: usize,
        /// PnP estimate before any ICP refinement.
        pnp: Pose,
        proposal: PoseProposal,
        icp_error: Option<PoseInitError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub t: usize,
    pub object: u32,
    pub outcome: FrontEnd,
}

impl Detection {
    pub fn proposal(&self) -> Option<&PoseProposal> {
        match &self.outcome {
            FrontEnd::Accepted { proposal, .. } => Some(proposal),
            _ => None,
        }
    }

    pub fn valid_axes(&self) -> usize {
        match &self.outcome {
            FrontEnd::Accepted { valid_axes, .. } => *valid_axes,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub detections: Vec<Detection>,
    pub graph: FactorGraph,
    pub report: OptimizeReport,
}

impl ScenarioResult {
    pub fn state(&self) -> &StateVector {
        &self.graph.state
    }

    /// Optimized camera-from-object estimate for frame `t`.
    pub fn optimized(&self, t: usize, object: u32) -> Option<Pose> {
        self.graph.state.camera_from_object(t, object)
    }
}

pub fn model_map(models: &[ObjectModel]) -> BTreeMap<u32, &ObjectModel> {
    models.iter().map(|m| (m.id, m)).collect()
}

/// Axis selection, PnP and gated ICP for one object observation.
pub fn front_end(
    k: &CameraIntrinsics,
    model: &ObjectModel,
    obs: &crate::sim::ObjectObservation,
    config: &PipelineConfig,
) -> Result<FrontEnd, PipelineError> {
    if !obs.in_view {
        return Ok(FrontEnd::OutOfView);
    }
    let Some(merged) = select_and_merge(&obs.predictions, &model.layout, config.sigma_o)? else {
        return Ok(FrontEnd::Rejected);
    };
    let pnp = match solve_pnp(k, &merged) {
        Ok(p) => p,
        Err(PoseInitError::NoConvergence { best }) => best,
        Err(e) => return Ok(FrontEnd::PnpFailed(e)),
    };
    let (proposal, icp_error) = if config.use_icp {
        match refine_icp(&pnp, &obs.depth, model, config.sigma_icp) {
            Ok(p) => (p, None),
            Err(e) => (pnp.clone(), Some(e)),
        }
    } else {
        (pnp.clone(), None)
    };
    Ok(FrontEnd::Accepted {
        valid_axes: merged.valid_axes.len(),
        pnp: pnp.pose,
        proposal,
        icp_error,
    })
}

/// Front end plus graph construction for every frame, without optimizing.
pub fn ingest(
    frames: &[FrameMeasurement],
    models: &[ObjectModel],
    k: &CameraIntrinsics,
    config: &PipelineConfig,
) -> Result<(Vec<Detection>, FactorGraph), PipelineError> {
    let by_id = model_map(models);
    let mut graph = FactorGraph::new(BasePrior {
        pose: config.base_prior,
        covariance: config.base_prior_covariance,
    })
    .with_axis_offset(config.axis_offset);
    for m in models {
        if m.is_symmetric() {
            graph.set_dominant_axis(m.id, m.dominant_axis);
        }
    }
    let mut detections = Vec::new();
    for frame in frames {
        let mut factors = Vec::new();
        for obs in &frame.objects {
            let model = by_id.get(&obs.object).ok_or(PipelineError::UnknownObject(obs.object))?;
            let outcome = front_end(k, model, obs, config)?;
            if let FrontEnd::Accepted { proposal, .. } = &outcome {
                factors.push(ObjectPoseFactor {
                    t: frame.t,
                    object: obs.object,
                    measurement: proposal.pose,
                    sigma_norm: proposal.sigma_norm.max(config.min_factor_sigma),
                    symmetric: model.is_symmetric(),
                });
            }
            detections.push(Detection {
                t: frame.t,
                object: obs.object,
                outcome,
            });
        }
        let camera = CameraPoseFactor {
            t: frame.t,
            measurement: frame.fk,
            covariance: config.camera_covariance,
        };
        graph.add_measurement(frame.t, camera, &factors)?;
    }
    Ok((detections, graph))
}

/// Runs the front end on every frame, builds the graph and optimizes once
/// after ingestion.
pub fn run(
    frames: &[FrameMeasurement],
    models: &[ObjectModel],
    k: &CameraIntrinsics,
    config: &PipelineConfig,
) -> Result<ScenarioResult, PipelineError> {
    let (detections, mut graph) = ingest(frames, models, k, config)?;
    let report = graph.optimize(&config.solver)?;
    Ok(ScenarioResult {
        detections,
        graph,
        report,
    })
}

/// Per (frame, object) errors of the raw proposal and of the optimized
/// estimate, both in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub t: usize,
    pub object: u32,
    pub sigma_norm: Option<f64>,
    pub valid_axes: usize,
    pub raw: PoseError,
    pub optimized: PoseError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSummary {
    pub object: u32,
    pub auc_raw: f64,
    pub auc_optimized: f64,
    pub ar_raw: ArReport,
    pub ar_optimized: ArReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<ErrorRow>,
    pub objects: Vec<ObjectSummary>,
    pub ar_raw: ArReport,
    pub ar_optimized: ArReport,
}

/// ADD(-S) AUC threshold: 10 cm, as in the YCB-Video protocol.
pub const AUC_MAX_THRESHOLD: f64 = 0.1;

/// Errors of `est` against `gt`; an estimate that puts points behind the
/// camera scores an infinite MSPD.
pub fn pose_error(est: &Pose, gt: &Pose, model: &ObjectModel, k: &CameraIntrinsics) -> Result<PoseError, MetricsError> {
    use crate::metrics::{add_error, adds_error, mspd, mssd};
    let mspd = match mspd(est, gt, model, k) {
        Ok(v) => v,
        Err(MetricsError::BehindCamera { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(PoseError {
        add: add_error(est, gt, model)?,
        add_s: adds_error(est, gt, model)?,
        mssd: mssd(est, gt, model)?,
        mspd,
    })
}

/// Evaluates every in-view (frame, object) pair.
pub fn evaluate(
    frames: &[FrameMeasurement],
    result: &ScenarioResult,
    models: &[ObjectModel],
    k: &CameraIntrinsics,
    grid: &BopThresholds,
) -> Result<Evaluation, PipelineError> {
    let by_id = model_map(models);
    let mut detections = BTreeMap::new();
    for d in &result.detections {
        detections.insert((d.t, d.object), d);
    }
    let mut rows = Vec::new();
    for frame in frames {
        for obs in &frame.objects {
            if !obs.in_view {
                continue;
            }
            let model = by_id.get(&obs.object).ok_or(PipelineError::UnknownObject(obs.object))?;
            let gt = &obs.gt_camera_from_object;
            let det = detections.get(&(frame.t, obs.object));
            let proposal = det.and_then(|d| d.proposal());
            let raw = match proposal {
                Some(p) => pose_error(&p.pose, gt, model, k)?,
                None => PoseError::missing(),
            };
            let optimized = match result.optimized(frame.t, obs.object) {
                Some(p) => pose_error(&p, gt, model, k)?,
                None => PoseError::missing(),
            };
            rows.push(ErrorRow {
                t: frame.t,
                object: obs.object,
                sigma_norm: proposal.map(|p| p.sigma_norm),
                valid_axes: det.map_or(0, |d| d.valid_axes()),
                raw,
                optimized,
            });
        }
    }

    let sample = |e: &PoseError, m: &ObjectModel| ArSample {
        mssd: e.mssd,
        mspd: e.mspd,
        diameter: m.diameter,
        vsd: None,
    };
    let mut objects = Vec::new();
    for m in models {
        let mine: Vec<&ErrorRow> = rows.iter().filter(|r| r.object == m.id).collect();
        if mine.is_empty() {
            continue;
        }
        let sym = m.is_symmetric();
        let raw: Vec<f64> = mine.iter().map(|r| r.raw.add_or_adds(sym)).collect();
        let opt: Vec<f64> = mine.iter().map(|r| r.optimized.add_or_adds(sym)).collect();
        let raw_s: Vec<ArSample> = mine.iter().map(|r| sample(&r.raw, m)).collect();
        let opt_s: Vec<ArSample> = mine.iter().map(|r| sample(&r.optimized, m)).collect();
        objects.push(ObjectSummary {
            object: m.id,
            auc_raw: crate::metrics::auc(&raw, AUC_MAX_THRESHOLD)?,
            auc_optimized: crate::metrics::auc(&opt, AUC_MAX_THRESHOLD)?,
            ar_raw: average_recall(&raw_s, grid, k.width)?,
            ar_optimized: average_recall(&opt_s, grid, k.width)?,
        });
    }
    let all = |f: &dyn Fn(&ErrorRow) -> PoseError| -> Result<ArReport, MetricsError> {
        let samples: Vec<ArSample> = rows.iter().map(|r| sample(&f(r), by_id[&r.object])).collect();
        average_recall(&samples, grid, k.width)
    };
    let ar_raw = all(&|r| r.raw)?;
    let ar_optimized = all(&|r| r.optimized)?;
    Ok(Evaluation {
        rows,
        objects,
        ar_raw,
        ar_optimized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub sigma_o: f64,
    pub accepted: usize,
    pub ar_raw: f64,
    pub ar_optimized: f64,
}

/// Re-runs the pipeline for every threshold in `values`.
pub fn sweep_sigma_o(
    frames: &[FrameMeasurement],
    models: &[ObjectModel],
    k: &CameraIntrinsics,
    config: &PipelineConfig,
    grid: &BopThresholds,
    values: &[f64],
) -> Result<Vec<SweepRow>, PipelineError> {
    values
        .iter()
        .map(|&sigma_o| {
            let cfg = PipelineConfig { sigma_o, ..config.clone() };
            let result = run(frames, models, k, &cfg)?;
            let eval = evaluate(frames, &result, models, k, grid)?;
            Ok(SweepRow {
                sigma_o,
                accepted: result.detections.iter().filter(|d| d.proposal().is_some()).count(),
                ar_raw: eval.ar_raw.ar_in_scope,
                ar_optimized: eval.ar_optimized.ar_in_scope,
            })
        })
        .collect()
}

/// Inclusive `lo:hi:step` grid, robust to accumulated rounding.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(hi >= lo) {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid_has_thirteen_points() {
        let g = threshold_grid(0.0, 0.6, 0.05);
        assert_eq!(g.len(), 13);
        assert!((g[12] - 0.6).abs() < 1e-12);
        assert!(threshold_grid(0.0, 1.0, 0.0).is_empty());
    }
}
