//! Batch runs: load or generate a scene, run the pipeline, write reports.

use std::path::{Path, PathBuf};

use ambipose_core::pipeline::{evaluate, ingest, sweep_sigma_o, threshold_grid, Evaluation, ScenarioResult, SweepRow};
use ambipose_core::sim::{generate, SimWarning};

use crate::config::{Input, RunConfig};
use crate::format::{read_measurements, write_graph, write_measurements, MeasurementSet};
use crate::report::{cost_csv, metrics_csv, poses_csv, sweep_csv};
use crate::AppError;

pub const MEASUREMENTS_FILE: &str = "measurements.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const POSES_FILE: &str = "poses.csv";
pub const COST_FILE: &str = "cost.csv";
pub const GRAPH_FILE: &str = "graph.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug)]
pub struct RunSummary {
    pub set: MeasurementSet,
    pub warnings: Vec<SimWarning>,
    pub result: ScenarioResult,
    pub evaluation: Evaluation,
    pub sweep: Option<Vec<SweepRow>>,
    pub written: Vec<PathBuf>,
}

impl RunSummary {
    /// Number of (frame, object) pairs with a pose proposal.
    pub fn accepted(&self) -> usize {
        self.result.detections.iter().filter(|d| d.proposal().is_some()).count()
    }

    /// Valid axes summed over all detections.
    pub fn valid_axes(&self) -> usize {
        self.result.detections.iter().map(|d| d.valid_axes()).sum()
    }
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<(), AppError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| AppError::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Reads a measurement file.
pub fn load_measurements(path: &Path) -> Result<MeasurementSet, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    read_measurements(&text).map_err(|source| AppError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates the configured scenario.
pub fn generate_measurements(config: &RunConfig) -> Result<(MeasurementSet, Vec<SimWarning>), AppError> {
    let scenario = generate(&config.scenario).map_err(AppError::Scenario)?;
    let set = MeasurementSet {
        intrinsics: config.scenario.intrinsics,
        models: config.scenario.objects.iter().map(|o| o.model.clone()).collect(),
        frames: scenario.frames,
    };
    Ok((set, scenario.warnings))
}

/// Runs the pipeline and writes every report into `config.out`. On a solver
/// failure the front-end poses and the unoptimized graph are still written.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, AppError> {
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    let mut written = Vec::new();
    let (set, warnings) = match &config.input {
        Input::Generate => {
            let (set, warnings) = generate_measurements(config)?;
            write(out, MEASUREMENTS_FILE, &write_measurements(&set), &mut written)?;
            (set, warnings)
        }
        Input::Replay(path) => (load_measurements(path)?, Vec::new()),
    };
    let k = &set.intrinsics;
    let (detections, mut graph) = ingest(&set.frames, &set.models, k, &config.pipeline).map_err(AppError::Solver)?;
    let report = match graph.optimize(&config.pipeline.solver) {
        Ok(r) => r,
        Err(e) => {
            write(out, POSES_FILE, &poses_csv(&detections, None), &mut written)?;
            write(out, GRAPH_FILE, &write_graph(&graph), &mut written)?;
            return Err(AppError::Solver(e.into()));
        }
    };
    let result = ScenarioResult {
        detections,
        graph,
        report,
    };
    let evaluation = evaluate(&set.frames, &result, &set.models, k, &config.grid).map_err(AppError::Solver)?;
    write(out, METRICS_FILE, &metrics_csv(&evaluation), &mut written)?;
    write(out, POSES_FILE, &poses_csv(&result.detections, Some(result.state())), &mut written)?;
    write(out, COST_FILE, &cost_csv(&result.report), &mut written)?;
    if config.dump_graph {
        write(out, GRAPH_FILE, &write_graph(&result.graph), &mut written)?;
    }
    let sweep = match config.sweep {
        Some((lo, hi, step)) => {
            let values = threshold_grid(lo, hi, step);
            let rows = sweep_sigma_o(&set.frames, &set.models, k, &config.pipeline, &config.grid, &values)
                .map_err(AppError::Solver)?;
            write(out, SWEEP_FILE, &sweep_csv(&rows), &mut written)?;
            Some(rows)
        }
        None => None,
    };
    Ok(RunSummary {
        set,
        warnings,
        result,
        evaluation,
        sweep,
        written,
    })
}

/// Runs the pipeline on a saved measurement file.
pub fn replay(path: &Path, config: &RunConfig) -> Result<RunSummary, AppError> {
    let config = RunConfig {
        input: Input::Replay(path.to_path_buf()),
        ..config.clone()
    };
    run_pipeline(&config)
}
