//! Command-line flags and their precedence over the config file.

use std::path::PathBuf;

use clap::Parser;

use crate::config::{parse_sweep, Input, RunConfig};
use crate::AppError;

#[derive(Debug, Clone, Default, Parser)]
#[command(name = "ambipose", version, about = "Ambiguity-aware object pose estimation on synthetic scenes")]
pub struct Args {
    /// Config file (key = value with [sections]).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Scenario seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Axis rejection threshold.
    #[arg(long, value_name = "F")]
    pub sigma_o: Option<f64>,
    /// ICP gate on the combined sigma.
    #[arg(long, value_name = "F")]
    pub sigma_icp: Option<f64>,
    /// Skip ICP refinement.
    #[arg(long)]
    pub no_icp: bool,
    /// Re-run the pipeline over a sigma_o grid, e.g. 0:0.6:0.05.
    #[arg(long, value_name = "LO:HI:STEP")]
    pub sweep_sigma_o: Option<String>,
    /// Run on a saved measurement file instead of generating one.
    #[arg(long, value_name = "PATH")]
    pub replay: Option<PathBuf>,
    /// Also write the optimized factor graph.
    #[arg(long)]
    pub dump_graph: bool,
}

fn positive(name: &str, v: f64) -> Result<f64, AppError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(AppError::Config(crate::ConfigError {
            file: None,
            line: 0,
            message: format!("--{name} must be positive, got {v}"),
        }))
    }
}

impl Args {
    /// Default, then config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, AppError> {
        let mut cfg = RunConfig::demo();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
        }
        if let Some(v) = self.sigma_o {
            cfg.pipeline.sigma_o = positive("sigma-o", v)?;
        }
        if let Some(v) = self.sigma_icp {
            cfg.pipeline.sigma_icp = positive("sigma-icp", v)?;
        }
        if self.no_icp {
            cfg.pipeline.use_icp = false;
        }
        if let Some(s) = &self.sweep_sigma_o {
            let range = parse_sweep(s).map_err(|message| {
                AppError::Config(crate::ConfigError {
                    file: None,
                    line: 0,
                    message: format!("--sweep-sigma-o: {message}"),
                })
            })?;
            cfg.sweep = Some(range);
        }
        if let Some(path) = &self.replay {
            cfg.input = Input::Replay(path.clone());
        }
        if self.dump_graph {
            cfg.dump_graph = true;
        }
        Ok(cfg)
    }
}
