//! Flat `key = value` configuration with `[section]` headers.
//!
//! Precedence is command-line flag > config file > built-in default. An
//! `[object]` header may repeat; each one starts a new object record.

use std::path::{Path, PathBuf};

use ambipose_core::liegroups::{Pose, Rotation};
use ambipose_core::metrics::BopThresholds;
use ambipose_core::object_model::{ObjectSpec, Shape, SymmetryKind};
use ambipose_core::pipeline::PipelineConfig;
use ambipose_core::pose_init::CameraIntrinsics;
use ambipose_core::sim::{
    demo_objects, demo_scenario, NoiseConfig, OcclusionModel, ScenarioConfig, SceneObject, Trajectory,
};
use nalgebra::Vector3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}line {line}: {message}", source_prefix(.file))]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: usize,
    pub message: String,
}

fn source_prefix(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            file: None,
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// Parses the raw section/entry structure. `#` starts a comment.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::at(line, "empty section name"));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::at(line, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| ConfigError::at(line, format!("`{key}` appears before any [section]")))?;
        if section.name != "object" && section.entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::at(line, format!("duplicate key `{key}` in [{}]", section.name)));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

fn number(e: &Entry) -> Result<f64, ConfigError> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ConfigError::at(e.line, format!("`{}` expects a finite number, got `{}`", e.key, e.value)))
}

fn numbers(e: &Entry, n: usize) -> Result<Vec<f64>, ConfigError> {
    let v: Result<Vec<f64>, _> = e.value.split_whitespace().map(str::parse::<f64>).collect();
    match v {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(ConfigError::at(
            e.line,
            format!("`{}` expects {n} numbers, got `{}`", e.key, e.value),
        )),
    }
}

fn integer<T: std::str::FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value
        .parse::<T>()
        .map_err(|_| ConfigError::at(e.line, format!("`{}` expects a non-negative integer, got `{}`", e.key, e.value)))
}

fn boolean(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(ConfigError::at(e.line, format!("`{}` expects true or false, got `{v}`", e.key))),
    }
}

fn positive(e: &Entry) -> Result<f64, ConfigError> {
    let v = number(e)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::at(e.line, format!("`{}` must be positive", e.key)))
    }
}

fn non_negative(e: &Entry) -> Result<f64, ConfigError> {
    let v = number(e)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::at(e.line, format!("`{}` must be non-negative", e.key)))
    }
}

fn fraction(e: &Entry) -> Result<f64, ConfigError> {
    let v = number(e)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(ConfigError::at(e.line, format!("`{}` must lie in [0, 1]", e.key)))
    }
}

/// Seven numbers `qw qx qy qz tx ty tz` or twelve (row-major 3x4).
fn pose(e: &Entry) -> Result<Pose, ConfigError> {
    let v: Vec<f64> = e.value.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    crate::format::pose_from_numbers(&v)
        .ok_or_else(|| ConfigError::at(e.line, format!("`{}` expects a pose (7 or 12 numbers)", e.key)))
}

fn vector3(e: &Entry) -> Result<Vector3<f64>, ConfigError> {
    let v = numbers(e, 3)?;
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// Where the scene comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Generate,
    Replay(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Input,
    pub scenario: ScenarioConfig,
    pub pipeline: PipelineConfig,
    pub grid: BopThresholds,
    pub out: PathBuf,
    pub dump_graph: bool,
    /// `(lo, hi, step)` of a σ_o sweep.
    pub sweep: Option<(f64, f64, f64)>,
}

impl RunConfig {
    pub fn demo() -> Self {
        Self {
            input: Input::Generate,
            scenario: demo_scenario(0).expect("demo objects are valid"),
            pipeline: PipelineConfig::default(),
            grid: BopThresholds::default(),
            out: PathBuf::from("out"),
            dump_graph: false,
            sweep: None,
        }
    }

    /// Applies a config file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), crate::AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::AppError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.apply_text(&text, base).map_err(|mut e| {
            e.file.get_or_insert_with(|| path.to_path_buf());
            crate::AppError::Config(e)
        })
    }

    /// Applies config text; relative paths resolve against `base`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), ConfigError> {
        let sections = parse_sections(text)?;
        let mut objects: Vec<SceneObject> = Vec::new();
        let mut orbit = OrbitFields::from(&self.scenario.trajectory);
        let mut occlusion = OcclusionFields::from(&self.scenario.noise.occlusion);
        let mut intrinsics = self.scenario.intrinsics;
        let mut use_demo_objects = true;
        for s in &sections {
            match s.name.as_str() {
                "scenario" => {
                    for e in &s.entries {
                        match e.key.as_str() {
                            "seed" => self.scenario.seed = integer(e)?,
                            "base" => self.scenario.base = pose(e)?,
                            "depth_points" => self.scenario.depth_points = integer(e)?,
                            "objects" => match e.value.as_str() {
                                "demo" => use_demo_objects = true,
                                "custom" => use_demo_objects = false,
                                v => {
                                    return Err(ConfigError::at(
                                        e.line,
                                        format!("`objects` expects demo or custom, got `{v}`"),
                                    ))
                                }
                            },
                            "n_views" => orbit.n_views = integer(e)?,
                            "radius" => orbit.radius = positive(e)?,
                            "height" => orbit.height = number(e)?,
                            "arc" => orbit.arc = number(e)?,
                            "target" => orbit.target = vector3(e)?,
                            "replay" => self.input = Input::Replay(base.join(&e.value)),
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                }
                "camera" => {
                    for e in &s.entries {
                        match e.key.as_str() {
                            "fx" => intrinsics.fx = positive(e)?,
                            "fy" => intrinsics.fy = positive(e)?,
                            "cx" => intrinsics.cx = positive(e)?,
                            "cy" => intrinsics.cy = positive(e)?,
                            "width" => intrinsics.width = integer(e)?,
                            "height" => intrinsics.height = integer(e)?,
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                    let k = intrinsics;
                    CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height)
                        .map_err(|err| ConfigError::at(s.line, err.to_string()))?;
                }
                "noise" => {
                    let n = &mut self.scenario.noise;
                    for e in &s.entries {
                        match e.key.as_str() {
                            "pixel_sigma" => n.pixel_sigma = non_negative(e)?,
                            "fk_translation_sigma" => n.fk_translation_sigma = non_negative(e)?,
                            "fk_rotation_sigma" => n.fk_rotation_sigma = non_negative(e)?,
                            "depth_sigma" => n.depth_sigma = non_negative(e)?,
                            "occlusion" => occlusion.constant = Some(fraction(e)?),
                            "occluded_fraction" => {
                                occlusion.constant = None;
                                occlusion.fraction = fraction(e)?;
                            }
                            "occlusion_split" => {
                                occlusion.constant = None;
                                occlusion.split = fraction(e)?;
                            }
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                }
                "uncertainty" => {
                    let u = &mut self.scenario.uncertainty;
                    for e in &s.entries {
                        match e.key.as_str() {
                            "floor" => u.floor = non_negative(e)?,
                            "slope" => u.slope = number(e)?,
                            "noise" => u.noise = non_negative(e)?,
                            "reference_sigma_o" => u.reference_sigma_o = non_negative(e)?,
                            "symmetric_margin" => u.symmetric_margin = non_negative(e)?,
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                }
                "pipeline" => {
                    let p = &mut self.pipeline;
                    for e in &s.entries {
                        match e.key.as_str() {
                            "sigma_o" => p.sigma_o = positive(e)?,
                            "sigma_icp" => p.sigma_icp = positive(e)?,
                            "use_icp" => p.use_icp = boolean(e)?,
                            "axis_offset" => p.axis_offset = positive(e)?,
                            "min_factor_sigma" => p.min_factor_sigma = positive(e)?,
                            "base_prior" => p.base_prior = pose(e)?,
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                }
                "solver" => {
                    let p = &mut self.pipeline;
                    for e in &s.entries {
                        match e.key.as_str() {
                            "max_iterations" => p.solver.max_iterations = integer(e)?,
                            "relative_cost_tolerance" => p.solver.relative_cost_tolerance = non_negative(e)?,
                            "gradient_tolerance" => p.solver.gradient_tolerance = non_negative(e)?,
                            "initial_lambda" => p.solver.initial_lambda = positive(e)?,
                            "huber" => {
                                p.solver.huber = if e.value == "none" { None } else { Some(positive(e)?) }
                            }
                            "camera_covariance" => p.camera_covariance = covariance(e)?,
                            "base_prior_covariance" => p.base_prior_covariance = covariance(e)?,
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                }
                "output" => {
                    for e in &s.entries {
                        match e.key.as_str() {
                            "dir" => self.out = base.join(&e.value),
                            "dump_graph" => self.dump_graph = boolean(e)?,
                            "sweep_sigma_o" => {
                                self.sweep = Some(parse_sweep(&e.value).map_err(|m| ConfigError::at(e.line, m))?)
                            }
                            _ => return Err(unknown(e, &s.name)),
                        }
                    }
                }
                "object" => {
                    use_demo_objects = false;
                    objects.push(object_record(s)?);
                }
                other => return Err(ConfigError::at(s.line, format!("unknown section [{other}]"))),
            }
        }
        if !use_demo_objects && objects.is_empty() {
            return Err(ConfigError::at(0, "`objects = custom` needs at least one [object] section"));
        }
        if !use_demo_objects {
            self.scenario.objects = objects;
        } else if self.scenario.objects.is_empty() {
            self.scenario.objects = demo_objects().map_err(|e| ConfigError::at(0, e.to_string()))?;
        }
        self.scenario.trajectory = orbit.into_trajectory();
        self.scenario.noise.occlusion = occlusion.into_model();
        self.scenario.intrinsics = intrinsics;
        Ok(())
    }
}

fn unknown(e: &Entry, section: &str) -> ConfigError {
    ConfigError::at(e.line, format!("unknown key `{}` in [{section}]", e.key))
}

fn covariance(e: &Entry) -> Result<[f64; 6], ConfigError> {
    let parts = e.value.split_whitespace().count();
    let v = if parts == 1 { vec![number(e)?; 6] } else { numbers(e, 6)? };
    if v.iter().any(|c| !(*c > 0.0)) {
        return Err(ConfigError::at(e.line, format!("`{}` entries must be positive", e.key)));
    }
    Ok([v[0], v[1], v[2], v[3], v[4], v[5]])
}

/// `LO:HI:STEP` with `0 <= LO <= HI` and `STEP > 0`.
pub fn parse_sweep(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || format!("sweep range must be LO:HI:STEP, got `{s}`");
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(lo >= 0.0 && hi >= lo && step > 0.0 && hi.is_finite()) {
        return Err(format!("sweep range needs 0 <= LO <= HI and STEP > 0, got `{s}`"));
    }
    Ok((lo, hi, step))
}

struct OrbitFields {
    radius: f64,
    height: f64,
    n_views: usize,
    arc: f64,
    target: Vector3<f64>,
    explicit: Option<Vec<Pose>>,
}

impl OrbitFields {
    fn from(t: &Trajectory) -> Self {
        match t {
            Trajectory::Orbit {
                radius,
                height,
                n_views,
                arc,
                target,
            } => Self {
                radius: *radius,
                height: *height,
                n_views: *n_views,
                arc: *arc,
                target: *target,
                explicit: None,
            },
            Trajectory::Explicit(p) => Self {
                radius: 0.45,
                height: 0.4,
                n_views: p.len(),
                arc: std::f64::consts::TAU,
                target: Vector3::zeros(),
                explicit: Some(p.clone()),
            },
        }
    }

    fn into_trajectory(self) -> Trajectory {
        match self.explicit {
            Some(p) => Trajectory::Explicit(p),
            None => Trajectory::Orbit {
                radius: self.radius,
                height: self.height,
                n_views: self.n_views,
                arc: self.arc,
                target: self.target,
            },
        }
    }
}

struct OcclusionFields {
    constant: Option<f64>,
    fraction: f64,
    split: f64,
}

impl OcclusionFields {
    fn from(m: &OcclusionModel) -> Self {
        let d = match NoiseConfig::default().occlusion {
            OcclusionModel::Random { occluded_fraction, split } => (occluded_fraction, split),
            _ => (0.0, 0.0),
        };
        match m {
            OcclusionModel::Constant(c) => Self {
                constant: Some(*c),
                fraction: d.0,
                split: d.1,
            },
            OcclusionModel::Random { occluded_fraction, split } => Self {
                constant: None,
                fraction: *occluded_fraction,
                split: *split,
            },
            OcclusionModel::Explicit(_) => Self {
                constant: None,
                fraction: d.0,
                split: d.1,
            },
        }
    }

    fn into_model(self) -> OcclusionModel {
        match self.constant {
            Some(c) => OcclusionModel::Constant(c),
            None => OcclusionModel::Random {
                occluded_fraction: self.fraction,
                split: self.split,
            },
        }
    }
}

/// One `[object]` record:
///
/// ```text
/// [object]
/// id = 5
/// shape = box            # box | cylinder | lblock
/// size = 0.1 0.06 0.04   # box: full extents
/// radius = 0.03          # cylinder
/// height = 0.1           # cylinder, lblock
/// length = 0.09          # lblock, with width and thickness
/// symmetry = discrete    # none | discrete | continuous
/// order = 4              # discrete
/// axis = 0 0 1
/// keypoint_scale = 0.05  # optional, default half the diameter
/// pose = 1 0 0 0 0.1 0 0.02
/// ```
fn object_record(s: &Section) -> Result<SceneObject, ConfigError> {
    let get = |key: &str| s.entries.iter().rev().find(|e| e.key == key);
    let need = |key: &str| get(key).ok_or_else(|| ConfigError::at(s.line, format!("[object] is missing `{key}`")));
    const KNOWN: [&str; 14] = [
        "id",
        "shape",
        "size",
        "radius",
        "height",
        "length",
        "width",
        "thickness",
        "symmetry",
        "order",
        "axis",
        "keypoint_scale",
        "pose",
        "surface_samples",
    ];
    if let Some(e) = s.entries.iter().find(|e| !KNOWN.contains(&e.key.as_str())) {
        return Err(unknown(e, "object"));
    }
    let id: u32 = integer(need("id")?)?;
    let shape_entry = need("shape")?;
    let shape = match shape_entry.value.as_str() {
        "box" => Shape::Box {
            size: vector3(need("size")?)?,
        },
        "cylinder" => Shape::Cylinder {
            radius: positive(need("radius")?)?,
            height: positive(need("height")?)?,
        },
        "lblock" => Shape::LBlock {
            length: positive(need("length")?)?,
            width: positive(need("width")?)?,
            height: positive(need("height")?)?,
            thickness: positive(need("thickness")?)?,
        },
        v => return Err(ConfigError::at(shape_entry.line, format!("unknown shape `{v}`"))),
    };
    let axis = match get("axis") {
        Some(e) => vector3(e)?,
        None => Vector3::z(),
    };
    let symmetry = match get("symmetry").map(|e| (e.value.as_str(), e.line)) {
        None | Some(("none", _)) => SymmetryKind::Asymmetric,
        Some(("discrete", _)) => SymmetryKind::Discrete {
            order: integer(need("order")?)?,
            axis,
        },
        Some(("continuous", _)) => SymmetryKind::Continuous { axis },
        Some((v, line)) => return Err(ConfigError::at(line, format!("unknown symmetry `{v}`"))),
    };
    let mut spec = ObjectSpec::new(id, shape, symmetry);
    if let Some(e) = get("keypoint_scale") {
        spec.keypoint_scale = Some(positive(e)?);
    }
    if let Some(e) = get("surface_samples") {
        spec.surface_samples = integer(e)?;
    }
    let pose = match get("pose") {
        Some(e) => pose(e)?,
        None => Pose::new(Rotation::identity(), Vector3::zeros()),
    };
    let model = spec.build().map_err(|e| ConfigError::at(s.line, format!("object {id}: {e}")))?;
    Ok(SceneObject { model, pose })
}
