//! Text file formats: poses, measurement files and graph dumps.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value reads back bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ambipose_core::ambiguity::AxisPrediction;
use ambipose_core::graph::{BasePrior, CameraPoseFactor, FactorGraph, ObjectPoseFactor, StateVector};
use ambipose_core::liegroups::Pose;
use ambipose_core::object_model::{Axis, ObjectModel, ObjectSpec, Shape, SymmetryKind, DEFAULT_DISCRETIZATION, KEYPOINTS_PER_AXIS};
use ambipose_core::pose_init::CameraIntrinsics;
use ambipose_core::sim::{FrameMeasurement, ObjectObservation};
use nalgebra::{Vector2, Vector3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// `qw qx qy qz tx ty tz`, or a row-major 3x4 `[R | t]`.
pub fn pose_from_numbers(v: &[f64]) -> Option<Pose> {
    match v.len() {
        7 => Pose::from_array7(&[v[0], v[1], v[2], v[3], v[4], v[5], v[6]]),
        12 => {
            let mut m = [0.0; 12];
            m.copy_from_slice(v);
            m.iter().all(|x| x.is_finite()).then(|| Pose::from_matrix3x4(&m))
        }
        _ => None,
    }
}

pub fn write_pose(out: &mut String, pose: &Pose) {
    for (i, v) in pose.to_array7().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
}

pub fn format_pose(pose: &Pose) -> String {
    let mut s = String::new();
    write_pose(&mut s, pose);
    s
}

fn push_numbers(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(out, " {v}");
    }
}

/// Whitespace-separated tokens of one line with typed accessors.
struct Tokens<'a> {
    line: usize,
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        Self {
            line,
            items: text.split_whitespace().collect(),
            pos: 0,
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str, ParseError> {
        let w = self
            .items
            .get(self.pos)
            .ok_or_else(|| err(self.line, format!("missing {what}")))?;
        self.pos += 1;
        Ok(w)
    }

    fn expect(&mut self, keyword: &str) -> Result<(), ParseError> {
        let w = self.word(keyword)?;
        if w != keyword {
            return Err(err(self.line, format!("expected `{keyword}`, found `{w}`")));
        }
        Ok(())
    }

    fn float(&mut self, what: &str) -> Result<f64, ParseError> {
        let w = self.word(what)?;
        w.parse().map_err(|_| err(self.line, format!("{what}: `{w}` is not a number")))
    }

    fn int<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let w = self.word(what)?;
        w.parse().map_err(|_| err(self.line, format!("{what}: `{w}` is not an integer")))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>, ParseError> {
        (0..n).map(|_| self.float(what)).collect()
    }

    fn pose(&mut self) -> Result<Pose, ParseError> {
        let v = self.floats(7, "pose")?;
        pose_from_numbers(&v).ok_or_else(|| err(self.line, "invalid pose quaternion"))
    }

    fn vector3(&mut self, what: &str) -> Result<Vector3<f64>, ParseError> {
        let v = self.floats(3, what)?;
        Ok(Vector3::new(v[0], v[1], v[2]))
    }

    fn end(&self) -> Result<(), ParseError> {
        match self.items.get(self.pos) {
            None => Ok(()),
            Some(w) => Err(err(self.line, format!("unexpected trailing `{w}`"))),
        }
    }
}

/// Non-empty, non-comment lines with their 1-based numbers.
struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn next(&mut self, expecting: &str) -> Result<Tokens<'a>, ParseError> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok(Tokens::new(n, l))
            }
            None => Err(err(self.last + 1, format!("unexpected end of file, expected {expecting}"))),
        }
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.inner.peek().and_then(|(_, l)| l.split_whitespace().next())
    }
}

const MEASUREMENT_MAGIC: &str = "AMBIPOSE-MEASUREMENTS 1";

/// A scenario as seen by the pipeline, plus the ground truth needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub intrinsics: CameraIntrinsics,
    pub models: Vec<ObjectModel>,
    pub frames: Vec<FrameMeasurement>,
}

fn model_spec(m: &ObjectModel) -> ObjectSpec {
    let discretization = match m.symmetry.kind {
        SymmetryKind::Continuous { .. } => m.symmetry.transforms.len(),
        _ => DEFAULT_DISCRETIZATION,
    };
    ObjectSpec {
        id: m.id,
        shape: m.shape,
        symmetry: m.symmetry.kind,
        keypoint_scale: Some(m.layout.scale),
        surface_samples: m.surface_points.len(),
        discretization,
    }
}

fn write_model(out: &mut String, m: &ObjectModel) {
    let spec = model_spec(m);
    let _ = write!(out, "MODEL {} SHAPE {}", spec.id, spec.shape.kind_name());
    match spec.shape {
        Shape::Box { size } => push_numbers(out, size.iter().copied()),
        Shape::Cylinder { radius, height } => push_numbers(out, [radius, height]),
        Shape::LBlock {
            length,
            width,
            height,
            thickness,
        } => push_numbers(out, [length, width, height, thickness]),
    }
    out.push_str(" SYMMETRY ");
    match spec.symmetry {
        SymmetryKind::Asymmetric => out.push_str("none"),
        SymmetryKind::Discrete { order, axis } => {
            let _ = write!(out, "discrete {order}");
            push_numbers(out, axis.iter().copied());
        }
        SymmetryKind::Continuous { axis } => {
            out.push_str("continuous");
            push_numbers(out, axis.iter().copied());
        }
    }
    let _ = writeln!(
        out,
        " SCALE {} SAMPLES {} DISCRETIZATION {}",
        spec.keypoint_scale.unwrap_or(0.0),
        spec.surface_samples,
        spec.discretization
    );
}

fn read_model(mut t: Tokens) -> Result<ObjectModel, ParseError> {
    t.expect("MODEL")?;
    let id: u32 = t.int("object id")?;
    t.expect("SHAPE")?;
    let shape = match t.word("shape kind")? {
        "box" => Shape::Box {
            size: t.vector3("box size")?,
        },
        "cylinder" => {
            let v = t.floats(2, "cylinder dimensions")?;
            Shape::Cylinder {
                radius: v[0],
                height: v[1],
            }
        }
        "lblock" => {
            let v = t.floats(4, "L-block dimensions")?;
            Shape::LBlock {
                length: v[0],
                width: v[1],
                height: v[2],
                thickness: v[3],
            }
        }
        w => return Err(err(t.line, format!("unknown shape `{w}`"))),
    };
    t.expect("SYMMETRY")?;
    let symmetry = match t.word("symmetry kind")? {
        "none" => SymmetryKind::Asymmetric,
        "discrete" => SymmetryKind::Discrete {
            order: t.int("symmetry order")?,
            axis: t.vector3("symmetry axis")?,
        },
        "continuous" => SymmetryKind::Continuous {
            axis: t.vector3("symmetry axis")?,
        },
        w => return Err(err(t.line, format!("unknown symmetry `{w}`"))),
    };
    t.expect("SCALE")?;
    let scale = t.float("keypoint scale")?;
    t.expect("SAMPLES")?;
    let samples = t.int("surface samples")?;
    t.expect("DISCRETIZATION")?;
    let discretization = t.int("discretization")?;
    t.end()?;
    let spec = ObjectSpec {
        id,
        shape,
        symmetry,
        keypoint_scale: Some(scale),
        surface_samples: samples,
        discretization,
    };
    spec.build().map_err(|e| err(t.line, format!("object {id}: {e}")))
}

/// Serializes a measurement set.
///
/// ```text
/// AMBIPOSE-MEASUREMENTS 1
/// INTRINSICS fx fy cx cy width height
/// MODEL id SHAPE kind dims.. SYMMETRY kind [order] [axis] SCALE s SAMPLES n DISCRETIZATION n
/// FRAME t
/// FK 7 numbers
/// GT_CAMERA 7 numbers
/// VIEW id occlusion in_view
/// GT id 7 numbers
/// OBJ id AXIS a SIGMA s u1 v1 .. u14 v14
/// DEPTH id n x1 y1 z1 ..
/// END
/// ```
pub fn write_measurements(set: &MeasurementSet) -> String {
    let mut out = String::new();
    out.push_str(MEASUREMENT_MAGIC);
    out.push('\n');
    let k = &set.intrinsics;
    let _ = writeln!(out, "INTRINSICS {} {} {} {} {} {}", k.fx, k.fy, k.cx, k.cy, k.width, k.height);
    for m in &set.models {
        write_model(&mut out, m);
    }
    for f in &set.frames {
        let _ = writeln!(out, "FRAME {}", f.t);
        out.push_str("FK ");
        write_pose(&mut out, &f.fk);
        out.push_str("\nGT_CAMERA ");
        write_pose(&mut out, &f.gt_camera);
        out.push('\n');
        for o in &f.objects {
            let _ = writeln!(out, "VIEW {} {} {}", o.object, o.occlusion, u8::from(o.in_view));
            let _ = write!(out, "GT {} ", o.object);
            write_pose(&mut out, &o.gt_camera_from_object);
            out.push('\n');
            for p in &o.predictions {
                let _ = write!(out, "OBJ {} AXIS {} SIGMA {}", o.object, p.axis.name(), p.sigma);
                push_numbers(&mut out, p.keypoints.iter().flat_map(|k| [k.x, k.y]));
                out.push('\n');
            }
            let _ = write!(out, "DEPTH {} {}", o.object, o.depth.len());
            push_numbers(&mut out, o.depth.iter().flat_map(|p| [p.x, p.y, p.z]));
            out.push('\n');
        }
    }
    out.push_str("END\n");
    out
}

pub fn read_measurements(text: &str) -> Result<MeasurementSet, ParseError> {
    let mut lines = Lines::new(text);
    let header = lines.next("header")?;
    if header.items.join(" ") != MEASUREMENT_MAGIC {
        return Err(err(header.line, format!("expected header `{MEASUREMENT_MAGIC}`")));
    }
    let mut t = lines.next("INTRINSICS")?;
    t.expect("INTRINSICS")?;
    let v = t.floats(4, "intrinsics")?;
    let (w, h) = (t.int("image width")?, t.int("image height")?);
    t.end()?;
    let intrinsics = CameraIntrinsics::new(v[0], v[1], v[2], v[3], w, h).map_err(|e| err(t.line, e.to_string()))?;

    let mut models = Vec::new();
    while lines.peek_keyword() == Some("MODEL") {
        let m = read_model(lines.next("MODEL")?)?;
        if models.iter().any(|o: &ObjectModel| o.id == m.id) {
            return Err(err(lines.last, format!("duplicate model {}", m.id)));
        }
        models.push(m);
    }

    let mut frames = Vec::new();
    loop {
        let mut t = lines.next("FRAME or END")?;
        match t.word("keyword")? {
            "END" => {
                t.end()?;
                break;
            }
            "FRAME" => {}
            w => return Err(err(t.line, format!("expected FRAME or END, found `{w}`"))),
        }
        let index: usize = t.int("frame index")?;
        t.end()?;
        if index != frames.len() {
            return Err(err(t.line, format!("frame {index} out of order, expected {}", frames.len())));
        }
        let mut fk = lines.next("FK")?;
        fk.expect("FK")?;
        let fk_pose = fk.pose()?;
        fk.end()?;
        let mut gc = lines.next("GT_CAMERA")?;
        gc.expect("GT_CAMERA")?;
        let gt_camera = gc.pose()?;
        gc.end()?;
        let mut objects = Vec::new();
        while lines.peek_keyword() == Some("VIEW") {
            objects.push(read_observation(&mut lines, &models)?);
        }
        frames.push(FrameMeasurement {
            t: index,
            fk: fk_pose,
            gt_camera,
            objects,
        });
    }
    if let Ok(extra) = lines.next("") {
        return Err(err(extra.line, "content after END"));
    }
    Ok(MeasurementSet {
        intrinsics,
        models,
        frames,
    })
}

fn read_observation(lines: &mut Lines, models: &[ObjectModel]) -> Result<ObjectObservation, ParseError> {
    let mut t = lines.next("VIEW")?;
    t.expect("VIEW")?;
    let object: u32 = t.int("object id")?;
    if !models.iter().any(|m| m.id == object) {
        return Err(err(t.line, format!("object {object} has no MODEL line")));
    }
    let occlusion = t.float("occlusion")?;
    let in_view = match t.word("in-view flag")? {
        "0" => false,
        "1" => true,
        w => return Err(err(t.line, format!("in-view flag must be 0 or 1, found `{w}`"))),
    };
    t.end()?;
    let same_object = |t: &mut Tokens| -> Result<(), ParseError> {
        let id: u32 = t.int("object id")?;
        if id != object {
            return Err(err(t.line, format!("object {id} inside the record of object {object}")));
        }
        Ok(())
    };

    let mut g = lines.next("GT")?;
    g.expect("GT")?;
    same_object(&mut g)?;
    let gt = g.pose()?;
    g.end()?;

    let mut predictions = Vec::new();
    while lines.peek_keyword() == Some("OBJ") {
        let mut o = lines.next("OBJ")?;
        o.expect("OBJ")?;
        same_object(&mut o)?;
        o.expect("AXIS")?;
        let name = o.word("axis")?;
        let axis = Axis::from_name(name).ok_or_else(|| err(o.line, format!("unknown axis `{name}`")))?;
        o.expect("SIGMA")?;
        let sigma = o.float("sigma")?;
        let v = o.floats(2 * KEYPOINTS_PER_AXIS, "keypoint coordinate")?;
        o.end()?;
        let keypoints = core::array::from_fn(|i| Vector2::new(v[2 * i], v[2 * i + 1]));
        predictions.push(AxisPrediction { axis, keypoints, sigma });
    }

    let mut d = lines.next("DEPTH")?;
    d.expect("DEPTH")?;
    same_object(&mut d)?;
    let n: usize = d.int("point count")?;
    let v = d.floats(3 * n, "depth coordinate")?;
    d.end()?;
    let depth = v.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
    Ok(ObjectObservation {
        object,
        occlusion,
        in_view,
        predictions,
        depth,
        gt_camera_from_object: gt,
    })
}

const GRAPH_MAGIC: &str = "AMBIPOSE-GRAPH 1";

/// Serializes a factor graph, state and factors.
///
/// ```text
/// AMBIPOSE-GRAPH 1
/// AXIS_OFFSET d
/// PRIOR 7 numbers 6 variances        (or NO_PRIOR)
/// STATE BASE 7 numbers
/// STATE CAMERA t 7 numbers
/// STATE OBJECT id 7 numbers
/// AXIS id x y z
/// CAMERA_FACTOR t 7 numbers 6 variances
/// OBJECT_FACTOR t id asym|sym 7 numbers sigma
/// ```
pub fn write_graph(g: &FactorGraph) -> String {
    let mut out = String::new();
    out.push_str(GRAPH_MAGIC);
    let _ = write!(out, "\nAXIS_OFFSET {}\n", g.axis_offset);
    match &g.base_prior {
        Some(p) => {
            out.push_str("PRIOR ");
            write_pose(&mut out, &p.pose);
            push_numbers(&mut out, p.covariance);
            out.push('\n');
        }
        None => out.push_str("NO_PRIOR\n"),
    }
    out.push_str("STATE BASE ");
    write_pose(&mut out, &g.state.base);
    out.push('\n');
    for (t, c) in g.state.cameras.iter().enumerate() {
        let _ = write!(out, "STATE CAMERA {t} ");
        write_pose(&mut out, c);
        out.push('\n');
    }
    for (id, o) in &g.state.objects {
        let _ = write!(out, "STATE OBJECT {id} ");
        write_pose(&mut out, o);
        out.push('\n');
    }
    for (id, a) in &g.dominant_axes {
        let _ = write!(out, "AXIS {id}");
        push_numbers(&mut out, a.iter().copied());
        out.push('\n');
    }
    for f in &g.camera_factors {
        let _ = write!(out, "CAMERA_FACTOR {} ", f.t);
        write_pose(&mut out, &f.measurement);
        push_numbers(&mut out, f.covariance);
        out.push('\n');
    }
    for f in &g.object_factors {
        let _ = write!(out, "OBJECT_FACTOR {} {} {} ", f.t, f.object, if f.symmetric { "sym" } else { "asym" });
        write_pose(&mut out, &f.measurement);
        let _ = writeln!(out, " {}", f.sigma_norm);
    }
    out
}

pub fn read_graph(text: &str) -> Result<FactorGraph, ParseError> {
    let mut lines = Lines::new(text);
    let header = lines.next("header")?;
    if header.items.join(" ") != GRAPH_MAGIC {
        return Err(err(header.line, format!("expected header `{GRAPH_MAGIC}`")));
    }
    let mut t = lines.next("AXIS_OFFSET")?;
    t.expect("AXIS_OFFSET")?;
    let axis_offset = t.float("axis offset")?;
    t.end()?;

    let mut t = lines.next("PRIOR or NO_PRIOR")?;
    let base_prior = match t.word("keyword")? {
        "NO_PRIOR" => None,
        "PRIOR" => {
            let pose = t.pose()?;
            let c = t.floats(6, "covariance")?;
            Some(BasePrior {
                pose,
                covariance: [c[0], c[1], c[2], c[3], c[4], c[5]],
            })
        }
        w => return Err(err(t.line, format!("expected PRIOR or NO_PRIOR, found `{w}`"))),
    };
    t.end()?;

    let mut base = None;
    let mut cameras = Vec::new();
    let mut objects = BTreeMap::new();
    let mut dominant_axes = BTreeMap::new();
    let mut camera_factors = Vec::new();
    let mut object_factors = Vec::new();
    while lines.peek_keyword().is_some() {
        let mut t = lines.next("record")?;
        match t.word("keyword")? {
            "STATE" => match t.word("state kind")? {
                "BASE" => base = Some(t.pose()?),
                "CAMERA" => {
                    let i: usize = t.int("camera index")?;
                    if i != cameras.len() {
                        return Err(err(t.line, format!("camera {i} out of order")));
                    }
                    cameras.push(t.pose()?);
                }
                "OBJECT" => {
                    let id: u32 = t.int("object id")?;
                    objects.insert(id, t.pose()?);
                }
                w => return Err(err(t.line, format!("unknown state kind `{w}`"))),
            },
            "AXIS" => {
                let id: u32 = t.int("object id")?;
                dominant_axes.insert(id, t.vector3("axis")?);
            }
            "CAMERA_FACTOR" => {
                let ti: usize = t.int("time")?;
                let measurement = t.pose()?;
                let c = t.floats(6, "covariance")?;
                camera_factors.push(CameraPoseFactor {
                    t: ti,
                    measurement,
                    covariance: [c[0], c[1], c[2], c[3], c[4], c[5]],
                });
            }
            "OBJECT_FACTOR" => {
                let ti: usize = t.int("time")?;
                let object: u32 = t.int("object id")?;
                let symmetric = match t.word("factor kind")? {
                    "sym" => true,
                    "asym" => false,
                    w => return Err(err(t.line, format!("factor kind must be sym or asym, found `{w}`"))),
                };
                let measurement = t.pose()?;
                let sigma_norm = t.float("sigma")?;
                object_factors.push(ObjectPoseFactor {
                    t: ti,
                    object,
                    measurement,
                    sigma_norm,
                    symmetric,
                });
            }
            w => return Err(err(t.line, format!("unknown record `{w}`"))),
        }
        t.end()?;
    }
    let base = base.ok_or_else(|| err(lines.last + 1, "missing STATE BASE"))?;
    Ok(FactorGraph {
        state: StateVector { base, cameras, objects },
        base_prior,
        camera_factors,
        object_factors,
        dominant_axes,
        axis_offset,
    })
}
