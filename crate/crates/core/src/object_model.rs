//! Object descriptions: primitive keypoint layout, symmetry class, dominant
//! axis and surface samples.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::Vector3;
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::liegroups::Rotation;

/// Number of keypoints in the shared white region of every primitive axis.
pub const WHITE_KEYPOINTS: usize = 9;
/// Number of keypoints in the colored region of one primitive axis.
pub const COLORED_KEYPOINTS: usize = 5;
/// Keypoints per primitive axis image.
pub const KEYPOINTS_PER_AXIS: usize = WHITE_KEYPOINTS + COLORED_KEYPOINTS;

/// Discretization of continuous symmetries used for MSSD/MSPD.
pub const DEFAULT_DISCRETIZATION: usize = 360;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("keypoint scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("shape dimension must be positive, got {0}")]
    NonPositiveDimension(f64),
    #[error("discrete symmetry order must be at least 2, got {0}")]
    BadOrder(usize),
    #[error("symmetry axis must be non-zero")]
    ZeroAxis,
    #[error("continuous symmetry discretization must be at least 1")]
    BadDiscretization,
}

/// One of the three primitive rotation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn from_name(s: &str) -> Option<Axis> {
        match s {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        }
    }
}

/// 3D keypoints of the rotation-axis primitive in the object frame.
///
/// `white[0]` is the object center. The colored set of each axis is the
/// face center followed by the four face corners.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveLayout {
    pub scale: f64,
    pub white: [Vector3<f64>; WHITE_KEYPOINTS],
    pub colored: [[Vector3<f64>; COLORED_KEYPOINTS]; 3],
}

impl PrimitiveLayout {
    pub fn colored_for(&self, axis: Axis) -> &[Vector3<f64>; COLORED_KEYPOINTS] {
        &self.colored[axis.index()]
    }

    /// The 14 keypoints of one axis in prediction order: white then colored.
    pub fn axis_keypoints(&self, axis: Axis) -> [Vector3<f64>; KEYPOINTS_PER_AXIS] {
        let mut out = [Vector3::zeros(); KEYPOINTS_PER_AXIS];
        out[..WHITE_KEYPOINTS].copy_from_slice(&self.white);
        out[WHITE_KEYPOINTS..].copy_from_slice(self.colored_for(axis));
        out
    }
}

/// Cube of half-width `scale` centered at the origin: white keypoints are the
/// center plus the 8 corners, the colored keypoints of axis `i` are the center
/// of the face at `+i * scale` and the 4 corners of a half-size square on that
/// face. The inset keeps the colored corners distinct from the cube corners.
pub fn make_primitive_layout(scale: f64) -> Result<PrimitiveLayout, ModelError> {
    if !(scale > 0.0) {
        return Err(ModelError::NonPositiveScale(scale));
    }
    let s = scale;
    let mut white = [Vector3::zeros(); WHITE_KEYPOINTS];
    let mut k = 1;
    for &x in &[-s, s] {
        for &y in &[-s, s] {
            for &z in &[-s, s] {
                white[k] = Vector3::new(x, y, z);
                k += 1;
            }
        }
    }
    let mut colored = [[Vector3::zeros(); COLORED_KEYPOINTS]; 3];
    for axis in Axis::ALL {
        let i = axis.index();
        let (j, l) = ((i + 1) % 3, (i + 2) % 3);
        let face = &mut colored[i];
        face[0][i] = s;
        let mut c = 1;
        let h = 0.5 * s;
        for &a in &[-h, h] {
            for &b in &[-h, h] {
                face[c][i] = s;
                face[c][j] = a;
                face[c][l] = b;
                c += 1;
            }
        }
    }
    Ok(PrimitiveLayout {
        scale,
        white,
        colored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymmetryKind {
    Asymmetric,
    /// n-fold rotational symmetry about `axis`.
    Discrete { order: usize, axis: Vector3<f64> },
    /// Full rotational symmetry about `axis`.
    Continuous { axis: Vector3<f64> },
}

impl SymmetryKind {
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, SymmetryKind::Asymmetric)
    }

    pub fn axis(&self) -> Option<Vector3<f64>> {
        match self {
            SymmetryKind::Asymmetric => None,
            SymmetryKind::Discrete { axis, .. } | SymmetryKind::Continuous { axis } => Some(*axis),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match self {
            SymmetryKind::Asymmetric => Ok(()),
            SymmetryKind::Discrete { order, axis } => {
                if *order < 2 {
                    return Err(ModelError::BadOrder(*order));
                }
                if axis.norm() == 0.0 {
                    return Err(ModelError::ZeroAxis);
                }
                Ok(())
            }
            SymmetryKind::Continuous { axis } => {
                if axis.norm() == 0.0 {
                    return Err(ModelError::ZeroAxis);
                }
                Ok(())
            }
        }
    }
}

/// A symmetry class together with its (discretized) transform set.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySpec {
    pub kind: SymmetryKind,
    pub transforms: Vec<Rotation>,
}

impl SymmetrySpec {
    pub fn new(kind: SymmetryKind, continuous_discretization: usize) -> Result<Self, ModelError> {
        kind.validate()?;
        if continuous_discretization == 0 {
            return Err(ModelError::BadDiscretization);
        }
        let kind = match kind {
            SymmetryKind::Discrete { order, axis } => SymmetryKind::Discrete {
                order,
                axis: unit(axis),
            },
            SymmetryKind::Continuous { axis } => SymmetryKind::Continuous { axis: unit(axis) },
            k => k,
        };
        Ok(Self {
            kind,
            transforms: symmetry_transforms(&kind, continuous_discretization),
        })
    }

    pub fn asymmetric() -> Self {
        Self {
            kind: SymmetryKind::Asymmetric,
            transforms: alloc::vec![Rotation::identity()],
        }
    }
}

// idempotent, so a model rebuilt from its own normalized axis is identical
fn unit(v: Vector3<f64>) -> Vector3<f64> {
    if (v.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        v
    } else {
        v.normalize()
    }
}

/// Rotations mapping the object onto itself. The identity is always first.
pub fn symmetry_transforms(kind: &SymmetryKind, continuous_discretization: usize) -> Vec<Rotation> {
    let (n, axis) = match kind {
        SymmetryKind::Asymmetric => return alloc::vec![Rotation::identity()],
        SymmetryKind::Discrete { order, axis } => (*order, *axis),
        SymmetryKind::Continuous { axis } => (continuous_discretization.max(1), *axis),
    };
    (0..n)
        .map(|k| {
            if k == 0 {
                Rotation::identity()
            } else {
                Rotation::from_axis_angle(&axis, TAU * k as f64 / n as f64)
            }
        })
        .collect()
}

/// Analytic shape used to sample surface points. Dimensions in meters,
/// centered on the object origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Full extents along x, y, z.
    Box { size: Vector3<f64> },
    /// Axis along object z.
    Cylinder { radius: f64, height: f64 },
    /// A floor slab along x joined to an upright slab at its `-x` end.
    LBlock {
        length: f64,
        width: f64,
        height: f64,
        thickness: f64,
    },
}

impl Shape {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
            Shape::LBlock { .. } => "lblock",
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let dims: Vec<f64> = match self {
            Shape::Box { size } => size.iter().copied().collect(),
            Shape::Cylinder { radius, height } => alloc::vec![*radius, *height],
            Shape::LBlock {
                length,
                width,
                height,
                thickness,
            } => alloc::vec![*length, *width, *height, *thickness],
        };
        match dims.into_iter().find(|d| !(*d > 0.0)) {
            Some(d) => Err(ModelError::NonPositiveDimension(d)),
            None => Ok(()),
        }
    }

    /// Uniform sample on the outer surface.
    pub fn sample_surface<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        match *self {
            Shape::Box { size } => sample_box(rng, &(-size * 0.5), &(size * 0.5)),
            Shape::Cylinder { radius, height } => {
                let side = TAU * radius * height;
                let cap = core::f64::consts::PI * radius * radius;
                let u = rng.random::<f64>() * (side + 2.0 * cap);
                let angle = rng.random::<f64>() * TAU;
                if u < side {
                    let z = (rng.random::<f64>() - 0.5) * height;
                    Vector3::new(radius * angle.cos(), radius * angle.sin(), z)
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let z = if u < side + cap { 0.5 * height } else { -0.5 * height };
                    Vector3::new(r * angle.cos(), r * angle.sin(), z)
                }
            }
            Shape::LBlock {
                length,
                width,
                height,
                thickness,
            } => {
                let (floor_lo, floor_hi, wall_lo, wall_hi) = lblock_parts(length, width, height, thickness);
                let floor_area = box_area(&(floor_hi - floor_lo));
                let wall_area = box_area(&(wall_hi - wall_lo));
                loop {
                    let (p, other_lo, other_hi) =
                        if rng.random::<f64>() * (floor_area + wall_area) < floor_area {
                            (sample_box(rng, &floor_lo, &floor_hi), wall_lo, wall_hi)
                        } else {
                            (sample_box(rng, &wall_lo, &wall_hi), floor_lo, floor_hi)
                        };
                    let inside = (0..3).all(|i| p[i] > other_lo[i] && p[i] < other_hi[i]);
                    if !inside {
                        return p;
                    }
                }
            }
        }
    }
}

fn lblock_parts(
    length: f64,
    width: f64,
    height: f64,
    thickness: f64,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let floor_lo = Vector3::new(-0.5 * length, -0.5 * width, -0.5 * height);
    let floor_hi = Vector3::new(0.5 * length, 0.5 * width, -0.5 * height + thickness);
    let wall_lo = floor_lo;
    let wall_hi = Vector3::new(-0.5 * length + thickness, 0.5 * width, 0.5 * height);
    (floor_lo, floor_hi, wall_lo, wall_hi)
}

fn box_area(size: &Vector3<f64>) -> f64 {
    2.0 * (size.x * size.y + size.y * size.z + size.x * size.z)
}

fn sample_box<R: Rng + ?Sized>(rng: &mut R, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Vector3<f64> {
    let s = hi - lo;
    let areas = [s.y * s.z, s.x * s.z, s.x * s.y];
    let total = areas.iter().sum::<f64>();
    let mut u = rng.random::<f64>() * total;
    let mut fixed = 2;
    for (i, a) in areas.iter().enumerate() {
        if u < *a {
            fixed = i;
            break;
        }
        u -= a;
    }
    let mut p = Vector3::zeros();
    for i in 0..3 {
        p[i] = lo[i] + rng.random::<f64>() * s[i];
    }
    p[fixed] = if rng.random::<bool>() { hi[fixed] } else { lo[fixed] };
    p
}

/// Everything needed to build an [`ObjectModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub id: u32,
    pub shape: Shape,
    pub symmetry: SymmetryKind,
    /// Half-width of the keypoint cube. `None` uses half the diameter.
    pub keypoint_scale: Option<f64>,
    /// Minimum number of surface samples.
    pub surface_samples: usize,
    pub discretization: usize,
}

impl ObjectSpec {
    pub fn new(id: u32, shape: Shape, symmetry: SymmetryKind) -> Self {
        Self {
            id,
            shape,
            symmetry,
            keypoint_scale: None,
            surface_samples: 1500,
            discretization: DEFAULT_DISCRETIZATION,
        }
    }

    /// Samples the surface and derives layout and diameter. Sampling is seeded
    /// from the object id, so a spec always yields the same model.
    pub fn build(&self) -> Result<ObjectModel, ModelError> {
        self.shape.validate()?;
        let symmetry = SymmetrySpec::new(self.symmetry, self.discretization)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ u64::from(self.id));

        // Symmetric objects are sampled on a fundamental domain and replicated
        // through the transform set so the sample cloud is exactly invariant.
        let group = &symmetry.transforms;
        let base_count = self.surface_samples.max(1).div_ceil(group.len());
        let mut surface_points = Vec::with_capacity(base_count * group.len());
        let base: Vec<Vector3<f64>> = (0..base_count)
            .map(|_| self.shape.sample_surface(&mut rng))
            .collect();
        for s in group {
            surface_points.extend(base.iter().map(|p| s.rotate(p)));
        }

        let diameter = point_set_diameter(&surface_points);
        let scale = self.keypoint_scale.unwrap_or(0.5 * diameter);
        let layout = make_primitive_layout(scale)?;
        let dominant_axis = symmetry.kind.axis().unwrap_or_else(Vector3::z);
        Ok(ObjectModel {
            id: self.id,
            shape: self.shape,
            layout,
            symmetry,
            dominant_axis,
            surface_points,
            diameter,
        })
    }
}

/// Exact maximum pairwise distance.
pub fn point_set_diameter(points: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.max((p - q).norm_squared());
        }
    }
    best.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub id: u32,
    pub shape: Shape,
    pub layout: PrimitiveLayout,
    pub symmetry: SymmetrySpec,
    /// Unit vector in the object frame; object z unless a symmetry axis is set.
    pub dominant_axis: Vector3<f64>,
    pub surface_points: Vec<Vector3<f64>>,
    pub diameter: f64,
}

impl ObjectModel {
    pub fn is_symmetric(&self) -> bool {
        self.symmetry.kind.is_symmetric()
    }
}
