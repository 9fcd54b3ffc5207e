//! Rigid-transform algebra and the pixel-to-CT transformation chain.
//!
//! Conventions used throughout the crate:
//!
//! - lengths are millimeters, angles in [`EulerPose`] are degrees;
//! - Euler angles are intrinsic Z-Y-X: `R = Rz(a0) * Ry(a1) * Rx(a2)`;
//! - the image origin is the top-left pixel, `u` grows rightward and `v` downward.
//!   A pixel `(u, v)` sits at `(u * sx, v * sy, 0)` in the image-plane frame.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

const ORTHO_TOL: f64 = 1e-9;

/// Squared Euclidean distance. The single definition every distance test in the crate uses.
#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}
const DRIFT_TOL: f64 = 1e-12;

/// Element of SE(3): `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotation blocks that are not proper orthonormal.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::domain("non-finite transform entry"));
        }
        let drift = orthonormal_drift(&rotation);
        let det = rotation.determinant();
        if drift >= ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::domain(format!(
                "rotation block not in SO(3): |RtR - I|max = {drift:e}, det = {det}"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Pure rotation about the z axis by `deg` degrees.
    pub fn rotation_z(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation about an arbitrary axis (need not be normalized) by `deg` degrees.
    pub fn rotation_axis_angle(axis: Vector3<f64>, deg: f64) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            deg.to_radians(),
        );
        Self {
            rotation: *rot.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(Error::domain("bottom row of a rigid transform must be (0, 0, 0, 1)"));
        }
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        Self::from_parts(rotation, translation)
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self> {
        Self::from_matrix(&Matrix4::from_row_slice(values))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m[(0, 3)] = self.translation.x;
        m[(1, 3)] = self.translation.y;
        m[(2, 3)] = self.translation.z;
        m
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let rotation = self.rotation * other.rotation;
        let translation = self.rotation * other.translation + self.translation;
        let rotation = if orthonormal_drift(&rotation) > DRIFT_TOL {
            project_to_so3(&rotation)
        } else {
            rotation
        };
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn apply_to_points(&self, pts: &[Point3]) -> Vec<Point3> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// Geodesic rotation angle in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    pub fn is_valid(&self) -> bool {
        orthonormal_drift(&self.rotation) < ORTHO_TOL
            && (self.rotation.determinant() - 1.0).abs() <= ORTHO_TOL
    }
}

/// Free-function form of [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn apply_to_points(t: &RigidTransform, pts: &[Point3]) -> Vec<Point3> {
    t.apply_to_points(pts)
}

/// Max-norm of `RᵀR - I`.
pub fn orthonormal_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Nearest rotation matrix in the Frobenius sense (orthogonal polar factor).
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Rotation angles (degrees, intrinsic Z-Y-X) and translation (mm).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerPose {
    /// `[z, y, x]` angles in degrees.
    pub angles_deg: [f64; 3],
    pub translation_mm: [f64; 3],
}

impl EulerPose {
    pub const ZERO: EulerPose = EulerPose {
        angles_deg: [0.0; 3],
        translation_mm: [0.0; 3],
    };

    pub fn new(angles_deg: [f64; 3], translation_mm: [f64; 3]) -> Self {
        Self {
            angles_deg,
            translation_mm,
        }
    }

    /// Parameter vector `[az, ay, ax, dx, dy, dz]`.
    pub fn to_array(&self) -> [f64; 6] {
        let [a, b, c] = self.angles_deg;
        let [x, y, z] = self.translation_mm;
        [a, b, c, x, y, z]
    }

    pub fn from_array(p: &[f64]) -> Self {
        Self {
            angles_deg: [p[0], p[1], p[2]],
            translation_mm: [p[3], p[4], p[5]],
        }
    }

    /// Componentwise sum in parameter space.
    pub fn offset(&self, eps: &EulerPose) -> EulerPose {
        let a = self.to_array();
        let b = eps.to_array();
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = a[i] + b[i];
        }
        EulerPose::from_array(&out)
    }

    pub fn max_abs_angle(&self) -> f64 {
        self.angles_deg.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    pub fn max_abs_translation(&self) -> f64 {
        self.translation_mm.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    pub fn to_transform(&self) -> RigidTransform {
        let [az, ay, ax] = self.angles_deg.map(f64::to_radians);
        let (sz, cz) = az.sin_cos();
        let (sy, cy) = ay.sin_cos();
        let (sx, cx) = ax.sin_cos();
        let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
        RigidTransform::from_parts_unchecked(rz * ry * rx, Vector3::from(self.translation_mm))
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        let r = t.rotation();
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let (yaw, roll) = if pitch.cos() > 1e-12 {
            (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]))
        } else {
            // gimbal lock: fold everything into yaw
            ((-r[(0, 1)]).atan2(r[(1, 1)]), 0.0)
        };
        let tr = t.translation();
        Self {
            angles_deg: [yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees()],
            translation_mm: [tr.x, tr.y, tr.z],
        }
    }
}

/// Image raster geometry: pixel counts and physical pixel size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub width: u32,
    pub height: u32,
    /// mm per pixel along `u`.
    pub sx: f64,
    /// mm per pixel along `v`.
    pub sy: f64,
}

impl PixelGrid {
    pub fn new(width: u32, height: u32, sx: f64, sy: f64) -> Result<Self> {
        let grid = Self {
            width,
            height,
            sx,
            sy,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::domain(format!(
                "grid must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.sx > 0.0 && self.sy > 0.0) || !self.sx.is_finite() || !self.sy.is_finite() {
            return Err(Error::domain(format!(
                "pixel spacing must be positive, got ({}, {})",
                self.sx, self.sy
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// The scaling matrix taking pixel indices to image-plane millimeters.
    pub fn scale_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(self.sx, self.sy, 1.0, 1.0))
    }
}

/// Maps pixels of one frame into a target frame through a rigid chain.
///
/// Every pixel-to-3D conversion in the crate goes through [`FrameProjector::project`]
/// so that all code paths produce bit-identical points.
#[derive(Debug, Clone, Copy)]
pub struct FrameProjector {
    col_u: Vector3<f64>,
    col_v: Vector3<f64>,
    origin: Vector3<f64>,
}

impl FrameProjector {
    /// `chain` maps image-plane millimeters to the target frame.
    pub fn new(chain: &RigidTransform, grid: &PixelGrid) -> Self {
        let r = chain.rotation();
        Self {
            col_u: r.column(0) * grid.sx,
            col_v: r.column(1) * grid.sy,
            origin: *chain.translation(),
        }
    }

    #[inline]
    pub fn project(&self, u: f64, v: f64) -> Point3 {
        Vector3::new(
            self.col_u.x * u + self.col_v.x * v + self.origin.x,
            self.col_u.y * u + self.col_v.y * v + self.origin.y,
            self.col_u.z * u + self.col_v.z * v + self.origin.z,
        )
    }
}

/// `chain * T_S * (u, v, 0, 1)`, dehomogenized.
pub fn pixel_to_ct(u: f64, v: f64, grid: &PixelGrid, chain: &RigidTransform) -> Result<Point3> {
    if !grid.contains(u, v) {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside {}x{} grid",
            grid.width, grid.height
        )));
    }
    Ok(FrameProjector::new(chain, grid).project(u, v))
}

/// Timestamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPoseStream {
    samples: Vec<(f64, RigidTransform)>,
}

impl TimedPoseStream {
    pub fn new(samples: Vec<(f64, RigidTransform)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("pose stream must be non-empty"));
        }
        if let Some(w) = samples.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::domain(format!(
                "pose stream timestamps not strictly increasing at {} -> {}",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, RigidTransform)] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [(f64, RigidTransform)] {
        &mut self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pose at `t`: linear in translation, geodesic in rotation, no extrapolation.
    pub fn interpolate(&self, t: f64) -> Result<RigidTransform> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::OutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let hi = self.samples.partition_point(|(ts, _)| *ts < t);
        let (t1, p1) = &self.samples[hi];
        if *t1 == t {
            return Ok(*p1);
        }
        let (t0, p0) = &self.samples[hi - 1];
        let alpha = (t - t0) / (t1 - t0);
        Ok(interpolate_between(p0, p1, alpha))
    }
}

pub fn interpolate_pose(stream: &TimedPoseStream, t: f64) -> Result<RigidTransform> {
    stream.interpolate(t)
}

/// Blend two poses: `alpha = 0` gives `a`, `alpha = 1` gives `b`.
pub fn interpolate_between(a: &RigidTransform, b: &RigidTransform, alpha: f64) -> RigidTransform {
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*a.rotation()));
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*b.rotation()));
    let q = qa.slerp(&qb, alpha);
    let translation = a.translation() * (1.0 - alpha) + b.translation() * alpha;
    RigidTransform::from_parts_unchecked(*q.to_rotation_matrix().matrix(), translation)
}
