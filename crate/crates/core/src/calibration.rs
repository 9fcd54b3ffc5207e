//! Fiducial registration and joint spatial-temporal probe calibration.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, Point3, RigidTransform, TimedPoseStream};
use crate::kdtree::KdTree;

/// A phantom landmark seen in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    /// `(u, v)` in pixels.
    pub pixel: [f64; 2],
    /// Known position in the phantom frame, mm.
    pub phantom_point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedFrame {
    pub timestamp_ms: f64,
    pub landmarks: Vec<Landmark>,
}

/// Inputs of a probe calibration recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationObservation {
    pub grid: PixelGrid,
    pub frames: Vec<ObservedFrame>,
    /// `T_OT<-US`.
    pub probe: TimedPoseStream,
    /// `T_OT<-PH`, the calibration phantom's marker.
    pub phantom: TimedPoseStream,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub image_to_probe: RigidTransform,
    pub delta_t_ms: f64,
    /// RMS landmark localization error, mm.
    pub localization_error_mm: f64,
}

/// Temporal offsets `start + k * step` for `k = 0..n` with `start + n * step = end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetGrid {
    pub start_ms: f64,
    pub end_ms: f64,
    pub step_ms: f64,
}

impl Default for OffsetGrid {
    fn default() -> Self {
        Self {
            start_ms: -300.0,
            end_ms: 0.0,
            step_ms: 0.1,
        }
    }
}

impl OffsetGrid {
    pub fn len(&self) -> usize {
        ((self.end_ms - self.start_ms) / self.step_ms).round().max(0.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample `k`, rounded to 1e-9 ms so that decimal steps come out clean.
    pub fn offset(&self, k: usize) -> f64 {
        let raw = self.start_ms + k as f64 * self.step_ms;
        (raw * 1e9).round() / 1e9
    }
}

impl CalibrationObservation {
    pub fn landmark_count(&self) -> usize {
        self.frames.iter().map(|f| f.landmarks.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.landmark_count();
        if n < 6 {
            return Err(Error::Degenerate(format!("{n} landmark correspondences, at least 6 required")));
        }
        Ok(())
    }

    /// Checks that both streams cover every frame time shifted by any offset in `grid`.
    pub fn check_coverage(&self, grid: &OffsetGrid) -> Result<()> {
        let lo = grid.start_ms.min(grid.end_ms);
        let hi = grid.start_ms.max(grid.end_ms);
        for f in &self.frames {
            for t in [f.timestamp_ms + lo, f.timestamp_ms + hi] {
                for s in [&self.probe, &self.phantom] {
                    if t < s.start() || t > s.end() {
                        return Err(Error::OutOfRange {
                            t,
                            start: s.start(),
                            end: s.end(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Image-plane points and their probe-frame targets at offset `delta_t`.
    fn correspondences(&self, delta_t: f64) -> Result<(Vec<Point3>, Vec<Point3>)> {
        let mut src = Vec::with_capacity(self.landmark_count());
        let mut dst = Vec::with_capacity(self.landmark_count());
        for f in &self.frames {
            if f.landmarks.is_empty() {
                continue;
            }
            let t = f.timestamp_ms + delta_t;
            let probe_from_phantom = self.probe.interpolate(t)?.inverse().compose(&self.phantom.interpolate(t)?);
            for l in &f.landmarks {
                src.push(Point3::new(l.pixel[0] * self.grid.sx, l.pixel[1] * self.grid.sy, 0.0));
                dst.push(probe_from_phantom.apply(&Point3::from(l.phantom_point)));
            }
        }
        Ok((src, dst))
    }
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch).
///
/// Planar inputs are fine; the source must not be collinear.
pub fn fit_rigid(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::domain("correspondence lists differ in length"));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("{} correspondences, at least 3 required", src.len())));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s - cs;
        h += a * (d - cd).transpose();
        spread += a * a.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let mut ev: Vec<f64> = sv.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate("source points are collinear or coincident".into()));
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    let r = v_t.transpose() * fix * u.transpose();
    let r = crate::geometry::project_to_so3(&r);
    let t = cd - r * cs;
    RigidTransform::from_parts(r, t)
}

fn rms(t: &RigidTransform, src: &[Point3], dst: &[Point3]) -> f64 {
    let ss: f64 = src.iter().zip(dst).map(|(s, d)| crate::geometry::dist2(&t.apply(s), d)).sum();
    (ss / src.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub rms_mm: f64,
    /// RMS nearest-neighbor distance before the first and after every accepted iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Point-to-point ICP from `source` into the `target` cloud.
///
/// Stops when the RMS improvement drops below `tol_mm`, after `max_iter` iterations,
/// or when an update would not lower the RMS (the previous estimate is kept).
pub fn register_fiducials_icp(
    source: &[Point3],
    target: &[Point3],
    init: &RigidTransform,
    max_iter: usize,
    tol_mm: f64,
) -> Result<IcpResult> {
    if target.is_empty() {
        return Err(Error::domain("ICP target cloud is empty"));
    }
    check_non_collinear(source)?;
    let tree = KdTree::build(target.to_vec());
    let matches = |t: &RigidTransform| -> (Vec<Point3>, f64) {
        let mut m = Vec::with_capacity(source.len());
        let mut ss = 0.0;
        for s in source {
            let nb = tree.nearest(&t.apply(s)).expect("non-empty tree");
            ss += nb.dist2;
            m.push(target[nb.index]);
        }
        (m, (ss / source.len() as f64).sqrt())
    };
    let mut current = *init;
    let (mut matched, mut err) = matches(&current);
    let mut history = vec![err];
    let mut iterations = 0;
    while iterations < max_iter {
        let next = fit_rigid(source, &matched)?;
        let (next_matched, next_err) = matches(&next);
        if next_err > err {
            break;
        }
        iterations += 1;
        let improvement = err - next_err;
        current = next;
        matched = next_matched;
        err = next_err;
        history.push(err);
        if improvement < tol_mm {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        rms_mm: err,
        history,
        iterations,
    })
}

fn check_non_collinear(pts: &[Point3]) -> Result<()> {
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!("{} source points, at least 3 non-collinear required", pts.len())));
    }
    let scale = pts.iter().map(|p| (p - pts[0]).norm()).fold(0.0, f64::max);
    let far = pts.iter().max_by(|a, b| (*a - pts[0]).norm().total_cmp(&(*b - pts[0]).norm())).unwrap();
    let axis = far - pts[0];
    let area = pts.iter().map(|p| axis.cross(&(p - pts[0])).norm()).fold(0.0, f64::max);
    if scale == 0.0 || area <= 1e-9 * scale * scale {
        return Err(Error::Degenerate("source points are collinear".into()));
    }
    Ok(())
}

/// Specimen-marker spheres located in CT, registered to the marker's own geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FiducialRegistration {
    /// Sphere centers in the marker frame.
    pub source: Vec<Point3>,
    /// Sphere centers found in CT, any order.
    pub target: Vec<Point3>,
    pub init: RigidTransform,
}

impl FiducialRegistration {
    pub fn solve(&self) -> Result<IcpResult> {
        register_fiducials_icp(&self.source, &self.target, &self.init, 100, 1e-10)
    }
}

/// Closed-form `T_US<-IP` for a fixed temporal offset, with its RMS residual.
pub fn spatial_calibrate(obs: &CalibrationObservation, delta_t_ms: f64) -> Result<(RigidTransform, f64)> {
    obs.validate()?;
    let (src, dst) = obs.correspondences(delta_t_ms)?;
    let t = fit_rigid(&src, &dst)?;
    let e = rms(&t, &src, &dst);
    Ok((t, e))
}

/// Exhaustive search over `grid` offsets; returns the offset with the smallest RMS.
/// Ties go to the offset closest to zero.
pub fn joint_calibrate(obs: &CalibrationObservation, grid: &OffsetGrid) -> Result<CalibrationResult> {
    obs.validate()?;
    if grid.is_empty() {
        return Err(Error::domain("empty temporal offset grid"));
    }
    obs.check_coverage(grid)?;
    let fits: Vec<(f64, RigidTransform, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let dt = grid.offset(k);
            spatial_calibrate(obs, dt).map(|(t, e)| (dt, t, e))
        })
        .collect::<Result<_>>()?;
    let lo = fits.iter().map(|f| f.2).fold(f64::INFINITY, f64::min);
    let hi = fits.iter().map(|f| f.2).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-6 {
        return Err(Error::UnidentifiableTemporalOffset { spread_mm: hi - lo });
    }
    let mut best = &fits[0];
    for f in &fits[1..] {
        if f.2 < best.2 || (f.2 == best.2 && f.0.abs() < best.0.abs()) {
            best = f;
        }
    }
    Ok(CalibrationResult {
        image_to_probe: best.1,
        delta_t_ms: best.0,
        localization_error_mm: best.2,
    })
}
