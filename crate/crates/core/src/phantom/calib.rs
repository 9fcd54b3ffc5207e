use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationObservation, FiducialRegistration, Landmark, ObservedFrame};
use crate::error::{Error, Result};
use crate::geometry::{EulerPose, PixelGrid, Point3, RigidTransform, TimedPoseStream};
use crate::phantom::scene::default_image_to_probe;

/// A synthetic probe calibration recording with known `T_US<-IP` and temporal offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationScenario {
    pub frames: usize,
    pub frame_interval_ms: f64,
    pub tracking_interval_ms: f64,
    pub delta_t_ms: f64,
    pub landmarks_per_frame: usize,
    pub jitter_translation_mm: f64,
    pub jitter_rotation_deg: f64,
    pub landmark_noise_px: f64,
    /// Probe held still relative to the phantom.
    pub stationary: bool,
    pub width: u32,
    pub height: u32,
    pub pixel_mm: f64,
    pub seed: u64,
}

impl Default for CalibrationScenario {
    fn default() -> Self {
        Self {
            frames: 200,
            frame_interval_ms: 50.0,
            tracking_interval_ms: 10.0,
            delta_t_ms: -33.4,
            landmarks_per_frame: 8,
            jitter_translation_mm: 0.0,
            jitter_rotation_deg: 0.0,
            landmark_noise_px: 0.0,
            stationary: false,
            width: 256,
            height: 256,
            pixel_mm: 0.15,
            seed: 0,
        }
    }
}

/// Returns the observation and the true `T_US<-IP`.
pub fn synthesize_calibration(sc: &CalibrationScenario, image_to_probe: &RigidTransform) -> Result<(CalibrationObservation, RigidTransform)> {
    let grid = PixelGrid::new(sc.width, sc.height, sc.pixel_mm, sc.pixel_mm)?;
    if sc.frames == 0 || sc.landmarks_per_frame == 0 {
        return Err(Error::domain("calibration scenario needs frames and landmarks"));
    }
    let first = 400.0;
    let last = first + (sc.frames - 1) as f64 * sc.frame_interval_ms;
    let n = ((last + sc.tracking_interval_ms) / sc.tracking_interval_ms).ceil() as usize + 1;
    let phantom_pose = EulerPose::new([30.0, 5.0, -10.0], [200.0, -100.0, -1000.0]).to_transform();
    let probe_at = |t: f64| -> RigidTransform {
        let s = if sc.stationary { 0.0 } else { t / 1000.0 };
        EulerPose::new(
            [
                30.0 + 10.0 * (TAU * 0.3 * s).sin(),
                8.0 * (TAU * 0.41 * s + 0.5).sin(),
                175.0 + 6.0 * (TAU * 0.27 * s + 1.0).sin(),
            ],
            [
                200.0 + 30.0 * (TAU * 0.5 * s).sin(),
                -100.0 + 20.0 * (TAU * 0.37 * s + 0.3).sin(),
                -950.0 + 10.0 * (TAU * 0.23 * s + 2.0).sin(),
            ],
        )
        .to_transform()
    };
    let truth_probe = TimedPoseStream::new((0..n).map(|k| {
        let t = k as f64 * sc.tracking_interval_ms;
        (t, probe_at(t))
    }).collect())?;

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let px_noise = Normal::new(0.0, sc.landmark_noise_px).map_err(|e| Error::domain(e.to_string()))?;
    let mut frames = Vec::with_capacity(sc.frames);
    for f in 0..sc.frames {
        let t = first + f as f64 * sc.frame_interval_ms;
        let tracker_from_image = truth_probe.interpolate(t + sc.delta_t_ms)?.compose(image_to_probe);
        let phantom_from_image = phantom_pose.inverse().compose(&tracker_from_image);
        let landmarks = (0..sc.landmarks_per_frame)
            .map(|_| {
                let u = rng.random_range(0.0..sc.width as f64 - 1.0);
                let v = rng.random_range(0.0..sc.height as f64 - 1.0);
                let p = phantom_from_image.apply(&Point3::new(u * grid.sx, v * grid.sy, 0.0));
                let (nu, nv) = (px_noise.sample(&mut rng), px_noise.sample(&mut rng));
                Landmark {
                    pixel: [u + nu, v + nv],
                    phantom_point: [p.x, p.y, p.z],
                }
            })
            .collect();
        frames.push(ObservedFrame {
            timestamp_ms: t,
            landmarks,
        });
    }

    let rot = Normal::new(0.0, sc.jitter_rotation_deg).map_err(|e| Error::domain(e.to_string()))?;
    let trans = Normal::new(0.0, sc.jitter_translation_mm).map_err(|e| Error::domain(e.to_string()))?;
    let jitter = |rng: &mut ChaCha8Rng| {
        if sc.jitter_rotation_deg == 0.0 && sc.jitter_translation_mm == 0.0 {
            return RigidTransform::identity();
        }
        EulerPose::new(
            [rot.sample(rng), rot.sample(rng), rot.sample(rng)],
            [trans.sample(rng), trans.sample(rng), trans.sample(rng)],
        )
        .to_transform()
    };
    let mut probe = Vec::with_capacity(n);
    let mut phantom = Vec::with_capacity(n);
    for (t, p) in truth_probe.samples() {
        probe.push((*t, p.compose(&jitter(&mut rng))));
        phantom.push((*t, phantom_pose.compose(&jitter(&mut rng))));
    }
    Ok((
        CalibrationObservation {
            grid,
            frames,
            probe: TimedPoseStream::new(probe)?,
            phantom: TimedPoseStream::new(phantom)?,
        },
        *image_to_probe,
    ))
}

/// Default calibration recording for generated sweeps: same probe geometry as [`default_image_to_probe`].
pub fn default_calibration_recording(seed: u64, delta_t_ms: f64) -> Result<CalibrationObservation> {
    let sc = CalibrationScenario {
        seed,
        delta_t_ms,
        ..CalibrationScenario::default()
    };
    Ok(synthesize_calibration(&sc, &default_image_to_probe())?.0)
}

/// Specimen-marker spheres as they would be found in CT, plus a rough initial guess.
pub fn specimen_registration(ct_from_specimen: &RigidTransform, seed: u64) -> FiducialRegistration {
    let source = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(48.0, 0.0, 2.0),
        Point3::new(0.0, 36.0, -3.0),
        Point3::new(30.0, 55.0, 5.0),
        Point3::new(-20.0, 20.0, 12.0),
    ];
    let mut target = ct_from_specimen.apply_to_points(&source);
    target.rotate_left(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = EulerPose::new(
        [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
    );
    FiducialRegistration {
        source,
        target,
        init: ct_from_specimen.compose(&off.to_transform()),
    }
}
