use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EulerPose, FrameProjector, PixelGrid, Point3, RigidTransform, TimedPoseStream};
use crate::mesh::BoneMesh;
use crate::sweep::{Calibration, Frame, GrayImage, SweepBundle};

/// B-mode-like intensity model.
///
/// Along each scan line the first surface crossing produces an echo band
/// `peak * cos(alpha)^falloff * exp(-(d / echo_sigma)^2 / 2)` over
/// `|d| <= echo_halfwidth`, where `d` is the row offset from the contour row in mm.
/// Rows above the band show tissue that fades with depth; rows below it are
/// shadowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityParams {
    pub peak: f64,
    pub falloff_exponent: f64,
    /// Shadow level as a fraction of the tissue brightness at the surface.
    pub shadow_attenuation: f64,
    pub shadow_decay_mm: f64,
    pub tissue_level: f64,
    pub tissue_decay_mm: f64,
    pub echo_sigma_mm: f64,
    pub echo_halfwidth_mm: f64,
    /// Variance of the unit-mean multiplicative speckle factor; 0 disables speckle.
    pub speckle_variance: f64,
}

impl Default for IntensityParams {
    fn default() -> Self {
        Self {
            peak: 220.0,
            falloff_exponent: 2.0,
            shadow_attenuation: 0.15,
            shadow_decay_mm: 10.0,
            tissue_level: 60.0,
            tissue_decay_mm: 25.0,
            echo_sigma_mm: 0.2,
            echo_halfwidth_mm: 0.45,
            speckle_variance: 0.0,
        }
    }
}

impl IntensityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.peak,
            self.falloff_exponent,
            self.shadow_attenuation,
            self.shadow_decay_mm,
            self.tissue_level,
            self.tissue_decay_mm,
            self.echo_sigma_mm,
            self.echo_halfwidth_mm,
            self.speckle_variance,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain("intensity parameters must be finite and non-negative"));
        }
        if self.peak > 255.0 {
            return Err(Error::domain(format!("peak brightness {} exceeds 255", self.peak)));
        }
        if self.tissue_level > self.peak || self.shadow_attenuation > 1.0 {
            return Err(Error::domain("tissue level must not exceed peak and shadow attenuation must be <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Per-axis Gaussian std of tracker translation jitter, mm.
    pub jitter_translation_mm: f64,
    /// Per-axis Gaussian std of tracker rotation jitter, degrees.
    pub jitter_rotation_deg: f64,
    /// Error folded into the calibration written alongside the sweep.
    pub calibration_bias: EulerPose,
}

/// Everything needed to render a synthetic sweep.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub mesh: BoneMesh,
    /// True `T_CT<-US` sampled at the tracking rate.
    pub trajectory: TimedPoseStream,
    pub frame_times_ms: Vec<f64>,
    pub grid: PixelGrid,
    pub calibration: Calibration,
    /// `T_OT<-SM`, static.
    pub specimen_in_tracker: RigidTransform,
    pub fiducials: Vec<Point3>,
    pub intensity: IntensityParams,
    pub noise: NoiseParams,
    pub seed: u64,
}

/// Parameters of the default sweep generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepLayout {
    pub frames: usize,
    pub frame_interval_ms: f64,
    pub tracking_interval_ms: f64,
    /// Must be a multiple of the tracking interval so that every frame hits a tracker sample.
    pub delta_t_ms: f64,
    pub width: u32,
    pub height: u32,
    pub pixel_mm: f64,
    /// Axial range covered by the sweep, mm along the bone.
    pub x_start_mm: f64,
    pub x_end_mm: f64,
    /// Depth of the image top above the bone axis, mm.
    pub top_height_mm: f64,
}

impl Default for SweepLayout {
    fn default() -> Self {
        Self {
            frames: 200,
            frame_interval_ms: 50.0,
            tracking_interval_ms: 10.0,
            delta_t_ms: -30.0,
            width: 256,
            height: 256,
            pixel_mm: 0.15,
            x_start_mm: 10.0,
            x_end_mm: 90.0,
            top_height_mm: 16.0,
        }
    }
}

/// Default probe-marker fiducial constellation, mm in the probe-marker frame.
pub fn default_fiducials() -> Vec<Point3> {
    vec![
        Point3::new(25.0, 0.0, 12.0),
        Point3::new(-25.0, 4.0, 12.0),
        Point3::new(2.0, 30.0, 14.0),
        Point3::new(8.0, -32.0, 10.0),
    ]
}

/// `T_US<-IP` used by generated scenes: image 80 mm below the marker, slightly skewed.
pub fn default_image_to_probe() -> RigidTransform {
    let nominal = RigidTransform::rotation_axis_angle(Vector3::x(), -90.0);
    let skew = EulerPose::new([2.0, -1.5, 3.0], [-19.2, 3.0, -80.0]).to_transform();
    skew.compose(&nominal)
}

impl SyntheticScene {
    /// Probe sweeping along the bone axis with small lateral, depth and angular wobble.
    pub fn standard(mesh: BoneMesh, layout: &SweepLayout, intensity: IntensityParams, noise: NoiseParams, seed: u64) -> Result<Self> {
        let grid = PixelGrid::new(layout.width, layout.height, layout.pixel_mm, layout.pixel_mm)?;
        if layout.frames == 0 {
            return Err(Error::domain("sweep needs at least one frame"));
        }
        let image_to_probe = default_image_to_probe();
        let calibration = Calibration {
            image_to_probe,
            delta_t_ms: layout.delta_t_ms,
            rms_mm: 0.0,
            ct_from_specimen: EulerPose::new([5.0, -3.0, 2.0], [120.0, -40.0, 30.0]).to_transform(),
        };
        let specimen_in_tracker = EulerPose::new([-20.0, 10.0, 5.0], [300.0, 150.0, -900.0]).to_transform();

        let margin = 300.0 + layout.tracking_interval_ms;
        let first_frame = (margin / layout.tracking_interval_ms).ceil() * layout.tracking_interval_ms;
        let frame_times_ms: Vec<f64> = (0..layout.frames)
            .map(|f| first_frame + f as f64 * layout.frame_interval_ms)
            .collect();
        let t_last = frame_times_ms[layout.frames - 1] + layout.tracking_interval_ms;
        let n_samples = (t_last / layout.tracking_interval_ms).ceil() as usize + 1;
        let span = (t_last - first_frame).max(1.0);

        let width_mm = layout.width as f64 * layout.pixel_mm;
        let base = RigidTransform::from_parts_unchecked(
            nalgebra::Matrix3::new(0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
            Vector3::zeros(),
        );
        let center_shift = RigidTransform::from_translation(-width_mm / 2.0, 0.0, 0.0);
        let image_to_probe_inv = image_to_probe.inverse();
        let samples = (0..n_samples)
            .map(|k| {
                let t = k as f64 * layout.tracking_interval_ms;
                let s = ((t - first_frame) / span).clamp(0.0, 1.0);
                let ts = t / 1000.0;
                let x = layout.x_start_mm + (layout.x_end_mm - layout.x_start_mm) * s;
                let y = 1.5 * (TAU * 0.13 * ts).sin();
                let z = layout.top_height_mm + 0.8 * (TAU * 0.21 * ts + 0.7).sin();
                let wobble = EulerPose::new(
                    [
                        3.0 * (TAU * 0.17 * ts + 1.1).sin(),
                        2.5 * (TAU * 0.11 * ts).sin(),
                        4.0 * (TAU * 0.23 * ts + 2.0).sin(),
                    ],
                    [x, y, z],
                )
                .to_transform();
                let ct_from_image = wobble.compose(&base).compose(&center_shift);
                (t, ct_from_image.compose(&image_to_probe_inv))
            })
            .collect();
        Ok(Self {
            mesh,
            trajectory: TimedPoseStream::new(samples)?,
            frame_times_ms,
            grid,
            calibration,
            specimen_in_tracker,
            fiducials: default_fiducials(),
            intensity,
            noise,
            seed,
        })
    }

    /// Calibration as an imperfect system would report it (truth composed with the bias).
    pub fn recorded_calibration(&self) -> Calibration {
        Calibration {
            image_to_probe: self.calibration.image_to_probe.compose(&self.noise.calibration_bias.to_transform()),
            ..self.calibration
        }
    }

    pub fn ct_from_tracker(&self) -> RigidTransform {
        self.calibration.ct_from_specimen.compose(&self.specimen_in_tracker.inverse())
    }
}

/// Ground truth of one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub frame_id: u32,
    /// True `T_CT<-US` at `timestamp + delta_t`.
    pub ct_from_probe: RigidTransform,
    /// Perturbation added to the recorded pose in Euler parameter space.
    pub injected: EulerPose,
    /// First-surface pixel per scan line, `(u, v)`.
    pub contour: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGroundTruth {
    pub frames: Vec<FrameTruth>,
    pub calibration: Calibration,
}

/// First surface crossing of one scan line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanlineHit {
    pub u: u32,
    pub row: u32,
    pub depth_mm: f64,
    pub alpha_deg: f64,
}

/// Casts every column of the image plane `ct_from_image` against the mesh.
pub fn trace_scanlines(mesh: &BoneMesh, ct_from_image: &RigidTransform, grid: &PixelGrid) -> Vec<ScanlineHit> {
    let projector = FrameProjector::new(ct_from_image, grid);
    let rot = ct_from_image.rotation();
    let u_axis: Vector3<f64> = rot.column(0).into();
    let v_axis: Vector3<f64> = rot.column(1).into();
    let normal: Vector3<f64> = rot.column(2).into();
    let origin = *ct_from_image.translation();

    let candidates: Vec<usize> = (0..mesh.triangles().len())
        .filter(|&t| {
            let pts = mesh.triangle_points(t);
            let d = pts.map(|p| normal.dot(&(p - origin)));
            d.iter().cloned().fold(f64::INFINITY, f64::min) <= 0.0 && d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= 0.0
        })
        .collect();

    let depth_max = grid.height as f64 * grid.sy;
    let mut hits = Vec::new();
    for u in 0..grid.width {
        let start = projector.project(u as f64, 0.0);
        let Some(hit) = mesh.first_hit(&start, &v_axis, depth_max, &candidates) else {
            continue;
        };
        let row = (hit.distance / grid.sy).round();
        if row >= grid.height as f64 {
            continue;
        }
        let n = mesh.interpolated_normal(hit.triangle, hit.bary);
        hits.push(ScanlineHit {
            u,
            row: row as u32,
            depth_mm: hit.distance,
            alpha_deg: incidence_angle_deg(&n, &u_axis, &v_axis),
        });
    }
    hits
}

/// Angle between the in-plane projection of `normal` and the scan-line direction,
/// folded to `[0, 90]` degrees. A normal perpendicular to the image plane gives 90.
pub fn incidence_angle_deg(normal: &Vector3<f64>, u_axis: &Vector3<f64>, v_axis: &Vector3<f64>) -> f64 {
    let nu = normal.dot(u_axis);
    let nv = normal.dot(v_axis);
    let len = (nu * nu + nv * nv).sqrt();
    if len < 1e-12 {
        return 90.0;
    }
    (nv.abs() / len).clamp(0.0, 1.0).acos().to_degrees()
}

/// Pre-speckle intensities (row-major) for one frame.
pub fn render_clean(hits: &[ScanlineHit], grid: &PixelGrid, p: &IntensityParams) -> Vec<f64> {
    let (w, h) = (grid.width as usize, grid.height as usize);
    let tissue = |v: f64| p.tissue_level * (-v * grid.sy / p.tissue_decay_mm.max(1e-12)).exp();
    let band = (p.echo_halfwidth_mm / grid.sy + 1e-9).floor() as i64;
    let mut out = vec![0.0; w * h];
    for u in 0..w {
        for v in 0..h {
            out[v * w + u] = tissue(v as f64);
        }
    }
    for hit in hits {
        let u = hit.u as usize;
        let r0 = hit.row as i64;
        let echo_peak = p.peak * hit.alpha_deg.to_radians().cos().max(0.0).powf(p.falloff_exponent);
        let surface_tissue = tissue(r0 as f64);
        for v in 0..h as i64 {
            let d = v - r0;
            let shadow = || {
                p.shadow_attenuation * surface_tissue * (-((v - r0) as f64) * grid.sy / p.shadow_decay_mm.max(1e-12)).exp()
            };
            let value = if d < -band {
                continue;
            } else if d <= band {
                let z = d as f64 * grid.sy / p.echo_sigma_mm.max(1e-12);
                let echo = echo_peak * (-0.5 * z * z).exp();
                let under = if d <= 0 { tissue(v as f64) } else { shadow() };
                echo.max(under)
            } else {
                shadow()
            };
            out[v as usize * w + u] = value;
        }
    }
    out
}

/// Multiplies by a unit-mean speckle factor and quantizes to 8 bits.
pub fn apply_speckle(clean: &[f64], variance: f64, rng: &mut impl Rng) -> Vec<u8> {
    // standardized Rayleigh(1): mean sqrt(pi/2), variance (4 - pi)/2
    let mean = (PI / 2.0).sqrt();
    let sd = ((4.0 - PI) / 2.0).sqrt();
    let scale = variance.sqrt();
    clean
        .iter()
        .map(|&x| {
            let value = if scale > 0.0 {
                let uniform: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let rayleigh = (-2.0 * uniform.ln()).sqrt();
                x * (1.0 + scale * (rayleigh - mean) / sd).max(0.0)
            } else {
                x
            };
            value.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Renders the scene into a tracked sweep and its exact ground truth.
pub fn synthesize_sweep(scene: &SyntheticScene) -> Result<(SweepBundle, SweepGroundTruth)> {
    scene.intensity.validate()?;
    scene.grid.validate()?;
    let calib = scene.calibration;

    let rendered: Vec<(GrayImage, FrameTruth)> = scene
        .frame_times_ms
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let ct_from_probe = scene.trajectory.interpolate(t + calib.delta_t_ms)?;
            let ct_from_image = ct_from_probe.compose(&calib.image_to_probe);
            let hits = trace_scanlines(&scene.mesh, &ct_from_image, &scene.grid);
            let clean = render_clean(&hits, &scene.grid, &scene.intensity);
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ i as u64);
            let data = apply_speckle(&clean, scene.intensity.speckle_variance, &mut rng);
            let image = GrayImage {
                width: scene.grid.width,
                height: scene.grid.height,
                data,
            };
            let truth = FrameTruth {
                frame_id: i as u32,
                ct_from_probe,
                injected: EulerPose::ZERO,
                contour: hits.iter().map(|h| (h.u, h.row)).collect(),
            };
            Ok((image, truth))
        })
        .collect::<Result<_>>()?;

    if rendered.iter().all(|(_, t)| t.contour.is_empty()) {
        return Err(Error::EmptySweep);
    }

    let ct_from_tracker = scene.ct_from_tracker();
    let tracker_from_ct = ct_from_tracker.inverse();
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(scene.seed.rotate_left(32) ^ 0x7472_6163_6b65_7221);
    let mut jitter = || jitter_pose(&mut jitter_rng, &scene.noise);
    let mut probe = Vec::with_capacity(scene.trajectory.len());
    let mut specimen = Vec::with_capacity(scene.trajectory.len());
    for (t, ct_from_probe) in scene.trajectory.samples() {
        probe.push((*t, tracker_from_ct.compose(ct_from_probe).compose(&jitter())));
        specimen.push((*t, scene.specimen_in_tracker.compose(&jitter())));
    }

    let mut frames = Vec::with_capacity(rendered.len());
    let mut truths = Vec::with_capacity(rendered.len());
    for (i, (image, truth)) in rendered.into_iter().enumerate() {
        frames.push(Frame {
            id: i as u32,
            timestamp_ms: scene.frame_times_ms[i],
            image,
        });
        truths.push(truth);
    }
    let bundle = SweepBundle {
        grid: scene.grid,
        fiducials: scene.fiducials.clone(),
        frames,
        probe: TimedPoseStream::new(probe)?,
        specimen: TimedPoseStream::new(specimen)?,
    };
    Ok((
        bundle,
        SweepGroundTruth {
            frames: truths,
            calibration: calib,
        },
    ))
}

fn jitter_pose(rng: &mut ChaCha8Rng, noise: &NoiseParams) -> RigidTransform {
    if noise.jitter_rotation_deg == 0.0 && noise.jitter_translation_mm == 0.0 {
        return RigidTransform::identity();
    }
    let rot = Normal::new(0.0, noise.jitter_rotation_deg).expect("finite std");
    let trans = Normal::new(0.0, noise.jitter_translation_mm).expect("finite std");
    let a = [rot.sample(rng), rot.sample(rng), rot.sample(rng)];
    let d = [trans.sample(rng), trans.sample(rng), trans.sample(rng)];
    EulerPose::new(a, d).to_transform()
}
