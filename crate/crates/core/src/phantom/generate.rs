use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationObservation, FiducialRegistration};
use crate::error::Result;
use crate::labeler::LabelMask;
use crate::mesh::BoneMesh;
use crate::phantom::calib::{default_calibration_recording, specimen_registration};
use crate::phantom::mesh_gen::{make_bone_mesh, MeshKind};
use crate::phantom::perturb::perturb_tracking;
use crate::phantom::scene::{synthesize_sweep, IntensityParams, NoiseParams, SweepGroundTruth, SweepLayout, SyntheticScene};
use crate::sweep::{Calibration, SweepBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub mesh: MeshKind,
    pub length_mm: f64,
    pub radius_mm: f64,
    pub bump_mm: f64,
    pub layout: SweepLayout,
    pub intensity: IntensityParams,
    pub noise: NoiseParams,
    /// Per-frame tracking error, uniform in `[-a, a]` degrees per Euler angle.
    pub perturb_angle_deg: f64,
    /// Per-frame tracking error, uniform in `[-t, t]` mm per axis.
    pub perturb_trans_mm: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            mesh: MeshKind::BumpyTube,
            length_mm: 100.0,
            radius_mm: 10.0,
            bump_mm: 1.0,
            layout: SweepLayout::default(),
            intensity: IntensityParams::default(),
            noise: NoiseParams::default(),
            perturb_angle_deg: 0.0,
            perturb_trans_mm: 0.0,
        }
    }
}

/// A complete synthetic dataset: sweep, mesh, truth and the recordings needed to calibrate.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub mesh: BoneMesh,
    pub bundle: SweepBundle,
    pub truth: SweepGroundTruth,
    /// What the tracking system would report, possibly biased.
    pub recorded_calibration: Calibration,
    pub calib_obs: CalibrationObservation,
    pub registration: FiducialRegistration,
}

impl Phantom {
    /// True first-surface contour of every frame as a mask.
    pub fn truth_masks(&self) -> Vec<LabelMask> {
        let g = self.bundle.grid;
        self.truth
            .frames
            .iter()
            .map(|f| {
                let mut m = LabelMask::empty(g.width, g.height);
                for &(u, v) in &f.contour {
                    m.set(u, v, true);
                }
                m
            })
            .collect()
    }
}

pub fn generate_phantom(cfg: &PhantomConfig, seed: u64) -> Result<Phantom> {
    cfg.intensity.validate()?;
    let mesh = make_bone_mesh(cfg.mesh, cfg.length_mm, cfg.radius_mm, cfg.bump_mm, seed)?;
    let scene = SyntheticScene::standard(mesh, &cfg.layout, cfg.intensity, cfg.noise, seed)?;
    let (bundle, truth) = synthesize_sweep(&scene)?;
    let (bundle, truth) = perturb_tracking(&bundle, &truth, cfg.perturb_angle_deg, cfg.perturb_trans_mm, seed.wrapping_add(1))?;
    let calib_obs = default_calibration_recording(seed.wrapping_add(2), cfg.layout.delta_t_ms)?;
    let registration = specimen_registration(&truth.calibration.ct_from_specimen, seed.wrapping_add(3));
    Ok(Phantom {
        mesh: scene.mesh.clone(),
        recorded_calibration: scene.recorded_calibration(),
        bundle,
        truth,
        calib_obs,
        registration,
    })
}
