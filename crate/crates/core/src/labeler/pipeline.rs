use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::de::DeParams;
use crate::error::{Error, Result};
use crate::geometry::EulerPose;
use crate::labeler::index::MeshIndex;
use crate::labeler::intersect::{compute_intersection, incidence_filter, shadow_filter, IntersectionSet};
use crate::labeler::mask::{rasterize_label, LabelMask, LabelProvenance};
use crate::labeler::objective::FrameContext;
use crate::labeler::refine::{contour_distance_mm, refine_frame, PerturbationResult, DEFAULT_VALIDATION_MM};
use crate::sweep::{Calibration, FrameStatus, SweepBundle};

pub const LAMBDA_CANDIDATES: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub gamma_mm: f64,
    pub lambda: f64,
    /// Half-width of the perturbation box, degrees and mm.
    pub bound: f64,
    pub de: DeParams,
    pub validation_threshold_mm: f64,
    pub shadow_margin_px: u32,
    pub alpha_max_deg: f64,
    pub sample_density: f64,
    pub sample_seed: u64,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            gamma_mm: 0.3,
            lambda: 1.0,
            bound: 1.0,
            de: DeParams::default(),
            validation_threshold_mm: DEFAULT_VALIDATION_MM,
            shadow_margin_px: 3,
            alpha_max_deg: 85.0,
            sample_density: 25.0,
            sample_seed: 0,
            seed: 0,
            workers: 0,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_mm > 0.0) || !(self.bound >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::domain("gamma must be positive, bound and lambda non-negative"));
        }
        if !(self.sample_density > 0.0) {
            return Err(Error::domain("sample density must be positive"));
        }
        self.de.validate()
    }

    pub fn frame_seed(&self, frame_id: u32) -> u64 {
        self.seed ^ frame_id as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub frames: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
    /// Rejected share of the frames that were refined.
    pub discard_fraction: f64,
    pub mean_accepted_correction_mm: Option<f64>,
}

impl LabelSummary {
    pub fn from_results(results: &[PerturbationResult]) -> Self {
        let count = |s| results.iter().filter(|r| r.status == s).count();
        let (accepted, rejected, skipped) = (count(FrameStatus::Accepted), count(FrameStatus::Rejected), count(FrameStatus::Skipped));
        let refined = accepted + rejected;
        let corr: Vec<f64> = results
            .iter()
            .filter(|r| r.status == FrameStatus::Accepted)
            .map(|r| r.fiducial_correction_mm)
            .collect();
        Self {
            frames: results.len(),
            accepted,
            rejected,
            skipped,
            discard_fraction: if refined == 0 { 0.0 } else { rejected as f64 / refined as f64 },
            mean_accepted_correction_mm: (!corr.is_empty()).then(|| corr.iter().sum::<f64>() / corr.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepLabels {
    pub masks: Vec<LabelMask>,
    pub results: Vec<PerturbationResult>,
    pub summary: LabelSummary,
}

/// Intersection under `eps` with the shadow and incidence filters applied.
pub fn final_label(ctx: &FrameContext<'_>, index: &MeshIndex, eps: &EulerPose, cfg: &LabelConfig) -> IntersectionSet {
    let raw = compute_intersection(ctx.frame_id, ctx.grid(), &ctx.candidate_chain(eps), index, cfg.gamma_mm);
    incidence_filter(&shadow_filter(&raw, cfg.shadow_margin_px), cfg.alpha_max_deg)
}

fn label_frame(bundle: &SweepBundle, f: usize, index: &MeshIndex, calib: &Calibration, cfg: &LabelConfig) -> (LabelMask, PerturbationResult) {
    let frame = &bundle.frames[f];
    let seed = cfg.frame_seed(frame.id);
    let empty = LabelMask::empty(bundle.grid.width, bundle.grid.height);
    let pose = match bundle.frame_pose(frame, calib) {
        Ok(p) => p,
        Err(e) => return (empty, PerturbationResult::skipped(frame.id, seed, e.to_string())),
    };
    let ctx = FrameContext::new(
        frame.id,
        &frame.image,
        bundle.grid,
        &pose,
        calib.image_to_probe,
        bundle.fiducials.clone(),
        index,
        cfg.gamma_mm,
        cfg.bound,
    );
    let result = match refine_frame(&ctx, cfg.lambda, &cfg.de, seed, cfg.validation_threshold_mm) {
        Ok(r) => r,
        Err(e) => PerturbationResult::skipped(frame.id, seed, e.to_string()),
    };
    if result.status != FrameStatus::Accepted {
        return (empty, result);
    }
    let mut mask = rasterize_label(&final_label(&ctx, index, &result.epsilon, cfg), &bundle.grid);
    mask.provenance = LabelProvenance {
        refined: true,
        filters: vec!["shadow".into(), "incidence".into()],
    };
    (mask, result)
}

fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::domain(format!("worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Labels every frame; per-frame failures become skipped records.
pub fn label_sweep(bundle: &SweepBundle, index: &MeshIndex, calib: &Calibration, cfg: &LabelConfig) -> Result<SweepLabels> {
    cfg.validate()?;
    bundle.validate()?;
    let per_frame: Vec<(LabelMask, PerturbationResult)> = with_workers(cfg.workers, || {
        (0..bundle.frames.len())
            .into_par_iter()
            .map(|f| label_frame(bundle, f, index, calib, cfg))
            .collect()
    })?;
    let (masks, results): (Vec<_>, Vec<_>) = per_frame.into_iter().unzip();
    let summary = LabelSummary::from_results(&results);
    Ok(SweepLabels {
        masks,
        results,
        summary,
    })
}

/// Filtered labels of the recorded poses, without refinement; empty where the pose is unavailable.
pub fn initial_labels(bundle: &SweepBundle, index: &MeshIndex, calib: &Calibration, cfg: &LabelConfig) -> Result<Vec<LabelMask>> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        bundle
            .frames
            .par_iter()
            .map(|frame| match bundle.frame_pose(frame, calib) {
                Ok(pose) => {
                    let ctx = FrameContext::new(
                        frame.id,
                        &frame.image,
                        bundle.grid,
                        &pose,
                        calib.image_to_probe,
                        bundle.fiducials.clone(),
                        index,
                        cfg.gamma_mm,
                        cfg.bound,
                    );
                    let mut m = rasterize_label(&final_label(&ctx, index, &EulerPose::ZERO, cfg), &bundle.grid);
                    m.provenance.filters = vec!["shadow".into(), "incidence".into()];
                    m
                }
                Err(_) => LabelMask::empty(bundle.grid.width, bundle.grid.height),
            })
            .collect()
    })
}

/// A frame with its true contour, for choosing `lambda`.
pub struct LambdaTrial<'a> {
    pub ctx: FrameContext<'a>,
    pub contour: Vec<(u32, u32)>,
}

/// The candidate with the smallest mean post-refinement contour distance; ties go to the smaller value.
pub fn select_lambda(trials: &[LambdaTrial<'_>], candidates: &[f64], index: &MeshIndex, cfg: &LabelConfig) -> Result<f64> {
    if trials.is_empty() || candidates.is_empty() {
        return Err(Error::InsufficientData("lambda selection needs frames and candidates".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }
    let mut best = (f64::INFINITY, sorted[0]);
    for &lambda in &sorted {
        let dists: Vec<f64> = trials
            .par_iter()
            .map(|t| {
                let seed = cfg.frame_seed(t.ctx.frame_id);
                let r = refine_frame(&t.ctx, lambda, &cfg.de, seed, cfg.validation_threshold_mm)?;
                let label = final_label(&t.ctx, index, &r.epsilon, cfg).coords();
                Ok(contour_distance_mm(&label, &t.contour, t.ctx.grid()).unwrap_or(f64::INFINITY))
            })
            .collect::<Result<_>>()?;
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        if mean < best.0 {
            best = (mean, lambda);
        }
    }
    Ok(best.1)
}
