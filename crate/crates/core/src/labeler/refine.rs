use serde::{Deserialize, Serialize};

use crate::de::{maximize, DeParams};
use crate::error::Result;
use crate::geometry::{EulerPose, PixelGrid};
use crate::labeler::objective::{FrameContext, Scratch};
use crate::sweep::FrameStatus;

/// Outcome of refining one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub frame_id: u32,
    pub status: FrameStatus,
    pub epsilon: EulerPose,
    pub objective: f64,
    pub intensity_term: f64,
    pub regularizer_term: f64,
    pub fiducial_correction_mm: f64,
    pub accepted: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl PerturbationResult {
    pub fn skipped(frame_id: u32, seed: u64, reason: impl Into<String>) -> Self {
        Self {
            frame_id,
            status: FrameStatus::Skipped,
            epsilon: EulerPose::ZERO,
            objective: 0.0,
            intensity_term: 0.0,
            regularizer_term: 0.0,
            fiducial_correction_mm: 0.0,
            accepted: false,
            seed,
            reason: Some(reason.into()),
        }
    }
}

pub const DEFAULT_VALIDATION_MM: f64 = 1.0;

/// Accepted when the mean fiducial correction does not exceed `threshold_mm`.
pub fn validate(result: &PerturbationResult, threshold_mm: f64) -> bool {
    result.fiducial_correction_mm <= threshold_mm
}

/// Maximizes the frame objective over the `[-bound, bound]^6` box.
pub fn refine_frame(ctx: &FrameContext<'_>, lambda: f64, de: &DeParams, seed: u64, threshold_mm: f64) -> Result<PerturbationResult> {
    let start = ctx.evaluate(&EulerPose::ZERO, lambda);
    if start.pixels == 0 {
        return Ok(PerturbationResult::skipped(ctx.frame_id, seed, "empty initial intersection"));
    }
    let b = ctx.bound();
    let mut scratch = Scratch::default();
    let out = maximize(
        |x| ctx.evaluate_with(&EulerPose::from_array(x), lambda, &mut scratch).value,
        &[-b; 6],
        &[b; 6],
        de,
        seed,
        Some(&[0.0; 6]),
    )?;
    let eps = EulerPose::from_array(&out.best);
    let best = ctx.evaluate(&eps, lambda);
    let mut r = PerturbationResult {
        frame_id: ctx.frame_id,
        status: FrameStatus::Accepted,
        epsilon: eps,
        objective: best.value,
        intensity_term: best.intensity,
        regularizer_term: best.regularizer,
        fiducial_correction_mm: best.regularizer,
        accepted: true,
        seed,
        reason: None,
    };
    r.accepted = validate(&r, threshold_mm);
    if !r.accepted {
        r.status = FrameStatus::Rejected;
        r.reason = Some(format!("fiducial correction {:.3} mm exceeds {threshold_mm} mm", r.fiducial_correction_mm));
    }
    Ok(r)
}

/// Per column, the mean row of the shallowest contiguous run, as `(u, v)` pixel coordinates.
pub fn label_centerline(pixels: &[(u32, u32)]) -> Vec<(f64, f64)> {
    let mut cols: std::collections::BTreeMap<u32, Vec<u32>> = std::collections::BTreeMap::new();
    for &(u, v) in pixels {
        cols.entry(u).or_default().push(v);
    }
    cols.into_iter()
        .map(|(u, mut vs)| {
            vs.sort_unstable();
            let mut end = 0;
            while end + 1 < vs.len() && vs[end + 1] == vs[end] + 1 {
                end += 1;
            }
            let run = &vs[..=end];
            (u as f64, run.iter().map(|&v| v as f64).sum::<f64>() / run.len() as f64)
        })
        .collect()
}

/// Mean distance (mm) from the label centerline to the nearest true contour pixel.
pub fn contour_distance_mm(label: &[(u32, u32)], contour: &[(u32, u32)], grid: &PixelGrid) -> Option<f64> {
    if label.is_empty() || contour.is_empty() {
        return None;
    }
    let line = label_centerline(label);
    let total: f64 = line
        .iter()
        .map(|&(u, v)| {
            contour
                .iter()
                .map(|&(cu, cv)| {
                    let dx = (u - cu as f64) * grid.sx;
                    let dy = (v - cv as f64) * grid.sy;
                    dx * dx + dy * dy
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Some(total / line.len() as f64)
}
