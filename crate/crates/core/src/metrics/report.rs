use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelGrid;
use crate::labeler::{IntensityClass, LabelMask};
use crate::metrics::distance::{f1, MaskPointSet, SetRole};
use crate::metrics::otsu::IntensitySplit;
use crate::sweep::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassFilter {
    All,
    High,
    Low,
}

impl ClassFilter {
    pub const ALL: [ClassFilter; 3] = [ClassFilter::All, ClassFilter::High, ClassFilter::Low];

    fn admits(self, c: IntensityClass) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::High => c == IntensityClass::High,
            ClassFilter::Low => c == IntensityClass::Low,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassFilter::All => "all",
            ClassFilter::High => "high",
            ClassFilter::Low => "low",
        }
    }
}

/// Metrics for one frame at one threshold and class. `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_id: u32,
    pub sigma_mm: f64,
    pub class: ClassFilter,
    pub accuracy: Option<f64>,
    pub completeness: Option<f64>,
    pub f1: Option<f64>,
    /// Predictions attributed to the class.
    pub predictions: usize,
    pub truths: usize,
    pub correct_predictions: usize,
    pub covered_truths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub sigma_mm: f64,
    pub class: ClassFilter,
    /// Unweighted means over the frames where each value is defined.
    pub accuracy: Option<f64>,
    pub completeness: Option<f64>,
    pub f1: Option<f64>,
    pub frames_missing_accuracy: usize,
    pub frames_missing_completeness: usize,
    /// Pixel counts summed over all frames before dividing.
    pub pooled_accuracy: Option<f64>,
    pub pooled_completeness: Option<f64>,
    pub pooled_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sigmas_mm: Vec<f64>,
    pub threshold: u8,
    pub frames: Vec<FrameMetrics>,
    pub aggregate: Vec<AggregateMetrics>,
}

/// A mask tagged with its frame id.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMask {
    pub frame_id: u32,
    pub mask: LabelMask,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1_opt(a: Option<f64>, c: Option<f64>) -> Option<f64> {
    Some(f1(a?, c?))
}

struct Matched {
    /// Class of the nearest truth pixel and the distance to it, per prediction.
    pred: Vec<(IntensityClass, f64)>,
    /// Truth pixel class and the distance to the nearest prediction.
    truth: Vec<(IntensityClass, f64)>,
}

fn nearest(x: &[f64; 2], set: &[[f64; 2]]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in set.iter().enumerate() {
        let d = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
        if best.is_none_or(|b| d < b.1) {
            best = Some((i, d));
        }
    }
    best.map(|(i, d)| (i, d.sqrt()))
}

fn match_frame(p: &LabelMask, g: &LabelMask, image: &GrayImage, grid: &PixelGrid, split: IntensitySplit) -> Matched {
    let gpix = g.pixels();
    let gset = MaskPointSet::from_pixels(&gpix, grid, SetRole::GroundTruth);
    let pset = MaskPointSet::from_mask(p, grid, SetRole::Prediction);
    let gclass: Vec<IntensityClass> = gpix.iter().map(|&(u, v)| split.classify(image.get(u, v))).collect();
    let pred = pset
        .points
        .iter()
        .filter_map(|x| nearest(x, &gset.points).map(|(i, d)| (gclass[i], d)))
        .collect();
    let truth = gset
        .points
        .iter()
        .zip(&gclass)
        .map(|(x, &c)| (c, nearest(x, &pset.points).map_or(f64::INFINITY, |(_, d)| d)))
        .collect();
    Matched { pred, truth }
}

fn frame_rows(frame_id: u32, m: &Matched, p_count: usize, sigmas: &[f64]) -> Vec<FrameMetrics> {
    let mut rows = Vec::with_capacity(sigmas.len() * 3);
    for &sigma in sigmas {
        for class in ClassFilter::ALL {
            // with an empty truth every prediction belongs to the unsplit class only
            let predictions = if m.truth.is_empty() {
                if class == ClassFilter::All { p_count } else { 0 }
            } else {
                m.pred.iter().filter(|(c, _)| class.admits(*c)).count()
            };
            let correct = m.pred.iter().filter(|(c, d)| class.admits(*c) && *d < sigma).count();
            let truths = m.truth.iter().filter(|(c, _)| class.admits(*c)).count();
            let covered = m.truth.iter().filter(|(c, d)| class.admits(*c) && *d < sigma).count();
            let accuracy = ratio(correct, predictions);
            let completeness = ratio(covered, truths);
            rows.push(FrameMetrics {
                frame_id,
                sigma_mm: sigma,
                class,
                accuracy,
                completeness,
                f1: f1_opt(accuracy, completeness),
                predictions,
                truths,
                correct_predictions: correct,
                covered_truths: covered,
            });
        }
    }
    rows
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => missing += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), missing)
}

fn aggregate(rows: &[FrameMetrics], sigma: f64, class: ClassFilter) -> AggregateMetrics {
    let sel: Vec<&FrameMetrics> = rows.iter().filter(|r| r.sigma_mm == sigma && r.class == class).collect();
    let (accuracy, frames_missing_accuracy) = mean(sel.iter().map(|r| r.accuracy));
    let (completeness, frames_missing_completeness) = mean(sel.iter().map(|r| r.completeness));
    let (f1, _) = mean(sel.iter().map(|r| r.f1));
    let sum = |f: fn(&FrameMetrics) -> usize| sel.iter().map(|r| f(r)).sum::<usize>();
    let pooled_accuracy = ratio(sum(|r| r.correct_predictions), sum(|r| r.predictions));
    let pooled_completeness = ratio(sum(|r| r.covered_truths), sum(|r| r.truths));
    AggregateMetrics {
        sigma_mm: sigma,
        class,
        accuracy,
        completeness,
        f1,
        frames_missing_accuracy,
        frames_missing_completeness,
        pooled_accuracy,
        pooled_completeness,
        pooled_f1: f1_opt(pooled_accuracy, pooled_completeness),
    }
}

/// Per-frame and averaged accuracy, completeness and F1 at every threshold.
///
/// A truth pixel's class comes from its intensity under `split`; each prediction is
/// attributed to the class of its nearest truth pixel.
pub fn evaluate(
    pred: &[FrameMask],
    truth: &[FrameMask],
    images: &[GrayImage],
    grid: &PixelGrid,
    sigmas: &[f64],
    split: IntensitySplit,
) -> Result<EvalReport> {
    if pred.len() != truth.len() || truth.len() != images.len() {
        return Err(Error::Alignment(format!(
            "{} predicted masks, {} truth masks, {} images",
            pred.len(),
            truth.len(),
            images.len()
        )));
    }
    for (p, g) in pred.iter().zip(truth) {
        if p.frame_id != g.frame_id {
            return Err(Error::Alignment(format!("predicted frame {} paired with truth frame {}", p.frame_id, g.frame_id)));
        }
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::domain("thresholds must be positive"));
    }
    let dims_ok = |m: &LabelMask| m.width == grid.width && m.height == grid.height;
    for ((p, g), im) in pred.iter().zip(truth).zip(images) {
        if !dims_ok(&p.mask) || !dims_ok(&g.mask) || im.width != grid.width || im.height != grid.height {
            return Err(Error::Alignment(format!("frame {} does not match the {}x{} grid", p.frame_id, grid.width, grid.height)));
        }
    }
    let frames: Vec<FrameMetrics> = pred
        .par_iter()
        .zip(truth)
        .zip(images)
        .map(|((p, g), im)| {
            let m = match_frame(&p.mask, &g.mask, im, grid, split);
            frame_rows(p.frame_id, &m, p.mask.count(), sigmas)
        })
        .flatten_iter()
        .collect();
    let aggregate = sigmas
        .iter()
        .flat_map(|&s| ClassFilter::ALL.map(|c| aggregate(&frames, s, c)))
        .collect();
    Ok(EvalReport {
        sigmas_mm: sigmas.to_vec(),
        threshold: split.threshold,
        frames,
        aggregate,
    })
}

impl EvalReport {
    /// One line per frame, threshold and class; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        let mut out = String::from("frame_id,sigma_mm,class,accuracy,completeness,f1,predictions,truths\n");
        for r in &self.frames {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.frame_id,
                r.sigma_mm,
                r.class.name(),
                cell(r.accuracy),
                cell(r.completeness),
                cell(r.f1),
                r.predictions,
                r.truths
            );
        }
        out
    }

    pub fn aggregate_for(&self, sigma: f64, class: ClassFilter) -> Option<&AggregateMetrics> {
        self.aggregate.iter().find(|a| a.sigma_mm == sigma && a.class == class)
    }
}
