use crate::error::{Error, Result};
use crate::geometry::PixelGrid;
use crate::labeler::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetRole {
    Prediction,
    GroundTruth,
}

/// Labeled pixels in physical image coordinates `(u * sx, v * sy)`, mm.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPointSet {
    pub points: Vec<[f64; 2]>,
    pub role: SetRole,
}

impl MaskPointSet {
    pub fn new(points: Vec<[f64; 2]>, role: SetRole) -> Self {
        Self { points, role }
    }

    pub fn from_pixels(pixels: &[(u32, u32)], grid: &PixelGrid, role: SetRole) -> Self {
        Self {
            points: pixels.iter().map(|&(u, v)| [u as f64 * grid.sx, v as f64 * grid.sy]).collect(),
            role,
        }
    }

    pub fn from_mask(mask: &LabelMask, grid: &PixelGrid, role: SetRole) -> Self {
        Self::from_pixels(&mask.pixels(), grid, role)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Distance from `x` to the nearest point of `set`.
pub fn point_to_set_distance(x: &[f64; 2], set: &MaskPointSet) -> Result<f64> {
    set.points
        .iter()
        .map(|p| d2(x, p))
        .reduce(f64::min)
        .map(f64::sqrt)
        .ok_or(Error::UndefinedDistance)
}

/// Distances from every point of `from` to `to`; `None` when `to` is empty.
pub fn nearest_distances(from: &MaskPointSet, to: &MaskPointSet) -> Option<Vec<f64>> {
    if to.is_empty() {
        return None;
    }
    Some(from.points.iter().map(|x| point_to_set_distance(x, to).expect("non-empty")).collect())
}

fn fraction_within(from: &MaskPointSet, to: &MaskPointSet, sigma: f64) -> f64 {
    match nearest_distances(from, to) {
        Some(d) => d.iter().filter(|d| **d < sigma).count() as f64 / d.len() as f64,
        // nothing to match against: every point is beyond any threshold
        None => 0.0,
    }
}

/// Share of predictions strictly closer than `sigma` to the ground truth.
/// `None` when there are no predictions.
pub fn accuracy(p: &MaskPointSet, g: &MaskPointSet, sigma: f64) -> Option<f64> {
    (!p.is_empty()).then(|| fraction_within(p, g, sigma))
}

/// Share of ground-truth points strictly closer than `sigma` to a prediction.
/// `None` when the ground truth is empty.
pub fn completeness(p: &MaskPointSet, g: &MaskPointSet, sigma: f64) -> Option<f64> {
    (!g.is_empty()).then(|| fraction_within(g, p, sigma))
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(acc: f64, com: f64) -> f64 {
    if acc + com == 0.0 {
        0.0
    } else {
        2.0 * acc * com / (acc + com)
    }
}

/// Mean distance from each prediction to the ground truth.
pub fn chamfer_one_sided(p: &MaskPointSet, g: &MaskPointSet) -> Result<f64> {
    if p.is_empty() || g.is_empty() {
        return Err(Error::UndefinedDistance);
    }
    let d = nearest_distances(p, g).expect("non-empty");
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(pts: &[[f64; 2]]) -> MaskPointSet {
        MaskPointSet::new(pts.to_vec(), SetRole::Prediction)
    }

    #[test]
    fn distance_examples() {
        let s = set(&[[3.0, 4.0]]);
        assert_eq!(point_to_set_distance(&[0.0, 0.0], &s).unwrap(), 5.0);
        assert_eq!(point_to_set_distance(&[3.0, 4.0], &s).unwrap(), 0.0);
        assert!(matches!(point_to_set_distance(&[0.0, 0.0], &set(&[])), Err(Error::UndefinedDistance)));
    }

    #[test]
    fn acc_com_examples() {
        let p = set(&[[0.0, 0.0], [0.0, 3.0]]);
        let g = set(&[[0.0, 0.0]]);
        assert_eq!(accuracy(&p, &g, 1.0), Some(0.5));
        assert_eq!(completeness(&p, &g, 1.0), Some(1.0));
        assert_eq!(accuracy(&g, &g, 0.1), Some(1.0));
        assert_eq!(accuracy(&set(&[]), &g, 1.0), None);
        assert_eq!(completeness(&set(&[]), &g, 1.0), Some(0.0));
        // strict threshold
        assert_eq!(accuracy(&set(&[[1.0, 0.0]]), &g, 1.0), Some(0.0));
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert!((f1(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        let f = f1(0.900, 0.895);
        assert!((f - 1.611 / 1.795).abs() < 1e-15);
        assert_eq!(format!("{f:.4}"), "0.8975");
        assert!((f - 0.8975).abs() > 1e-6);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn chamfer_examples() {
        let g = set(&[[3.0, 4.0]]);
        assert_eq!(chamfer_one_sided(&g, &g).unwrap(), 0.0);
        assert_eq!(chamfer_one_sided(&set(&[[0.0, 0.0]]), &g).unwrap(), 5.0);
        assert!(chamfer_one_sided(&set(&[]), &g).is_err());
    }

    fn cloud() -> impl Strategy<Value = Vec<[f64; 2]>> {
        proptest::collection::vec((0u32..40, 0u32..40).prop_map(|(u, v)| [u as f64 * 0.15, v as f64 * 0.2]), 1..60)
    }

    proptest! {
        #[test]
        fn duality_and_bounds(p in cloud(), g in cloud(), s1 in 0.0f64..3.0, extra in 0.0f64..3.0) {
            let (p, g) = (set(&p), set(&g));
            prop_assert_eq!(completeness(&p, &g, s1), accuracy(&g, &p, s1));
            let (a1, c1) = (accuracy(&p, &g, s1).unwrap(), completeness(&p, &g, s1).unwrap());
            let (a2, c2) = (accuracy(&p, &g, s1 + extra).unwrap(), completeness(&p, &g, s1 + extra).unwrap());
            prop_assert!(a1 <= a2 && c1 <= c2);
            let f = f1(a1, c1);
            prop_assert!(f >= a1.min(c1) - 1e-15 && f <= a1.max(c1) + 1e-15);
        }

        #[test]
        fn translation_invariant(p in cloud(), g in cloud(), dx in -20i32..20, dy in -20i32..20, s in 0.1f64..2.0) {
            // binary-exact coordinates and shifts, so distances are unchanged bit for bit
            let exact = |v: &[[f64; 2]], ox: f64, oy: f64| {
                set(&v.iter().map(|q| [(q[0] / 0.15).round() * 0.25 + ox, (q[1] / 0.2).round() * 0.5 + oy]).collect::<Vec<_>>())
            };
            let (ox, oy) = (dx as f64 * 0.25, dy as f64 * 0.5);
            let (p0, g0) = (exact(&p, 0.0, 0.0), exact(&g, 0.0, 0.0));
            let (p1, g1) = (exact(&p, ox, oy), exact(&g, ox, oy));
            prop_assert!((chamfer_one_sided(&p0, &g0).unwrap() - chamfer_one_sided(&p1, &g1).unwrap()).abs() < 1e-12);
            prop_assert_eq!(accuracy(&p0, &g0, s), accuracy(&p1, &g1, s));
            prop_assert_eq!(completeness(&p0, &g0, s), completeness(&p1, &g1, s));
        }
    }
}
