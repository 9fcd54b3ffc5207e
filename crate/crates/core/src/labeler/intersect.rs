use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::geometry::{FrameProjector, PixelGrid, Point3, RigidTransform};
use crate::labeler::index::MeshIndex;
use crate::phantom::scene::incidence_angle_deg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionPixel {
    pub u: u32,
    pub v: u32,
    /// Pixel center in CT, mm.
    pub point: Point3,
    /// Distance to the nearest surface sample, mm.
    pub distance: f64,
    pub normal: Vector3<f64>,
    pub alpha_deg: f64,
}

/// Pixels of one frame lying within `gamma` of the bone surface.
///
/// Each column also remembers the deepest row of its shallowest contiguous run,
/// taken from the pixels the set was built with, so later filtering does not move it.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionSet {
    pub frame_id: u32,
    /// `T_CT<-IP` the set was computed under.
    pub chain: RigidTransform,
    pub pixels: Vec<IntersectionPixel>,
    first_run_end: BTreeMap<u32, u32>,
}

impl IntersectionSet {
    pub fn new(frame_id: u32, chain: RigidTransform, mut pixels: Vec<IntersectionPixel>) -> Self {
        pixels.sort_by_key(|p| (p.v, p.u));
        let mut rows: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for p in &pixels {
            rows.entry(p.u).or_default().push(p.v);
        }
        let first_run_end = rows
            .into_iter()
            .map(|(u, mut vs)| {
                vs.sort_unstable();
                vs.dedup();
                let mut end = vs[0];
                for &v in &vs[1..] {
                    if v == end + 1 {
                        end = v;
                    } else {
                        break;
                    }
                }
                (u, end)
            })
            .collect();
        Self {
            frame_id,
            chain,
            pixels,
            first_run_end,
        }
    }

    pub fn empty(frame_id: u32, chain: RigidTransform) -> Self {
        Self::new(frame_id, chain, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Deepest row of the shallowest run in column `u`.
    pub fn first_run_end(&self, u: u32) -> Option<u32> {
        self.first_run_end.get(&u).copied()
    }

    pub fn coords(&self) -> Vec<(u32, u32)> {
        self.pixels.iter().map(|p| (p.u, p.v)).collect()
    }

    fn retain(&self, keep: impl Fn(&IntersectionPixel) -> bool) -> Self {
        Self {
            frame_id: self.frame_id,
            chain: self.chain,
            pixels: self.pixels.iter().filter(|p| keep(p)).copied().collect(),
            first_run_end: self.first_run_end.clone(),
        }
    }
}

/// All pixels whose nearest surface sample is within `gamma` mm under `chain` (`T_CT<-IP`).
pub fn compute_intersection(frame_id: u32, grid: &PixelGrid, chain: &RigidTransform, index: &MeshIndex, gamma: f64) -> IntersectionSet {
    let projector = FrameProjector::new(chain, grid);
    let rot = chain.rotation();
    let u_axis: Vector3<f64> = rot.column(0).into();
    let v_axis: Vector3<f64> = rot.column(1).into();
    let g2 = gamma * gamma;
    let mut pixels = Vec::new();
    for v in 0..grid.height {
        for u in 0..grid.width {
            let p = projector.project(u as f64, v as f64);
            if let Some(nb) = index.tree().nearest_within(&p, g2) {
                let normal = index.normals()[nb.index];
                pixels.push(IntersectionPixel {
                    u,
                    v,
                    point: p,
                    distance: nb.dist2.sqrt(),
                    normal,
                    alpha_deg: incidence_angle_deg(&normal, &u_axis, &v_axis),
                });
            }
        }
    }
    IntersectionSet::new(frame_id, *chain, pixels)
}

/// Drops pixels deeper than the shallowest run of their column plus `margin_px`.
pub fn shadow_filter(iset: &IntersectionSet, margin_px: u32) -> IntersectionSet {
    iset.retain(|p| iset.first_run_end(p.u).is_some_and(|end| p.v <= end.saturating_add(margin_px)))
}

/// Keeps pixels with `alpha <= alpha_max_deg`.
pub fn incidence_filter(iset: &IntersectionSet, alpha_max_deg: f64) -> IntersectionSet {
    iset.retain(|p| p.alpha_deg <= alpha_max_deg)
}
