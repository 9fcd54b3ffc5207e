use crate::geometry::{dist2, EulerPose, FrameProjector, PixelGrid, Point3, RigidTransform};
use crate::labeler::index::MeshIndex;
use crate::sweep::GrayImage;

/// Slack on the stamping bounds, mm and mm². Far above rounding error, far below any pixel size.
const STAMP_SLACK: f64 = 1e-6;

/// Everything needed to score pose perturbations of one frame.
///
/// Candidate poses are `T(theta + theta_eps, d + d_eps)` where `(theta, d)` are the
/// Euler parameters of the recorded `T_CT<-US`.
#[derive(Debug, Clone)]
pub struct FrameContext<'a> {
    pub frame_id: u32,
    image: &'a GrayImage,
    grid: PixelGrid,
    recorded: EulerPose,
    image_to_probe: RigidTransform,
    fiducials: Vec<Point3>,
    fiducials_ct: Vec<Point3>,
    gamma: f64,
    bound: f64,
    /// Surface samples that any pose in the box could bring within `gamma` of a pixel.
    slab: Vec<Point3>,
}

/// Objective value and its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    /// `intensity - lambda * regularizer`, or `-inf` for an empty intersection.
    pub value: f64,
    /// Mean raw intensity over the perturbed intersection.
    pub intensity: f64,
    /// Mean fiducial displacement, mm.
    pub regularizer: f64,
    pub pixels: usize,
}

/// Reusable per-thread buffers for [`FrameContext::evaluate_with`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    stamp: Vec<u32>,
    generation: u32,
}

impl<'a> FrameContext<'a> {
    /// `recorded` is `T_CT<-US` from tracking; `fiducials` are in the probe-marker frame.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: u32,
        image: &'a GrayImage,
        grid: PixelGrid,
        recorded: &RigidTransform,
        image_to_probe: RigidTransform,
        fiducials: Vec<Point3>,
        index: &MeshIndex,
        gamma: f64,
        bound: f64,
    ) -> Self {
        let recorded = EulerPose::from_transform(recorded);
        let base = recorded.to_transform();
        let fiducials_ct = base.apply_to_points(&fiducials);
        let chain = base.compose(&image_to_probe);
        let w = (grid.width as f64 - 1.0) * grid.sx;
        let h = (grid.height as f64 - 1.0) * grid.sy;
        let lever = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| image_to_probe.apply(&Point3::new(x, y, 0.0)).norm())
            .fold(0.0, f64::max);
        let total_angle = (3.0 * bound).min(180.0).to_radians();
        let reach = gamma + 2.0 * (total_angle / 2.0).sin() * lever + 3f64.sqrt() * bound + STAMP_SLACK;
        let inv = chain.inverse();
        let slab = index
            .points()
            .iter()
            .filter(|p| {
                let q = inv.apply(p);
                q.z.abs() <= reach && q.x >= -reach && q.x <= w + reach && q.y >= -reach && q.y <= h + reach
            })
            .copied()
            .collect();
        Self {
            frame_id,
            image,
            grid,
            recorded,
            image_to_probe,
            fiducials,
            fiducials_ct,
            gamma,
            bound,
            slab,
        }
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn image(&self) -> &GrayImage {
        self.image
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn slab_len(&self) -> usize {
        self.slab.len()
    }

    /// Perturbed `T_CT<-US`.
    pub fn candidate_pose(&self, eps: &EulerPose) -> RigidTransform {
        self.recorded.offset(eps).to_transform()
    }

    /// Perturbed `T_CT<-IP`.
    pub fn candidate_chain(&self, eps: &EulerPose) -> RigidTransform {
        self.candidate_pose(eps).compose(&self.image_to_probe)
    }

    /// Mean fiducial displacement between the recorded and perturbed poses, mm.
    pub fn fiducial_correction(&self, eps: &EulerPose) -> f64 {
        if self.fiducials.is_empty() {
            return 0.0;
        }
        let moved = self.candidate_pose(eps).apply_to_points(&self.fiducials);
        let sum: f64 = moved.iter().zip(&self.fiducials_ct).map(|(a, b)| (a - b).norm()).sum();
        sum / self.fiducials.len() as f64
    }

    pub fn evaluate(&self, eps: &EulerPose, lambda: f64) -> ObjectiveValue {
        self.evaluate_with(eps, lambda, &mut Scratch::default())
    }

    /// Intersection pixels under `eps`, row-major order.
    pub fn intersection_pixels(&self, eps: &EulerPose) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        self.stamp(eps, &mut Scratch::default(), |u, v| out.push((u, v)));
        out.sort_by_key(|&(u, v)| (v, u));
        out
    }

    pub fn evaluate_with(&self, eps: &EulerPose, lambda: f64, scratch: &mut Scratch) -> ObjectiveValue {
        let mut sum = 0u64;
        let mut count = 0usize;
        let w = self.grid.width as usize;
        let data = &self.image.data;
        self.stamp(eps, scratch, |u, v| {
            sum += data[v as usize * w + u as usize] as u64;
            count += 1;
        });
        let regularizer = self.fiducial_correction(eps);
        if count == 0 {
            return ObjectiveValue {
                value: f64::NEG_INFINITY,
                intensity: 0.0,
                regularizer,
                pixels: 0,
            };
        }
        let intensity = sum as f64 / count as f64;
        ObjectiveValue {
            value: intensity - lambda * regularizer,
            intensity,
            regularizer,
            pixels: count,
        }
    }

    /// Calls `hit(u, v)` once for every pixel within `gamma` of a surface sample.
    ///
    /// Each sample near the plane marks the pixels of its in-plane disk, then every
    /// marked pixel is confirmed with the same projection and distance used by
    /// [`crate::labeler::compute_intersection`].
    fn stamp(&self, eps: &EulerPose, scratch: &mut Scratch, mut hit: impl FnMut(u32, u32)) {
        let chain = self.candidate_chain(eps);
        let inv = chain.inverse();
        let projector = FrameProjector::new(&chain, &self.grid);
        let (gw, gh) = (self.grid.width, self.grid.height);
        let n = gw as usize * gh as usize;
        if scratch.stamp.len() != n {
            scratch.stamp = vec![0; n];
            scratch.generation = 0;
        }
        scratch.generation = scratch.generation.wrapping_add(1);
        if scratch.generation == 0 {
            scratch.stamp.iter_mut().for_each(|s| *s = 0);
            scratch.generation = 1;
        }
        let generation = scratch.generation;
        let g2 = self.gamma * self.gamma;
        let zmax = self.gamma + STAMP_SLACK;
        let r = inv.rotation();
        let t = inv.translation();
        let (sx, sy) = (self.grid.sx, self.grid.sy);
        for p in &self.slab {
            let qz = r[(2, 0)] * p.x + r[(2, 1)] * p.y + r[(2, 2)] * p.z + t.z;
            if qz.abs() > zmax {
                continue;
            }
            let qx = r[(0, 0)] * p.x + r[(0, 1)] * p.y + r[(0, 2)] * p.z + t.x;
            let qy = r[(1, 0)] * p.x + r[(1, 1)] * p.y + r[(1, 2)] * p.z + t.y;
            let rad = (g2 - qz * qz + STAMP_SLACK).max(0.0).sqrt();
            let u0 = ((qx - rad) / sx).ceil().max(0.0);
            let u1 = ((qx + rad) / sx).floor().min(gw as f64 - 1.0);
            let v0 = ((qy - rad) / sy).ceil().max(0.0);
            let v1 = ((qy + rad) / sy).floor().min(gh as f64 - 1.0);
            if u0 > u1 || v0 > v1 {
                continue;
            }
            for v in v0 as u32..=v1 as u32 {
                for u in u0 as u32..=u1 as u32 {
                    let idx = v as usize * gw as usize + u as usize;
                    if scratch.stamp[idx] == generation {
                        continue;
                    }
                    if dist2(&projector.project(u as f64, v as f64), p) <= g2 {
                        scratch.stamp[idx] = generation;
                        hit(u, v);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::compute_intersection;
    use crate::phantom::{make_bone_mesh, MeshKind};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    fn micro() -> (GrayImage, MeshIndex, PixelGrid) {
        let mut img = GrayImage::new(3, 3);
        img.set(0, 0, 100);
        img.set(1, 1, 200);
        img.set(2, 2, 50);
        let pts = vec![Point3::new(0.5, 0.0, 0.0), Point3::new(1.0, 0.5, 0.0)];
        (img, MeshIndex::from_points(pts, vec![Vector3::z(); 2]), PixelGrid::new(3, 3, 0.5, 0.5).unwrap())
    }

    #[test]
    fn hand_computed_micro_scene() {
        let (img, idx, grid) = micro();
        let fid = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(3.0, 1.0, 2.0)];
        let ctx = FrameContext::new(0, &img, grid, &RigidTransform::identity(), RigidTransform::identity(), fid, &idx, 0.3, 1.0);
        let eps = EulerPose::new([0.0; 3], [0.5, 0.0, 0.0]);
        assert_eq!(ctx.intersection_pixels(&eps), vec![(0, 0), (1, 1)]);
        let o = ctx.evaluate(&eps, 10.0);
        assert_eq!(o.intensity, 150.0);
        assert!((o.regularizer - 0.5).abs() < 1e-15);
        assert!((o.value - 145.0).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_has_no_penalty() {
        let (img, idx, grid) = micro();
        let ctx = FrameContext::new(0, &img, grid, &RigidTransform::identity(), RigidTransform::identity(), vec![Point3::new(1.0, 2.0, 3.0)], &idx, 0.3, 1.0);
        let o = ctx.evaluate(&EulerPose::ZERO, 7.0);
        assert_eq!(o.regularizer, 0.0);
        assert_eq!(ctx.intersection_pixels(&EulerPose::ZERO), vec![(1, 0), (2, 1)]);
        assert_eq!(o.value, o.intensity);
        let eps = EulerPose::new([0.3, -0.2, 0.1], [0.2, 0.0, -0.1]);
        assert_eq!(ctx.evaluate(&eps, 0.0).value, ctx.evaluate(&eps, 0.0).intensity);
    }

    #[test]
    fn empty_intersection_is_negative_infinity() {
        let (img, idx, grid) = micro();
        let ctx = FrameContext::new(0, &img, grid, &RigidTransform::from_translation(0.0, 0.0, 5.0), RigidTransform::identity(), vec![], &idx, 0.3, 1.0);
        assert_eq!(ctx.evaluate(&EulerPose::ZERO, 1.0).value, f64::NEG_INFINITY);
    }

    #[test]
    fn stamping_matches_tree_and_brute_force() {
        let mesh = make_bone_mesh(MeshKind::BumpyTube, 30.0, 6.0, 0.8, 4).unwrap();
        let idx = MeshIndex::build(&mesh, 25.0, 1);
        let grid = PixelGrid::new(64, 64, 0.25, 0.25).unwrap();
        let image_to_probe = RigidTransform::rotation_axis_angle(Vector3::x(), -90.0)
            .compose(&RigidTransform::from_translation(-8.0, 0.0, 0.0));
        let nominal = RigidTransform::from_parts(
            nalgebra::Matrix3::new(0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
            Vector3::new(15.0, 0.0, 9.0),
        )
        .unwrap()
        .compose(&image_to_probe.inverse());
        let img = GrayImage::new(64, 64);
        let ctx = FrameContext::new(0, &img, grid, &nominal, image_to_probe, vec![], &idx, 0.3, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        for k in 0..12 {
            let eps = if k == 0 {
                EulerPose::ZERO
            } else {
                let mut e = [0.0; 6];
                e.iter_mut().for_each(|x| *x = rng.random_range(-1.0..=1.0));
                if k == 1 {
                    e = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
                }
                EulerPose::from_array(&e)
            };
            let chain = ctx.candidate_chain(&eps);
            let stamped = ctx.intersection_pixels(&eps);
            let tree = compute_intersection(0, &grid, &chain, &idx, 0.3).coords();
            assert_eq!(stamped, tree);
            if k < 3 {
                let brute: Vec<(u32, u32)> = crate::labeler::intersect::tests::brute_intersection(&grid, &chain, idx.points(), 0.3)
                    .into_iter()
                    .map(|(u, v, _)| (u, v))
                    .collect();
                assert_eq!(tree, brute);
            }
            checked += stamped.len();
        }
        assert!(checked > 100);
    }
}
