use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Point3;
use crate::kdtree::KdTree;
use crate::mesh::BoneMesh;

/// Uniform surface samples of a mesh with their normals and a nearest-neighbor tree.
#[derive(Debug, Clone)]
pub struct MeshIndex {
    normals: Vec<Vector3<f64>>,
    tree: KdTree,
    density: f64,
}

impl MeshIndex {
    /// Area-proportional sampling at `density` points per mm².
    pub fn build(mesh: &BoneMesh, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut cum = 0.0;
        let mut emitted = 0usize;
        for t in 0..mesh.triangles().len() {
            cum += mesh.triangle_area(t) * density;
            let target = cum.round() as usize;
            let [a, b, c] = mesh.triangle_points(t);
            while emitted < target {
                let r1: f64 = rng.random::<f64>().sqrt();
                let r2: f64 = rng.random();
                let bary = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
                points.push(a * bary[0] + b * bary[1] + c * bary[2]);
                normals.push(mesh.interpolated_normal(t, bary));
                emitted += 1;
            }
        }
        Self {
            normals,
            tree: KdTree::build(points),
            density,
        }
    }

    /// Index over an explicit point set.
    pub fn from_points(points: Vec<Point3>, normals: Vec<Vector3<f64>>) -> Self {
        assert_eq!(points.len(), normals.len(), "one normal per point");
        Self {
            normals,
            tree: KdTree::build(points),
            density: f64::NAN,
        }
    }

    pub fn points(&self) -> &[Point3] {
        self.tree.points()
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}
