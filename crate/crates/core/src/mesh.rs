//! Triangle meshes in CT coordinates.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// CT-frame triangle mesh with per-vertex unit normals, in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneMesh {
    vertices: Vec<Point3>,
    normals: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
}

/// A ray-triangle hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub triangle: usize,
    /// Barycentric weights of the triangle's three vertices.
    pub bary: [f64; 3],
}

impl BoneMesh {
    pub fn new(vertices: Vec<Point3>, normals: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::domain(format!("mesh needs at least 4 vertices, got {}", vertices.len())));
        }
        if normals.len() != vertices.len() {
            return Err(Error::domain("one normal per vertex required"));
        }
        if let Some(n) = normals.iter().find(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::domain(format!("normal {n:?} is not unit length")));
        }
        if vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::domain("non-finite vertex coordinate"));
        }
        let nv = vertices.len() as u32;
        if triangles.iter().any(|t| t.iter().any(|&i| i >= nv)) {
            return Err(Error::domain("triangle references a missing vertex"));
        }
        Ok(Self {
            vertices,
            normals,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_points(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Vertex-normal interpolation at barycentric weights, renormalized.
    pub fn interpolated_normal(&self, t: usize, bary: [f64; 3]) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        let n = self.normals[a as usize] * bary[0] + self.normals[b as usize] * bary[1] + self.normals[c as usize] * bary[2];
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            let [pa, pb, pc] = self.triangle_points(t);
            (pb - pa).cross(&(pc - pa)).normalize()
        }
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    pub fn transformed(&self, t: &RigidTransform) -> BoneMesh {
        BoneMesh {
            vertices: t.apply_to_points(&self.vertices),
            normals: self.normals.iter().map(|n| t.rotation() * n).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Closest ray hit with `distance in (0, max_distance]`, considering only `candidates`.
    pub fn first_hit(&self, origin: &Point3, dir: &Vector3<f64>, max_distance: f64, candidates: &[usize]) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for &t in candidates {
            let [a, b, c] = self.triangle_points(t);
            if let Some((dist, bu, bv)) = ray_triangle(origin, dir, &a, &b, &c) {
                if dist > 0.0 && dist <= max_distance && best.is_none_or(|h| dist < h.distance) {
                    best = Some(RayHit {
                        distance: dist,
                        triangle: t,
                        bary: [1.0 - bu - bv, bu, bv],
                    });
                }
            }
        }
        best
    }
}

/// Möller-Trumbore. Returns `(t, u, v)` with hit point `a + u (b - a) + v (c - a)`.
fn ray_triangle(o: &Point3, d: &Vector3<f64>, a: &Point3, b: &Point3, c: &Point3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetra() -> BoneMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let centroid = Point3::new(0.25, 0.25, 0.25);
        let n = v.iter().map(|p| (p - centroid).normalize()).collect();
        BoneMesh::new(v, n, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap()
    }

    #[test]
    fn tetra_is_watertight() {
        let m = tetra();
        assert!(m.is_watertight());
        let open = BoneMesh::new(m.vertices.clone(), m.normals.clone(), m.triangles[..3].to_vec()).unwrap();
        assert!(!open.is_watertight());
    }

    #[test]
    fn rejects_bad_meshes() {
        let m = tetra();
        assert!(BoneMesh::new(m.vertices[..3].to_vec(), m.normals[..3].to_vec(), vec![]).is_err());
        let mut n = m.normals.clone();
        n[0] *= 2.0;
        assert!(BoneMesh::new(m.vertices.clone(), n, m.triangles.clone()).is_err());
        assert!(BoneMesh::new(m.vertices.clone(), m.normals.clone(), vec![[0, 1, 9]]).is_err());
    }

    #[test]
    fn ray_hits_nearest_face() {
        let m = tetra();
        let all: Vec<usize> = (0..4).collect();
        let hit = m
            .first_hit(&Point3::new(0.1, 0.1, 5.0), &Vector3::new(0.0, 0.0, -1.0), 100.0, &all)
            .unwrap();
        assert!((hit.distance - 4.2).abs() < 1e-12);
        assert_eq!(hit.triangle, 3);
        assert!(m
            .first_hit(&Point3::new(2.0, 2.0, 5.0), &Vector3::new(0.0, 0.0, -1.0), 100.0, &all)
            .is_none());
    }
}
