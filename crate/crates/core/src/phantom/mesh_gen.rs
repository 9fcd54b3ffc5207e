use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::mesh::BoneMesh;

/// Shape family for synthetic bones. All shapes run along +x from `x = 0` to `x = length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshKind {
    Cylinder,
    /// Radius shrinks linearly to half its initial value at the far end.
    TaperedTube,
    /// Cylinder with smooth random outward bumps of at most `bump_amplitude`.
    BumpyTube,
    /// Box of cross-section `2 radius x 2 radius`; its top face is flat with normal +z.
    Slab,
}

const AROUND: usize = 128;
const ALONG_STEP_MM: f64 = 0.5;

pub fn make_bone_mesh(kind: MeshKind, length: f64, radius: f64, bump_amplitude: f64, seed: u64) -> Result<BoneMesh> {
    if !(length > 0.0 && radius > 0.0) || !length.is_finite() || !radius.is_finite() {
        return Err(Error::domain(format!(
            "bone dimensions must be positive, got length {length}, radius {radius}"
        )));
    }
    if !(bump_amplitude >= 0.0) {
        return Err(Error::domain("bump amplitude must be non-negative"));
    }
    match kind {
        MeshKind::Slab => Ok(make_slab(length, radius)),
        _ => {
            let profile = RadiusProfile::new(kind, length, radius, bump_amplitude, seed);
            Ok(make_tube(length, &profile))
        }
    }
}

struct Lobe {
    omega: f64,
    m: f64,
    phase: f64,
}

struct RadiusProfile {
    base: f64,
    /// d(base radius)/dx.
    slope: f64,
    amplitude: f64,
    lobes: Vec<Lobe>,
}

impl RadiusProfile {
    fn new(kind: MeshKind, length: f64, radius: f64, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slope = if kind == MeshKind::TaperedTube { -0.5 * radius / length } else { 0.0 };
        let (amplitude, lobes) = if kind == MeshKind::BumpyTube && amplitude > 0.0 {
            let lobes = (0..6)
                .map(|_| Lobe {
                    omega: TAU * rng.random_range(1..=6) as f64 / length,
                    m: rng.random_range(0..=4) as f64,
                    phase: rng.random_range(0.0..TAU),
                })
                .collect();
            (amplitude, lobes)
        } else {
            (0.0, Vec::new())
        };
        Self {
            base: radius,
            slope,
            amplitude,
            lobes,
        }
    }

    /// `(r, dr/dx, dr/dphi)`.
    fn eval(&self, x: f64, phi: f64) -> (f64, f64, f64) {
        let mut r = self.base + self.slope * x;
        let mut rx = self.slope;
        let mut rphi = 0.0;
        if !self.lobes.is_empty() {
            let k = self.lobes.len() as f64;
            let (mut b, mut bx, mut bphi) = (0.0, 0.0, 0.0);
            for l in &self.lobes {
                let arg = l.omega * x + l.m * phi + l.phase;
                b += 0.5 * (1.0 + arg.cos());
                bx -= 0.5 * arg.sin() * l.omega;
                bphi -= 0.5 * arg.sin() * l.m;
            }
            r += self.amplitude * b / k;
            rx += self.amplitude * bx / k;
            rphi += self.amplitude * bphi / k;
        }
        (r, rx, rphi)
    }
}

fn make_tube(length: f64, profile: &RadiusProfile) -> BoneMesh {
    let along = ((length / ALONG_STEP_MM).ceil() as usize).max(1);
    let mut vertices = Vec::with_capacity((along + 1) * AROUND + 2);
    let mut normals = Vec::with_capacity(vertices.capacity());
    for j in 0..=along {
        let x = length * j as f64 / along as f64;
        for i in 0..AROUND {
            let phi = TAU * i as f64 / AROUND as f64;
            let (s, c) = phi.sin_cos();
            let (r, rx, rphi) = profile.eval(x, phi);
            vertices.push(Point3::new(x, r * c, r * s));
            normals.push(Vector3::new(-rx * r, rphi * s + r * c, -rphi * c + r * s).normalize());
        }
    }
    let start_cap = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, 0.0));
    normals.push(Vector3::new(-1.0, 0.0, 0.0));
    let end_cap = vertices.len() as u32;
    vertices.push(Point3::new(length, 0.0, 0.0));
    normals.push(Vector3::new(1.0, 0.0, 0.0));

    let id = |j: usize, i: usize| (j * AROUND + i % AROUND) as u32;
    let mut triangles = Vec::with_capacity(2 * along * AROUND + 2 * AROUND);
    for j in 0..along {
        for i in 0..AROUND {
            let (a, b, c, d) = (id(j, i), id(j, i + 1), id(j + 1, i + 1), id(j + 1, i));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for i in 0..AROUND {
        triangles.push([start_cap, id(0, i + 1), id(0, i)]);
        triangles.push([end_cap, id(along, i), id(along, i + 1)]);
    }
    orient_outward(&vertices, &normals, &mut triangles);
    BoneMesh::new(vertices, normals, triangles).expect("generated tube is valid")
}

fn make_slab(length: f64, half: f64) -> BoneMesh {
    let step = 1.0;
    let nx = ((length / step).ceil() as i64).max(1);
    let nw = ((2.0 * half / step).ceil() as i64).max(1);
    let coord = |n: i64, count: i64, lo: f64, extent: f64| lo + extent * n as f64 / count as f64;
    let pos = |(i, j, k): (i64, i64, i64)| {
        Point3::new(
            coord(i, nx, 0.0, length),
            coord(j, nw, -half, 2.0 * half),
            coord(k, nw, -half, 2.0 * half),
        )
    };

    let mut ids: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut face_normal_sums: Vec<Vector3<f64>> = Vec::new();
    let mut triangles = Vec::new();

    // (fixed axis, fixed index, outward normal) for the six faces
    let faces: [(usize, i64, Vector3<f64>); 6] = [
        (0, 0, -Vector3::x()),
        (0, nx, Vector3::x()),
        (1, 0, -Vector3::y()),
        (1, nw, Vector3::y()),
        (2, 0, -Vector3::z()),
        (2, nw, Vector3::z()),
    ];
    for (axis, fixed, normal) in faces {
        let (a_axis, b_axis) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let count = |ax: usize| if ax == 0 { nx } else { nw };
        let key = |a: i64, b: i64| {
            let mut k = [0i64; 3];
            k[axis] = fixed;
            k[a_axis] = a;
            k[b_axis] = b;
            (k[0], k[1], k[2])
        };
        let mut vid = |k: (i64, i64, i64)| {
            *ids.entry(k).or_insert_with(|| {
                vertices.push(pos(k));
                face_normal_sums.push(Vector3::zeros());
                (vertices.len() - 1) as u32
            })
        };
        let mut quads = Vec::new();
        for a in 0..count(a_axis) {
            for b in 0..count(b_axis) {
                quads.push([vid(key(a, b)), vid(key(a + 1, b)), vid(key(a + 1, b + 1)), vid(key(a, b + 1))]);
            }
        }
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
            for v in q {
                face_normal_sums[v as usize] += normal;
            }
        }
    }
    // Vertices shared by several faces of the same orientation accumulate repeats;
    // normalizing the distinct-face sum gives the edge/corner bisector.
    let normals: Vec<Vector3<f64>> = face_normal_sums
        .iter()
        .map(|s| s.map(|c| c.signum() * (c != 0.0) as i32 as f64).normalize())
        .collect();
    orient_outward(&vertices, &normals, &mut triangles);
    BoneMesh::new(vertices, normals, triangles).expect("generated slab is valid")
}

fn orient_outward(vertices: &[Point3], normals: &[Vector3<f64>], triangles: &mut [[u32; 3]]) {
    for t in triangles.iter_mut() {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let face = (b - a).cross(&(c - a));
        let avg: Vector3<f64> = t.iter().map(|&i| normals[i as usize]).sum();
        if face.dot(&avg) < 0.0 {
            t.swap(1, 2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_lateral_normals_are_radial() {
        let m = make_bone_mesh(MeshKind::Cylinder, 100.0, 10.0, 0.0, 1).unwrap();
        assert!(m.is_watertight());
        for (v, n) in m.vertices().iter().zip(m.normals()) {
            let radial = (v.y * v.y + v.z * v.z).sqrt();
            if radial > 1e-9 {
                assert!(n.x.abs() < 1e-12, "lateral normal has axial part {n:?}");
                assert!((radial - 10.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_bone_mesh(MeshKind::BumpyTube, 80.0, 9.0, 1.0, 42).unwrap();
        let b = make_bone_mesh(MeshKind::BumpyTube, 80.0, 9.0, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = make_bone_mesh(MeshKind::BumpyTube, 80.0, 9.0, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bumps_stay_within_amplitude() {
        let m = make_bone_mesh(MeshKind::BumpyTube, 100.0, 10.0, 1.0, 5).unwrap();
        assert!(m.is_watertight());
        let mut max_dev: f64 = 0.0;
        for v in m.vertices() {
            let radial = (v.y * v.y + v.z * v.z).sqrt();
            if radial < 1e-9 {
                continue; // cap centers
            }
            let dev = radial - 10.0;
            assert!((-1e-9..=1.0 + 1e-9).contains(&dev), "deviation {dev}");
            max_dev = max_dev.max(dev);
        }
        assert!(max_dev > 0.5, "bumps should be visible, max {max_dev}");
    }

    #[test]
    fn outward_normals_point_away_from_axis() {
        for kind in [MeshKind::TaperedTube, MeshKind::BumpyTube] {
            let m = make_bone_mesh(kind, 60.0, 8.0, 1.0, 9).unwrap();
            assert!(m.is_watertight());
            for (v, n) in m.vertices().iter().zip(m.normals()) {
                let radial = Vector3::new(0.0, v.y, v.z);
                if radial.norm() > 1e-9 {
                    assert!(n.dot(&radial) > 0.0);
                }
            }
        }
    }

    #[test]
    fn slab_is_closed_box_with_flat_top() {
        let m = make_bone_mesh(MeshKind::Slab, 20.0, 5.0, 0.0, 0).unwrap();
        assert!(m.is_watertight());
        let area = m.surface_area();
        let want = 2.0 * (20.0 * 10.0 * 2.0) + 2.0 * 100.0;
        assert!((area - want).abs() < 1e-9);
        for (v, n) in m.vertices().iter().zip(m.normals()) {
            let interior_top = (v.z - 5.0).abs() < 1e-12 && v.y.abs() < 5.0 - 1e-9 && v.x > 1e-9 && v.x < 20.0 - 1e-9;
            if interior_top {
                assert_eq!(*n, Vector3::z());
            }
        }
    }

    #[test]
    fn rejects_non_positive_dimensions() {
        assert!(make_bone_mesh(MeshKind::Cylinder, 0.0, 1.0, 0.0, 0).is_err());
        assert!(make_bone_mesh(MeshKind::Cylinder, 1.0, -1.0, 0.0, 0).is_err());
    }
}
