use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::io::missing_or_io;
use crate::mesh::BoneMesh;

/// Normals off unit length by less than this are re-normalized; larger deviations are rejected.
pub const NORMAL_TOLERANCE: f64 = 1e-3;

/// ASCII PLY with per-vertex `x y z nx ny nz`; polygon faces are fan-triangulated.
pub fn load_mesh(path: &Path) -> Result<BoneMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| missing_or_io(path, e, "ply mesh"))?;
    parse_ply(&text).map_err(|msg| Error::format(path, msg))
}

pub fn parse_ply(text: &str) -> std::result::Result<BoneMesh, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic".into());
    }
    let mut n_vertices = None;
    let mut n_faces = 0usize;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines.next().ok_or("header not terminated by end_header")?.trim();
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", f, ..] => return Err(format!("unsupported format {f}, only ascii")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                n_vertices = Some(n.parse::<usize>().map_err(|e| format!("vertex count: {e}"))?);
                in_vertex = true;
            }
            ["element", "face", n] => {
                n_faces = n.parse().map_err(|e| format!("face count: {e}"))?;
                in_vertex = false;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] => {}
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(format!("unrecognized header line {line:?}")),
        }
    }
    let n_vertices = n_vertices.ok_or("no vertex element")?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let xyz = [col("x"), col("y"), col("z")];
    let nxyz = [col("nx"), col("ny"), col("nz")];
    if xyz.iter().any(Option::is_none) {
        return Err("vertex element lacks x/y/z".into());
    }
    if nxyz.iter().any(Option::is_none) {
        return Err("vertex element lacks per-vertex normals nx/ny/nz".into());
    }
    let mut body = lines.filter(|l| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(n_vertices);
    let mut normals = Vec::with_capacity(n_vertices);
    for i in 0..n_vertices {
        let line = body.next().ok_or(format!("file ends after {i} of {n_vertices} vertices"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("vertex {i}: {e}"))?;
        if vals.len() < props.len() {
            return Err(format!("vertex {i}: expected {} values, found {}", props.len(), vals.len()));
        }
        let get = |c: [Option<usize>; 3]| Vector3::new(vals[c[0].unwrap()], vals[c[1].unwrap()], vals[c[2].unwrap()]);
        let (p, n) = (get(xyz), get(nxyz));
        if !p.iter().chain(n.iter()).all(|x| x.is_finite()) {
            return Err(format!("vertex {i}: non-finite value"));
        }
        let len = n.norm();
        if (len - 1.0).abs() >= NORMAL_TOLERANCE {
            return Err(format!("vertex {i}: normal length {len} is not unit"));
        }
        vertices.push(Point3::from(p));
        normals.push(n / len);
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for f in 0..n_faces {
        let line = body.next().ok_or(format!("file ends after {f} of {n_faces} faces"))?;
        let idx: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("face {f}: {e}"))?;
        let (count, rest) = idx.split_first().ok_or(format!("face {f}: empty"))?;
        if *count < 3 || rest.len() != *count as usize {
            return Err(format!("face {f}: malformed vertex list"));
        }
        for k in 1..rest.len() - 1 {
            triangles.push([rest[0], rest[k], rest[k + 1]]);
        }
    }
    BoneMesh::new(vertices, normals, triangles).map_err(|e| e.to_string())
}

pub fn save_mesh(path: &Path, mesh: &BoneMesh) -> Result<()> {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for (p, n) in mesh.vertices().iter().zip(mesh.normals()) {
        let _ = writeln!(s, "{:?} {:?} {:?} {:?} {:?} {:?}", p.x, p.y, p.z, n.x, n.y, n.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    std::fs::write(path, s)?;
    Ok(())
}
