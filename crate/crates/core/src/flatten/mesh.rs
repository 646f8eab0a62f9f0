use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

/// A triangle mesh of disk topology.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    boundary: Vec<usize>,
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

impl SurfaceMesh {
    /// Validates the mesh: indices in range, no zero-area faces, consistently
    /// oriented manifold edges, one boundary loop and Euler characteristic 1.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::InvalidInput("mesh has no faces".into()));
        }
        if let Some(v) = vertices.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!("vertex {v} has a non-finite coordinate")));
        }
        let n = vertices.len();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, face) in faces.iter().enumerate() {
            if face.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!("face {f} references a missing vertex")));
            }
            let [a, b, c] = face.map(|v| vertices[v]);
            if norm(cross(sub(b, a), sub(c, a))) <= 1e-14 * (dot(sub(b, a), sub(b, a)) + dot(sub(c, a), sub(c, a))) {
                return Err(Error::InvalidInput(format!("face {f} is degenerate")));
            }
            for k in 0..3 {
                let e = (face[k], face[(k + 1) % 3]);
                if directed.insert(e, f).is_some() {
                    return Err(Error::InvalidInput(format!(
                        "edge {}-{} is non-manifold or inconsistently oriented",
                        e.0, e.1
                    )));
                }
            }
        }

        // Boundary edges are the directed edges without a twin.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(Error::InvalidInput(format!("boundary is pinched at vertex {a}")));
            }
        }
        let used: std::collections::HashSet<usize> = faces.iter().flatten().copied().collect();
        let edges = directed.keys().filter(|(a, b)| a < b || !directed.contains_key(&(*b, *a))).count();
        let euler = used.len() as i64 - edges as i64 + faces.len() as i64;

        let mut loops = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for start in starts {
            if seen.contains(&start) {
                continue;
            }
            let mut lp = vec![start];
            seen.insert(start);
            let mut v = next[&start];
            while v != start {
                seen.insert(v);
                lp.push(v);
                v = next[&v];
            }
            loops.push(lp);
        }
        if euler != 1 || loops.len() != 1 {
            return Err(Error::Topology { euler, boundary_loops: loops.len() });
        }
        if used.len() != n {
            return Err(Error::InvalidInput(format!("{} vertices are not used by any face", n - used.len())));
        }
        let boundary = loops.pop().expect("one loop");
        Ok(SurfaceMesh { vertices, faces, boundary })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Boundary loop, in the orientation induced by the faces.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// One third of the area of every incident face.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            let a = self.face_area(f) / 3.0;
            for &v in face {
                out[v] += a;
            }
        }
        out
    }

    /// The mesh with every vertex moved by `f`.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Self> {
        SurfaceMesh::new(self.vertices.iter().map(|&p| f(p)).collect(), self.faces.clone())
    }

    pub fn load(path: impl AsRef<Path>, format: MeshFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let (vertices, faces) = match format {
            MeshFormat::Off => parse_off(&text, path)?,
            MeshFormat::Obj => parse_obj(&text, path)?,
        };
        SurfaceMesh::new(vertices, faces)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for p in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
        }
        for f in &self.faces {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        out
    }

    pub fn to_off(&self) -> String {
        let mut out = format!("OFF\n{} {} 0\n", self.vertices.len(), self.faces.len());
        for p in &self.vertices {
            out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
        }
        for f in &self.faces {
            out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
        }
        out
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MeshParse { path: PathBuf::from(path), line, message: message.into() }
}

fn parse_numbers<T: std::str::FromStr>(fields: &[&str], path: &Path, line: usize) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| parse_error(path, line, format!("cannot parse {f:?}"))))
        .collect()
}

// Splits a polygon into a fan of triangles.
fn fan(polygon: &[usize]) -> impl Iterator<Item = [usize; 3]> + '_ {
    (1..polygon.len() - 1).map(move |k| [polygon[0], polygon[k], polygon[k + 1]])
}

fn parse_off(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first_no, first) = lines.next().ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let mut header: Vec<&str> = first.split_whitespace().collect();
    if header[0] != "OFF" {
        return Err(parse_error(path, first_no, "missing OFF header"));
    }
    header.remove(0);
    let counts_line = if header.is_empty() {
        let (no, l) = lines.next().ok_or_else(|| parse_error(path, first_no, "missing counts"))?;
        (no, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (first_no, header)
    };
    let counts: Vec<usize> = parse_numbers(&counts_line.1, path, counts_line.0)?;
    if counts.len() < 2 {
        return Err(parse_error(path, counts_line.0, "expected vertex and face counts"));
    }
    let mut vertices = Vec::with_capacity(counts[0]);
    for _ in 0..counts[0] {
        let (no, l) = lines.next().ok_or_else(|| parse_error(path, counts_line.0, "truncated vertex list"))?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_error(path, no, "vertex needs three coordinates"));
        }
        let xyz: Vec<f64> = parse_numbers(&fields[..3], path, no)?;
        vertices.push([xyz[0], xyz[1], xyz[2]]);
    }
    let mut faces = Vec::with_capacity(counts[1]);
    for _ in 0..counts[1] {
        let (no, l) = lines.next().ok_or_else(|| parse_error(path, counts_line.0, "truncated face list"))?;
        let fields: Vec<usize> = parse_numbers(&l.split_whitespace().collect::<Vec<_>>(), path, no)?;
        let k = *fields.first().ok_or_else(|| parse_error(path, no, "empty face"))?;
        if k < 3 || fields.len() < k + 1 {
            return Err(parse_error(path, no, "face needs at least three vertex indices"));
        }
        faces.extend(fan(&fields[1..=k]));
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        let fields: Vec<&str> = line.split('#').next().unwrap_or("").split_whitespace().collect();
        match fields.first() {
            Some(&"v") => {
                if fields.len() < 4 {
                    return Err(parse_error(path, no, "vertex needs three coordinates"));
                }
                let xyz: Vec<f64> = parse_numbers(&fields[1..4], path, no)?;
                vertices.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some(&"f") => {
                let idx: Vec<&str> = fields[1..].iter().map(|f| f.split('/').next().unwrap_or("")).collect();
                let idx: Vec<usize> = parse_numbers(&idx, path, no)?;
                if idx.len() < 3 || idx.contains(&0) {
                    return Err(parse_error(path, no, "face needs at least three 1-based indices"));
                }
                let idx: Vec<usize> = idx.into_iter().map(|v| v - 1).collect();
                faces.extend(fan(&idx));
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

// Triangulates `rings` of vertices, ring 0 being the single center vertex.
// Each ring is listed counter-clockwise by angle.
fn ring_faces(rings: &[Vec<(usize, f64)>]) -> Vec<[usize; 3]> {
    let mut faces = Vec::new();
    let center = rings[0][0].0;
    let first = &rings[1];
    for k in 0..first.len() {
        faces.push([center, first[k].0, first[(k + 1) % first.len()].0]);
    }
    for pair in rings[1..].windows(2) {
        let (inner, outer) = (&pair[0], &pair[1]);
        let (ni, no) = (inner.len(), outer.len());
        let (mut i, mut o) = (0, 0);
        // Walk both rings by angle, always advancing the one whose next
        // vertex comes first.
        while i < ni || o < no {
            let next_i = inner[(i + 1) % ni].1 + if i + 1 >= ni { TAU } else { 0.0 };
            let next_o = outer[(o + 1) % no].1 + if o + 1 >= no { TAU } else { 0.0 };
            if o < no && (i >= ni || next_o <= next_i) {
                faces.push([inner[i % ni].0, outer[o].0, outer[(o + 1) % no].0]);
                o += 1;
            } else {
                faces.push([inner[i].0, outer[o % no].0, inner[(i + 1) % ni].0]);
                i += 1;
            }
        }
    }
    faces
}

fn ring_layout(levels: usize, position: impl Fn(usize, f64) -> Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut vertices = vec![position(0, 0.0)];
    let mut rings = vec![vec![(0, 0.0)]];
    for k in 1..=levels {
        let count = 6 * k;
        let ring = (0..count)
            .map(|j| {
                let angle = TAU * j as f64 / count as f64;
                vertices.push(position(k, angle));
                (vertices.len() - 1, angle)
            })
            .collect();
        rings.push(ring);
    }
    (vertices, ring_faces(&rings))
}

/// Flat unit disk in the `z = 0` plane: `levels` concentric rings of `6k`
/// vertices, boundary on the unit circle.
pub fn disk_mesh(levels: usize) -> Result<SurfaceMesh> {
    if levels == 0 {
        return Err(Error::InvalidParameter("disk mesh needs at least one ring".into()));
    }
    let (v, f) = ring_layout(levels, |k, a| {
        let r = k as f64 / levels as f64;
        [r * a.cos(), r * a.sin(), 0.0]
    });
    SurfaceMesh::new(v, f)
}

/// Upper unit hemisphere with rings equally spaced in polar angle; the
/// boundary is the equator.
pub fn hemisphere_mesh(levels: usize) -> Result<SurfaceMesh> {
    if levels == 0 {
        return Err(Error::InvalidParameter("hemisphere mesh needs at least one ring".into()));
    }
    let (v, f) = ring_layout(levels, |k, a| {
        let polar = FRAC_PI_2 * k as f64 / levels as f64;
        [polar.sin() * a.cos(), polar.sin() * a.sin(), polar.cos()]
    });
    SurfaceMesh::new(v, f)
}

/// Regular `n`-gon of unit circumradius split into a fan around its center.
pub fn fan_mesh(n: usize) -> Result<SurfaceMesh> {
    if n < 3 {
        return Err(Error::InvalidParameter("fan needs at least three sides".into()));
    }
    let mut vertices = vec![[0.0; 3]];
    vertices.extend((0..n).map(|j| {
        let a = TAU * j as f64 / n as f64;
        [a.cos(), a.sin(), 0.0]
    }));
    let faces = (0..n).map(|j| [0, 1 + j, 1 + (j + 1) % n]).collect();
    SurfaceMesh::new(vertices, faces)
}
