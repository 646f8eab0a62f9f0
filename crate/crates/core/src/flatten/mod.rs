//! Flattening of disk-type triangle meshes onto the unit disk.
//!
//! The map is the discrete harmonic map with cotangent weights, boundary
//! fixed to the unit circle by normalized arc length. One corrective pass
//! re-spaces the boundary by the local scale of the first map (edge length
//! times the square root of the adjacent face's area ratio) and solves again;
//! the pass is kept only when it lowers the mean quasi-conformal distortion.
//!
//! Vertex masses are barycentric one-ring areas over the total area, and the
//! density is `μ_i = m_i / A_flat(i) · (1 - |z_i|^2)^2`.

mod mesh;

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use mesh::{disk_mesh, fan_mesh, hemisphere_mesh, MeshFormat, SurfaceMesh, Vec3};
use mesh::{cross, dot, norm, sub};

use crate::density::{ConformalDensity, Sample, CLAMP_RADIUS};
use crate::error::{Error, Result};
use crate::hyperbolic::{median_center, DiskPoint, MobiusTransform};

/// Iteration cap of [`mobius_normalize`].
pub const NORMALIZE_MAX_ITERATIONS: usize = 10_000;

/// Per-face conformal distortion of the flattening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Ratio of singular values of each face's affine map, `≥ 1`.
    pub face_distortion: Vec<f64>,
    /// Area-weighted mean of `K - 1`.
    pub mean_distortion: f64,
    pub max_distortion: f64,
    /// Faces whose image has nonpositive signed area.
    pub flipped_faces: usize,
    pub boundary_corrected: bool,
}

#[derive(Clone, Debug)]
pub struct FlatteningResult {
    pub disk_positions: Vec<DiskPoint>,
    pub density: ConformalDensity,
    pub quality: QualityReport,
    /// Möbius map applied by [`mobius_normalize`], identity otherwise.
    pub normalization: MobiusTransform,
    faces: Vec<[usize; 3]>,
}

impl FlatteningResult {
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Flattened mesh with `z` embedded as `(x, y, 0)`.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for z in &self.disk_positions {
            out.push_str(&format!("v {} {} 0\n", z.re(), z.im()));
        }
        for f in &self.faces {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        out
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<SurfaceMesh> {
    SurfaceMesh::load(path, format)
}

fn cot(a: Vec3, b: Vec3, apex: Vec3) -> f64 {
    let (u, v) = (sub(a, apex), sub(b, apex));
    dot(u, v) / norm(cross(u, v))
}

// Dirichlet solve of the cotangent Laplacian for interior positions.
fn harmonic(mesh: &SurfaceMesh, boundary_positions: &[(usize, Complex64)]) -> Result<Vec<Complex64>> {
    let n = mesh.vertices().len();
    let mut pos = vec![Complex64::new(0.0, 0.0); n];
    let mut fixed = vec![false; n];
    for &(v, z) in boundary_positions {
        pos[v] = z;
        fixed[v] = true;
    }
    let mut index = vec![usize::MAX; n];
    let interior: Vec<usize> = (0..n).filter(|&v| !fixed[v]).collect();
    for (k, &v) in interior.iter().enumerate() {
        index[v] = k;
    }
    if interior.is_empty() {
        return Ok(pos);
    }

    let m = interior.len();
    let mut coo = CooMatrix::new(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 2);
    for face in mesh.faces() {
        let p = face.map(|v| mesh.vertices()[v]);
        for k in 0..3 {
            let (i, j, apex) = (face[(k + 1) % 3], face[(k + 2) % 3], k);
            let w = 0.5 * cot(p[(k + 1) % 3], p[(k + 2) % 3], p[apex]);
            for (a, b) in [(i, j), (j, i)] {
                if fixed[a] {
                    continue;
                }
                coo.push(index[a], index[a], w);
                if fixed[b] {
                    rhs[(index[a], 0)] += w * pos[b].re;
                    rhs[(index[a], 1)] += w * pos[b].im;
                } else {
                    coo.push(index[a], index[b], -w);
                }
            }
        }
    }
    let matrix = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&matrix).map_err(|e| Error::NoConvergence {
        what: format!("cotangent Laplacian factorization ({e:?})"),
        iterations: 0,
    })?;
    let sol = chol.solve(&rhs);
    for (k, &v) in interior.iter().enumerate() {
        pos[v] = Complex64::new(sol[(k, 0)], sol[(k, 1)]);
    }
    Ok(pos)
}

// Places the boundary loop on the circle with gaps proportional to `lengths`.
fn circle_positions(boundary: &[usize], lengths: &[f64]) -> Vec<(usize, Complex64)> {
    let total: f64 = lengths.iter().sum();
    let mut acc = 0.0;
    boundary
        .iter()
        .zip(lengths)
        .map(|(&v, &l)| {
            let z = Complex64::from_polar(1.0, TAU * acc / total);
            acc += l;
            (v, z)
        })
        .collect()
}

fn signed_area(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    0.5 * ((b - a).re * (c - a).im - (b - a).im * (c - a).re)
}

fn quality(mesh: &SurfaceMesh, pos: &[Complex64], boundary_corrected: bool) -> QualityReport {
    let mut face_distortion = Vec::with_capacity(mesh.faces().len());
    let (mut weighted, mut total, mut flipped) = (0.0, 0.0, 0);
    for (f, face) in mesh.faces().iter().enumerate() {
        let [p0, p1, p2] = face.map(|v| mesh.vertices()[v]);
        // Local orthonormal frame of the source triangle.
        let e1 = sub(p1, p0);
        let l1 = norm(e1);
        let x = e1.map(|c| c / l1);
        let e2 = sub(p2, p0);
        let n = cross(e1, e2);
        let y = cross(n, e1).map(|c| c / (norm(n) * l1));
        let src = [(l1, 0.0), (dot(e2, x), dot(e2, y))];
        let [q0, q1, q2] = face.map(|v| pos[v]);
        let dst = [q1 - q0, q2 - q0];
        // Jacobian J with J·src_k = dst_k.
        let det = src[0].0 * src[1].1 - src[0].1 * src[1].0;
        let inv = [[src[1].1 / det, -src[1].0 / det], [-src[0].1 / det, src[0].0 / det]];
        let j = [
            [dst[0].re * inv[0][0] + dst[1].re * inv[1][0], dst[0].re * inv[0][1] + dst[1].re * inv[1][1]],
            [dst[0].im * inv[0][0] + dst[1].im * inv[1][0], dst[0].im * inv[0][1] + dst[1].im * inv[1][1]],
        ];
        let frob = j[0][0].powi(2) + j[0][1].powi(2) + j[1][0].powi(2) + j[1][1].powi(2);
        let jdet = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let disc = (frob * frob - 4.0 * jdet * jdet).max(0.0).sqrt();
        let (s1, s2) = (((frob + disc) / 2.0).sqrt(), ((frob - disc) / 2.0).max(0.0).sqrt());
        let k = if s2 > 0.0 { s1 / s2 } else { f64::INFINITY };
        if signed_area(q0, q1, q2) <= 0.0 {
            flipped += 1;
        }
        let area = mesh.face_area(f);
        if k.is_finite() {
            weighted += area * (k - 1.0);
            total += area;
        }
        face_distortion.push(k);
    }
    QualityReport {
        mean_distortion: if total > 0.0 { weighted / total } else { f64::INFINITY },
        max_distortion: face_distortion.iter().copied().fold(1.0, f64::max),
        face_distortion,
        flipped_faces: flipped,
        boundary_corrected,
    }
}

fn density_from(mesh: &SurfaceMesh, pos: &[Complex64]) -> Result<ConformalDensity> {
    let areas = mesh.vertex_areas();
    let total: f64 = areas.iter().sum();
    let mut flat = vec![0.0; pos.len()];
    for face in mesh.faces() {
        let [a, b, c] = face.map(|v| pos[v]);
        let s = signed_area(a, b, c).abs() / 3.0;
        for &v in face {
            flat[v] += s;
        }
    }
    let samples = (0..pos.len())
        .map(|v| {
            let z = pos[v];
            let z = if z.norm() > CLAMP_RADIUS { z * (CLAMP_RADIUS / z.norm()) } else { z };
            let point = DiskPoint::from_complex(z)?;
            let mass = areas[v] / total;
            let mu = if flat[v] > 0.0 { mass / flat[v] * point.volume_factor().recip() } else { 0.0 };
            Ok(Sample { point, mu, mass })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = Map::new();
    meta.insert("source".into(), Value::from("mesh"));
    meta.insert("vertices".into(), Value::from(pos.len()));
    meta.insert("faces".into(), Value::from(mesh.faces().len()));
    ConformalDensity::new(samples, meta)
}

/// Flattens a disk-type mesh onto the unit disk.
pub fn flatten_to_disk(mesh: &SurfaceMesh) -> Result<FlatteningResult> {
    let boundary = mesh.boundary();
    let edge = |k: usize| norm(sub(mesh.vertices()[boundary[(k + 1) % boundary.len()]], mesh.vertices()[boundary[k]]));
    let lengths: Vec<f64> = (0..boundary.len()).map(edge).collect();
    let first = harmonic(mesh, &circle_positions(boundary, &lengths))?;
    let first_quality = quality(mesh, &first, false);

    // Local scale of the first map along each boundary edge.
    let mut edge_face = std::collections::HashMap::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            edge_face.insert((face[k], face[(k + 1) % 3]), f);
        }
    }
    let scaled: Vec<f64> = (0..boundary.len())
        .map(|k| {
            let f = edge_face[&(boundary[k], boundary[(k + 1) % boundary.len()])];
            let [a, b, c] = mesh.faces()[f].map(|v| first[v]);
            let ratio = signed_area(a, b, c).abs() / mesh.face_area(f);
            lengths[k] * ratio.sqrt()
        })
        .collect();
    let (pos, report) = match harmonic(mesh, &circle_positions(boundary, &scaled)) {
        Ok(second) => {
            let q = quality(mesh, &second, true);
            if q.mean_distortion < first_quality.mean_distortion {
                (second, q)
            } else {
                (first, first_quality)
            }
        }
        Err(_) => (first, first_quality),
    };

    let density = density_from(mesh, &pos)?;
    Ok(FlatteningResult {
        disk_positions: density.points(),
        density,
        quality: report,
        normalization: MobiusTransform::IDENTITY,
        faces: mesh.faces().to_vec(),
    })
}

/// Moves the mass-weighted hyperbolic median of the density to the origin.
pub fn mobius_normalize(result: &FlatteningResult) -> Result<FlatteningResult> {
    let density = &result.density;
    let center = median_center(&density.points(), &density.masses(), NORMALIZE_MAX_ITERATIONS)?;
    let m = MobiusTransform::to_origin(center);
    let moved = density.push_forward(&m);
    Ok(FlatteningResult {
        disk_positions: moved.points(),
        density: moved,
        quality: result.quality.clone(),
        normalization: m.compose(&result.normalization),
        faces: result.faces.clone(),
    })
}
