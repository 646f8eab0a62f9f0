//! Möbius-equivariant piecewise-linear interpolation of sampled densities.
//!
//! Samples are triangulated by the faces of the convex hull of their
//! hyperboloid lifts, which covers the geodesic convex hull of the samples.
//! Inside a triangle the value is the projective barycentric combination of
//! the vertex values computed on the hyperboloid, where disk isometries act
//! linearly; the weights therefore commute with every disk Möbius map.
//! Log-values are interpolated, so constants are reproduced exactly.
//! Outside the hull the value at the nearest hull point is damped by
//! `exp(-4 d)`, `d` the hyperbolic distance to it, so that the Euclidean
//! density `μ / (1 - |z|^2)^2` stays bounded near the circle. Sample sets
//! too small or too degenerate to triangulate fall back to a Shepard blend.

use delaunator::{triangulate, Point};
use num_complex::Complex64;

use crate::hyperbolic::{complex_distance, lift, minkowski};

const INSIDE_EPS: f64 = 1e-12;
const MIN_VALUE: f64 = 1e-300;

#[derive(Debug)]
pub(crate) struct Interpolant {
    points: Vec<Complex64>,
    lifts: Vec<[f64; 3]>,
    values: Vec<f64>,
    triangles: Vec<[usize; 3]>,
    inverses: Vec<[[f64; 3]; 3]>,
    grid: KleinGrid,
    edges: Vec<Edge>,
    lone_vertices: Vec<usize>,
}

#[derive(Debug)]
struct Edge {
    a: usize,
    b: usize,
    normal: [f64; 3],
    gram: f64,
}

#[derive(Debug)]
struct KleinGrid {
    size: usize,
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

impl KleinGrid {
    fn cell_coord(&self, x: f64) -> usize {
        let c = ((x + 1.0) * 0.5 * self.size as f64).floor();
        (c.max(0.0) as usize).min(self.size - 1)
    }

    fn candidates(&self, k: [f64; 2]) -> &[u32] {
        let cell = self.cell_coord(k[1]) * self.size + self.cell_coord(k[0]);
        &self.ids[self.offsets[cell] as usize..self.offsets[cell + 1] as usize]
    }
}

impl Interpolant {
    pub(crate) fn new(points: &[Complex64], values: &[f64]) -> Self {
        let lifts: Vec<[f64; 3]> = points.iter().map(|&z| lift(z)).collect();
        let triangles = invariant_triangulation(points);

        let inverses = triangles
            .iter()
            .map(|t| invert_columns(&lifts[t[0]], &lifts[t[1]], &lifts[t[2]]))
            .collect();

        let klein: Vec<[f64; 2]> = lifts.iter().map(|p| [p[0] / p[2], p[1] / p[2]]).collect();
        let size = ((2.0 * triangles.len() as f64).sqrt().ceil() as usize).clamp(4, 128);
        let mut buckets = vec![Vec::new(); size * size];
        let pad = 1e-9;
        let grid_stub = KleinGrid {
            size,
            offsets: Vec::new(),
            ids: Vec::new(),
        };
        for (id, t) in triangles.iter().enumerate() {
            let xs = t.map(|i| klein[i][0]);
            let ys = t.map(|i| klein[i][1]);
            let x0 = grid_stub.cell_coord(xs.iter().cloned().fold(f64::INFINITY, f64::min) - pad);
            let x1 = grid_stub.cell_coord(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad);
            let y0 = grid_stub.cell_coord(ys.iter().cloned().fold(f64::INFINITY, f64::min) - pad);
            let y1 = grid_stub.cell_coord(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    buckets[cy * size + cx].push(id as u32);
                }
            }
        }
        let mut offsets = Vec::with_capacity(size * size + 1);
        let mut ids = Vec::new();
        offsets.push(0);
        for b in &buckets {
            ids.extend_from_slice(b);
            offsets.push(ids.len() as u32);
        }

        let (edge_pairs, lone_vertices) = if triangles.is_empty() {
            (nearest_neighbor_edges(points), (0..points.len()).collect())
        } else {
            boundary_of(points.len(), &triangles)
        };
        let edges = edge_pairs
            .into_iter()
            .map(|(a, b)| {
                let (p, q) = (&lifts[a], &lifts[b]);
                let c = [
                    p[1] * q[2] - p[2] * q[1],
                    p[2] * q[0] - p[0] * q[2],
                    p[0] * q[1] - p[1] * q[0],
                ];
                let n = [c[0], c[1], -c[2]];
                let norm = minkowski(&n, &n).max(f64::MIN_POSITIVE).sqrt();
                Edge {
                    a,
                    b,
                    normal: [n[0] / norm, n[1] / norm, n[2] / norm],
                    gram: minkowski(p, q),
                }
            })
            .collect();

        Interpolant {
            points: points.to_vec(),
            lifts,
            values: values.iter().map(|v| v.max(MIN_VALUE).ln()).collect(),
            triangles,
            inverses,
            grid: KleinGrid { size, offsets, ids },
            edges,
            lone_vertices,
        }
    }
    #[cfg(test)]
    pub(crate) fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub(crate) fn evaluate(&self, z: Complex64) -> f64 {
        // zero samples are stored at the floor
        let v = self.evaluate_unfloored(z);
        if v <= MIN_VALUE * (1.0 + 1e-9) {
            0.0
        } else {
            v
        }
    }

    fn evaluate_unfloored(&self, z: Complex64) -> f64 {
        let x = lift(z);
        let k = [x[0] / x[2], x[1] / x[2]];
        for &id in self.grid.candidates(k) {
            let id = id as usize;
            let inv = &self.inverses[id];
            let b = [
                inv[0][0] * x[0] + inv[0][1] * x[1] + inv[0][2] * x[2],
                inv[1][0] * x[0] + inv[1][1] * x[1] + inv[1][2] * x[2],
                inv[2][0] * x[0] + inv[2][1] * x[1] + inv[2][2] * x[2],
            ];
            let sum = b[0] + b[1] + b[2];
            let eps = -INSIDE_EPS * sum.abs();
            if b[0] >= eps && b[1] >= eps && b[2] >= eps {
                let t = &self.triangles[id];
                return ((b[0] * self.values[t[0]] + b[1] * self.values[t[1]] + b[2] * self.values[t[2]]) / sum).exp();
            }
        }
        self.extend_outside(z, &x)
    }

    // The hull is geodesically convex, so the nearest hull point moves
    // continuously with `z`; its value is damped by the distance to it.
    fn extend_outside(&self, z: Complex64, x: &[f64; 3]) -> f64 {
        if self.triangles.is_empty() {
            return self.blend_outside(z, x);
        }
        let nearest = self
            .edges
            .iter()
            .map(|e| (self.edge_cosh(e, x), e))
            .min_by(|p, q| p.0.total_cmp(&q.0))
            .map(|(_, e)| e)
            .expect("a triangulation has boundary edges");
        let (dist, value) = self.edge_distance(nearest, z, x);
        (value - 2.0 * dist).exp()
    }

    // cosh of the distance from x to the segment, cheap and monotone
    fn edge_cosh(&self, e: &Edge, x: &[f64; 3]) -> f64 {
        let (p, q) = (&self.lifts[e.a], &self.lifts[e.b]);
        let s = minkowski(x, &e.normal);
        let c = (1.0 + s * s).sqrt();
        let foot = [
            (x[0] - s * e.normal[0]) / c,
            (x[1] - s * e.normal[1]) / c,
            (x[2] - s * e.normal[2]) / c,
        ];
        let (fa, fb) = (minkowski(&foot, p), minkowski(&foot, q));
        let g = e.gram;
        let alpha = (fa + g * fb) / (g * g - 1.0);
        let beta = g * alpha - fb;
        if alpha >= 0.0 && beta >= 0.0 {
            c
        } else {
            (-minkowski(x, p)).min(-minkowski(x, q))
        }
    }

    // Shepard blend over nearest-neighbor edges and all samples
    fn blend_outside(&self, z: Complex64, x: &[f64; 3]) -> f64 {
        let mut nearest = f64::INFINITY;
        let mut weight_sum = 0.0;
        let mut value_sum = 0.0;
        let mut push = |dist: f64, value: f64| -> bool {
            if dist <= 1e-13 {
                return true;
            }
            nearest = nearest.min(dist);
            let w = 1.0 / (dist * dist);
            weight_sum += w;
            value_sum += w * value;
            false
        };

        for e in &self.edges {
            let (dist, value) = self.edge_distance(e, z, x);
            if push(dist, value) {
                return value.exp();
            }
        }
        for &v in &self.lone_vertices {
            let dist = self.vertex_distance(v, z);
            if push(dist, self.values[v]) {
                return self.values[v].exp();
            }
        }
        if weight_sum == 0.0 {
            return 0.0;
        }
        // `nearest` is a curvature -1 distance, twice the disk distance
        (value_sum / weight_sum - 2.0 * nearest).exp()
    }

    // distance (curvature -1) from x to the geodesic segment and the
    // interpolated value at the closest point
    fn edge_distance(&self, e: &Edge, z: Complex64, x: &[f64; 3]) -> (f64, f64) {
        let (p, q) = (&self.lifts[e.a], &self.lifts[e.b]);
        let s = minkowski(x, &e.normal);
        let c = (1.0 + s * s).sqrt();
        let foot = [
            (x[0] - s * e.normal[0]) / c,
            (x[1] - s * e.normal[1]) / c,
            (x[2] - s * e.normal[2]) / c,
        ];
        let (fa, fb) = (minkowski(&foot, p), minkowski(&foot, q));
        let g = e.gram;
        let alpha = (fa + g * fb) / (g * g - 1.0);
        let beta = g * alpha - fb;
        if alpha >= 0.0 && beta >= 0.0 {
            let t = alpha + beta;
            let value = (alpha * self.values[e.a] + beta * self.values[e.b]) / t;
            (s.abs().asinh(), value)
        } else {
            let da = self.vertex_distance(e.a, z);
            let db = self.vertex_distance(e.b, z);
            if da <= db {
                (da, self.values[e.a])
            } else {
                (db, self.values[e.b])
            }
        }
    }
}

impl Interpolant {
    // curvature -1 distance, accurate near zero
    fn vertex_distance(&self, v: usize, z: Complex64) -> f64 {
        2.0 * complex_distance(self.points[v], z)
    }
}

fn nearest_neighbor_edges(points: &[Complex64]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (0..points.len())
        .filter_map(|i| {
            (0..points.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    complex_distance(points[i], points[a]).total_cmp(&complex_distance(points[i], points[b]))
                })
                .map(|j| (i.min(j), i.max(j)))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

// Triangulation whose triangles are the faces of the convex hull of the
// hyperboloid lifts that face the apex of the light cone. Linear isometries of
// the hyperboloid preserve it, so it is invariant under disk Möbius maps. In
// Klein coordinates `k = x/t` with heights `h = 1/t` these are the upper-hull
// faces, reached from the Klein Delaunay triangulation by Lawson flips.
fn invariant_triangulation(points: &[Complex64]) -> Vec<[usize; 3]> {
    if points.len() < 3 {
        return Vec::new();
    }
    let lifted: Vec<[f64; 3]> = points
        .iter()
        .map(|z| {
            let r2 = z.norm_sqr();
            let s = 2.0 / (1.0 + r2);
            [z.re * s, z.im * s, (1.0 - r2) / (1.0 + r2)]
        })
        .collect();
    let pts: Vec<Point> = lifted.iter().map(|p| Point { x: p[0], y: p[1] }).collect();
    let del = triangulate(&pts);
    if del.triangles.is_empty() {
        return Vec::new();
    }

    let count = del.triangles.len() / 3;
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(count);
    let mut nbrs: Vec<[usize; 3]> = Vec::with_capacity(count);
    for t in 0..count {
        let v = [del.triangles[3 * t], del.triangles[3 * t + 1], del.triangles[3 * t + 2]];
        // halfedge 3t+j runs v[j] -> v[j+1] and is opposite v[j+2]
        let mut n = [NONE; 3];
        for j in 0..3 {
            let h = del.halfedges[3 * t + j];
            n[(j + 2) % 3] = if h == delaunator::EMPTY { NONE } else { h / 3 };
        }
        tris.push(v);
        nbrs.push(n);
    }
    for t in 0..count {
        if orient2d(&lifted, tris[t]) < 0.0 {
            tris[t].swap(1, 2);
            nbrs[t].swap(1, 2);
        }
    }

    let mut stack: Vec<(usize, usize)> = (0..count).flat_map(|t| (0..3).map(move |k| (t, k))).collect();
    let mut budget = 50 * count * count.max(16);
    while let Some((t, k)) = stack.pop() {
        let u = nbrs[t][k];
        if u == NONE || budget == 0 {
            continue;
        }
        budget -= 1;
        let [a, b, c] = [tris[t][k], tris[t][(k + 1) % 3], tris[t][(k + 2) % 3]];
        let Some(j) = (0..3).find(|&j| tris[u][j] != b && tris[u][j] != c) else {
            continue;
        };
        let d = tris[u][j];
        if !above_plane(&lifted, [a, b, c], d) {
            continue;
        }
        // (a,b,c) + (d,c,b) -> (a,b,d) + (a,d,c)
        let idx = |tri: &[usize; 3], v: usize| tri.iter().position(|&x| x == v).expect("vertex of triangle");
        let t_opp_b = nbrs[t][idx(&tris[t], b)];
        let t_opp_c = nbrs[t][idx(&tris[t], c)];
        let u_opp_b = nbrs[u][idx(&tris[u], b)];
        let u_opp_c = nbrs[u][idx(&tris[u], c)];

        tris[t] = [a, b, d];
        nbrs[t] = [u_opp_c, u, t_opp_c];
        tris[u] = [a, d, c];
        nbrs[u] = [u_opp_b, t_opp_b, t];
        if u_opp_c != NONE {
            let p = nbrs[u_opp_c].iter().position(|&x| x == u).expect("adjacent");
            nbrs[u_opp_c][p] = t;
        }
        if t_opp_b != NONE {
            let p = nbrs[t_opp_b].iter().position(|&x| x == t).expect("adjacent");
            nbrs[t_opp_b][p] = u;
        }
        stack.extend([(t, 0), (t, 2), (u, 0), (u, 1)]);
    }
    tris
}

const NONE: usize = usize::MAX;

fn orient2d(p: &[[f64; 3]], t: [usize; 3]) -> f64 {
    let (a, b, c) = (&p[t[0]], &p[t[1]], &p[t[2]]);
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

// Whether lifted `d` lies above the plane through the lifted counterclockwise
// triangle `t`, i.e. the shared edge is not an upper-hull edge.
fn above_plane(p: &[[f64; 3]], t: [usize; 3], d: usize) -> bool {
    let d = &p[d];
    let row = |v: usize| [p[v][0] - d[0], p[v][1] - d[1], p[v][2] - d[2]];
    let (r0, r1, r2) = (row(t[0]), row(t[1]), row(t[2]));
    let det = r0[0] * (r1[1] * r2[2] - r1[2] * r2[1]) - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0])
        + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0]);
    det < -1e-15
}

// Edges used by exactly one triangle, and vertices used by none.
fn boundary_of(n: usize, triangles: &[[usize; 3]]) -> (Vec<(usize, usize)>, Vec<usize>) {
    use std::collections::BTreeMap;
    let mut count: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut covered = vec![false; n];
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
            covered[a] = true;
        }
    }
    let edges = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
    let lone = (0..n).filter(|&i| !covered[i]).collect();
    (edges, lone)
}

// Inverse of the matrix with columns p, q, r.
fn invert_columns(p: &[f64; 3], q: &[f64; 3], r: &[f64; 3]) -> [[f64; 3]; 3] {
    let m = nalgebra::Matrix3::new(p[0], q[0], r[0], p[1], q[1], r[1], p[2], q[2], r[2]);
    let inv = m.try_inverse().unwrap_or_else(nalgebra::Matrix3::zeros);
    [
        [inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]],
        [inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]],
        [inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{DiskPoint, MobiusTransform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn cloud(seed: u64, n: usize) -> (Vec<Complex64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(0.97 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..TAU)))
            .collect();
        let vals = pts.iter().map(|z| 1.0 + z.re + 0.5 * z.im * z.im).collect();
        (pts, vals)
    }

    #[test]
    fn exact_at_samples() {
        let (pts, vals) = cloud(1, 80);
        let f = Interpolant::new(&pts, &vals);
        assert!(f.triangle_count() > 0);
        for (z, v) in pts.iter().zip(&vals) {
            assert!((f.evaluate(*z) - v).abs() < 1e-9 * v.abs(), "{} vs {}", f.evaluate(*z), v);
        }
    }

    #[test]
    fn commutes_with_mobius_maps() {
        let (pts, vals) = cloud(2, 60);
        let f = Interpolant::new(&pts, &vals);
        let m = MobiusTransform::new(DiskPoint::new(0.3, -0.4).unwrap(), 1.1);
        let moved: Vec<Complex64> = pts.iter().map(|&z| m.apply_complex(z)).collect();
        let g = Interpolant::new(&moved, &vals);
        assert_eq!(f.triangle_count(), g.triangle_count());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let z = Complex64::from_polar(0.99 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..TAU));
            let a = f.evaluate(z);
            let b = g.evaluate(m.apply_complex(z));
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b} at {z}");
        }
    }

    #[test]
    fn linear_in_hyperboloid_coordinates_is_reproduced_inside() {
        // f = <X, c> is exactly representable by projective barycentrics only
        // up to normalization, so check the constant instead
        let (pts, _) = cloud(3, 50);
        let f = Interpolant::new(&pts, &vec![2.5; pts.len()]);
        let mut inside = 0;
        for k in 0..200 {
            let z = Complex64::from_polar(0.5 * (k as f64 / 200.0), k as f64);
            let v = f.evaluate(z);
            if (v - 2.5).abs() < 1e-12 {
                inside += 1;
            }
        }
        assert_eq!(inside, 200);
    }

    #[test]
    fn decays_towards_the_circle() {
        let (pts, _) = cloud(4, 40);
        let pts: Vec<Complex64> = pts.into_iter().map(|z| z * 0.5).collect();
        let f = Interpolant::new(&pts, &vec![1.0; pts.len()]);
        let mut prev = f64::INFINITY;
        for r in [0.7, 0.9, 0.99, 0.999] {
            let v = f.evaluate(Complex64::new(r, 0.0));
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
        assert!(prev / (1.0 - 0.999f64 * 0.999).powi(2) < 50.0);
    }

    #[test]
    fn handles_tiny_sample_sets() {
        let one = Interpolant::new(&[Complex64::new(0.1, 0.2)], &[3.0]);
        assert!((one.evaluate(Complex64::new(0.1, 0.2)) - 3.0).abs() < 1e-14);
        assert!(one.evaluate(Complex64::new(0.5, 0.2)) < 3.0);

        let two = Interpolant::new(&[Complex64::new(-0.2, 0.0), Complex64::new(0.2, 0.0)], &[1.0, 2.0]);
        // geometric mean of the endpoint values
        let mid = two.evaluate(Complex64::new(0.0, 0.0));
        assert!((mid - 2f64.sqrt()).abs() < 1e-12, "{mid}");
    }
}
