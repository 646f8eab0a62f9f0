//! The Möbius-invariant local cost `d^R_{μ,ν}(z0, w0)`.
//!
//! For the one-parameter family `m_σ` of disk maps sending `z0` to `w0`,
//!
//! ```text
//! Φ(σ) = ∫_{Ω_{z0,R}} |μ(z) - ν(m_σ(z))| dvol_H(z)
//! ```
//!
//! and the local cost is `min_σ Φ(σ)`. Writing `m_σ = T_{w0} ∘ rot(σ) ∘ T_{z0}^{-1}`
//! with `T_p` the isometry taking `0` to `p`, the integral becomes a sum over
//! quadrature nodes `u` of the centered disk: `|μ(T_{z0} u) - ν(T_{w0}(σ u))|`.
//! The rule is oriented at each point by a frame derived from the samples,
//! so that the computed value is exactly invariant under disk isometries.
//! Density values are computed once per point on a fine angular lattice:
//! rotations by multiples of the node spacing are index shifts, and the
//! refinement of `σ` reads rotated values off the lattice before a final
//! exact evaluation.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::ConformalDensity;
use crate::error::{Error, Result};
use crate::hyperbolic::{DiskPoint, DiskQuadrature, MobiusTransform, DEFAULT_ANGULAR_NODES, DEFAULT_RADIAL_NODES};

/// Parameters of the local cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Hyperbolic radius of the neighborhoods.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Number of coarse samples of `σ` on the circle.
    pub sigma_grid: usize,
    /// Golden-section stop width on `arg σ`, radians.
    pub refine_tol: f64,
    pub quad_radial: usize,
    pub quad_angular: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            radius: 1.0,
            sigma_grid: 48,
            refine_tol: 1e-4,
            quad_radial: DEFAULT_RADIAL_NODES,
            quad_angular: DEFAULT_ANGULAR_NODES,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("R must be positive, got {}", self.radius)));
        }
        if self.sigma_grid < 8 {
            return Err(Error::InvalidParameter(format!("sigma_grid must be at least 8, got {}", self.sigma_grid)));
        }
        if !(self.refine_tol > 0.0 && self.refine_tol < TAU / self.sigma_grid as f64) {
            return Err(Error::InvalidParameter(format!(
                "refine_tol must lie in (0, 2π/sigma_grid), got {}",
                self.refine_tol
            )));
        }
        if self.quad_radial == 0 || self.quad_angular == 0 {
            return Err(Error::InvalidParameter("quadrature node counts must be positive".into()));
        }
        Ok(())
    }

    /// The quadrature rule on `Ω_{0,R}`.
    pub fn quadrature(&self) -> Result<DiskQuadrature> {
        self.validate()?;
        DiskQuadrature::new(self.radius, self.quad_radial, self.quad_angular)
    }
}

/// Minimum of `Φ` and the unit complex attaining it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalCost {
    pub value: f64,
    pub sigma: Complex64,
}

impl LocalCost {
    /// The optimal map `m_σ*`, sending `z0` to `w0`.
    pub fn mobius(&self, z0: DiskPoint, w0: DiskPoint) -> MobiusTransform {
        MobiusTransform::interpolating(z0, w0, self.sigma).expect("sigma is unit")
    }
}

/// Dense matrix of local costs between two point sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub values: Vec<Vec<f64>>,
    pub row_points: Vec<DiskPoint>,
    pub col_points: Vec<DiskPoint>,
    pub config: CostConfig,
    /// `σ*` per entry as `[re, im]`.
    pub argmin_sigma: Vec<Vec<[f64; 2]>>,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.col_points.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Values only, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Orientation of the quadrature rule at `center`: the direction of the
/// mass-weighted first moment of the samples seen from `center`, with weights
/// `exp(-(d/R)^2)`. Disk isometries carry it along, so a rule placed in this
/// frame is evaluated at corresponding points for every copy of a density.
fn frame(density: &ConformalDensity, center: DiskPoint, radius: f64) -> MobiusTransform {
    let to_center = MobiusTransform::to_origin(center);
    let moment: Complex64 = density
        .samples()
        .iter()
        .map(|s| {
            let u = to_center.apply_complex(s.point.to_complex());
            let d = u.norm().atanh() / radius;
            u * (s.mass * (-d * d).exp())
        })
        .sum();
    let angle = if moment.norm() > 1e-300 { moment.arg() } else { 0.0 };
    MobiusTransform::from_origin(center).compose(&MobiusTransform::rotation(angle))
}

// Angular subdivision of the lattice used while refining `σ`.
const LATTICE: usize = 8;

// One endpoint of a local comparison: density, oriented frame, and density
// values on the rings of the rule at `LATTICE` times its angular resolution
// (ring-major; every `LATTICE`-th entry is a node of the rule).
struct Side<'a> {
    density: &'a ConformalDensity,
    frame: MobiusTransform,
    lattice: Vec<f64>,
    nodes: Vec<f64>,
}

impl<'a> Side<'a> {
    fn new(density: &'a ConformalDensity, center: DiskPoint, cfg: &CostConfig, quad: &DiskQuadrature) -> Self {
        let frame = frame(density, center, cfg.radius);
        let k = quad.angular();
        let step = Complex64::from_polar(1.0, TAU / (k * LATTICE) as f64);
        let mut lattice = Vec::with_capacity(quad.len() * LATTICE);
        for l in 0..quad.radial() {
            let mut u = quad.nodes()[l * k];
            for _ in 0..k * LATTICE {
                lattice.push(density.evaluate_complex(frame.apply_complex(u)));
                u *= step;
            }
        }
        let nodes = lattice.iter().step_by(LATTICE).copied().collect();
        Side { density, frame, lattice, nodes }
    }

    fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    // linear interpolation on ring `l` at lattice position `pos`
    fn at(&self, l: usize, pos: f64, ring_len: usize) -> f64 {
        let ring = &self.lattice[l * ring_len..(l + 1) * ring_len];
        let f = pos.floor();
        let t = pos - f;
        let i = (f as usize) % ring_len;
        ring[i] * (1.0 - t) + ring[(i + 1) % ring_len] * t
    }
}

// Φ with the two-sided rule: the mean of the rule placed at `z0` and the rule
// placed at `w0`, which makes `Φ_{μ,ν}(σ) = Φ_{ν,μ}(conj σ)` exact.
struct Pair<'a, 'b> {
    quad: &'b DiskQuadrature,
    cfg: &'b CostConfig,
    row: &'b Side<'a>,
    col: &'b Side<'a>,
}

impl Pair<'_, '_> {
    // Φ at σ = exp(2πi shift / angular); both rules coincide there
    fn shifted(&self, shift: usize) -> f64 {
        let k = self.quad.angular();
        let mut total = 0.0;
        for (l, w) in self.quad.ring_weights().iter().enumerate() {
            let (a, b) = (&self.row.nodes[l * k..(l + 1) * k], &self.col.nodes[l * k..(l + 1) * k]);
            let (b_head, b_tail) = b.split_at(shift);
            let ring: f64 = a
                .iter()
                .zip(b_tail.iter().chain(b_head))
                .map(|(x, y)| (x - y).abs())
                .sum();
            total += w * ring;
        }
        total
    }

    // Φ with rotated values read off the lattices
    fn interpolated(&self, angle: f64) -> f64 {
        let k = self.quad.angular();
        let ring_len = k * LATTICE;
        let offset = (angle / TAU).rem_euclid(1.0) * ring_len as f64;
        let mut total = 0.0;
        for (l, w) in self.quad.ring_weights().iter().enumerate() {
            let mut ring = 0.0;
            for j in 0..k {
                let base = (j * LATTICE) as f64;
                let nu = self.col.at(l, base + offset, ring_len);
                let mu = self.row.at(l, base + ring_len as f64 - offset, ring_len);
                ring += (self.row.node(l * k + j) - nu).abs() + (mu - self.col.node(l * k + j)).abs();
            }
            total += w * ring;
        }
        0.5 * total
    }

    fn direct(&self, angle: f64) -> f64 {
        let sigma = Complex64::from_polar(1.0, angle);
        let (row, col) = (self.row, self.col);
        let sum: f64 = self
            .quad
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let nu = col.density.evaluate_complex(col.frame.apply_complex(sigma * u));
                let mu = row.density.evaluate_complex(row.frame.apply_complex(sigma.conj() * u));
                self.quad.weight(i) * ((row.node(i) - nu).abs() + (mu - col.node(i)).abs())
            })
            .sum();
        0.5 * sum
    }

    // Grid search, golden-section refinement on the lattice, and one exact
    // evaluation at the refined angle. Returns the angle relative to the
    // frames and `Φ` there.
    fn minimize(&self) -> (f64, f64) {
        let g = self.cfg.sigma_grid;
        let k = self.quad.angular();
        let h = TAU / g as f64;
        let grid: Vec<f64> = if k % g == 0 {
            (0..g).map(|s| self.shifted(s * (k / g))).collect()
        } else {
            (0..g).map(|s| self.direct(h * s as f64)).collect()
        };
        let (best, &best_value) = grid
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("grid is nonempty");

        let center = h * best as f64;
        let (angle, _) = golden_section(|t| self.interpolated(t), center - h, center + h, self.cfg.refine_tol);
        let value = self.direct(angle);
        if value < best_value {
            (angle, value)
        } else {
            (center, best_value)
        }
    }

    fn local_cost(&self) -> LocalCost {
        let (angle, value) = self.minimize();
        LocalCost {
            value,
            sigma: self.family_sigma(Complex64::from_polar(1.0, angle)),
        }
    }

    // interpolating-family `σ` of `frame_col ∘ rot(relative) ∘ frame_row⁻¹`
    fn family_sigma(&self, relative: Complex64) -> Complex64 {
        relative * Complex64::from_polar(1.0, self.col.frame.theta() - self.row.frame.theta())
    }
}

fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `d^R_{μ,ν}(z0, w0)` with the minimizing `σ`.
pub fn local_cost(
    mu: &ConformalDensity,
    nu: &ConformalDensity,
    z0: DiskPoint,
    w0: DiskPoint,
    cfg: &CostConfig,
) -> Result<LocalCost> {
    let quad = cfg.quadrature()?;
    let (row, col) = (Side::new(mu, z0, cfg, &quad), Side::new(nu, w0, cfg, &quad));
    Ok(Pair { quad: &quad, cfg, row: &row, col: &col }.local_cost())
}

/// `Φ(σ)` for a single member `σ` of the interpolating family.
pub fn local_cost_at(
    mu: &ConformalDensity,
    nu: &ConformalDensity,
    z0: DiskPoint,
    w0: DiskPoint,
    sigma: Complex64,
    cfg: &CostConfig,
) -> Result<f64> {
    let quad = cfg.quadrature()?;
    let (row, col) = (Side::new(mu, z0, cfg, &quad), Side::new(nu, w0, cfg, &quad));
    let pair = Pair { quad: &quad, cfg, row: &row, col: &col };
    Ok(pair.direct(sigma.arg() - (pair.family_sigma(Complex64::new(1.0, 0.0))).arg()))
}

/// `Φ(σ)` through the tensor-norm form `∫ |1 - ν(m(z))/μ(z)| μ(z) dvol_H`,
/// evaluating `m` by its `(a, θ)` parameters on the same two-sided rule.
/// Requires `μ > 0` on the disk.
pub fn local_cost_invariant_form(
    mu: &ConformalDensity,
    nu: &ConformalDensity,
    z0: DiskPoint,
    w0: DiskPoint,
    sigma: Complex64,
    cfg: &CostConfig,
) -> Result<f64> {
    let quad = cfg.quadrature()?;
    let m = MobiusTransform::interpolating(z0, w0, sigma)?;
    let m_inv = m.inverse();
    let (frame_z, frame_w) = (frame(mu, z0, cfg.radius), frame(nu, w0, cfg.radius));
    let term = |z: Complex64| -> Result<f64> {
        let mz = mu.evaluate_complex(z);
        if mz <= 0.0 {
            return Err(Error::InvalidInput(format!("density vanishes at {z}")));
        }
        Ok((1.0 - nu.evaluate_complex(m.apply_complex(z)) / mz).abs() * mz)
    };
    let mut total = 0.0;
    for (i, &u) in quad.nodes().iter().enumerate() {
        let from_z = term(frame_z.apply_complex(u))?;
        let from_w = term(m_inv.apply_complex(frame_w.apply_complex(u)))?;
        total += quad.weight(i) * (from_z + from_w);
    }
    Ok(0.5 * total)
}

/// Entry `(i, j)` is `d^R_{μ,ν}(rows[i], cols[j])`. Entries are computed in
/// parallel and are independent of scheduling.
pub fn cost_matrix(
    mu: &ConformalDensity,
    nu: &ConformalDensity,
    rows: &[DiskPoint],
    cols: &[DiskPoint],
    cfg: &CostConfig,
) -> Result<CostMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidInput("cost matrix needs nonempty point sets".into()));
    }
    let quad = cfg.quadrature()?;
    let row_sides: Vec<Side> = rows.par_iter().map(|&z| Side::new(mu, z, cfg, &quad)).collect();
    let col_sides: Vec<Side> = cols.par_iter().map(|&w| Side::new(nu, w, cfg, &quad)).collect();

    let m = cols.len();
    let entries: Vec<LocalCost> = (0..rows.len() * m)
        .into_par_iter()
        .map(|e| {
            Pair {
                quad: &quad,
                cfg,
                row: &row_sides[e / m],
                col: &col_sides[e % m],
            }
            .local_cost()
        })
        .collect();

    Ok(CostMatrix {
        values: entries.chunks(m).map(|r| r.iter().map(|c| c.value).collect()).collect(),
        argmin_sigma: entries.chunks(m).map(|r| r.iter().map(|c| [c.sigma.re, c.sigma.im]).collect()).collect(),
        row_points: rows.to_vec(),
        col_points: cols.to_vec(),
        config: *cfg,
    })
}

/// Limit of `d^R_{ξ,ζ}(z_k, w')` as `z_k` tends to the circle:
/// `∫_{Ω_{0,R}} ζ((w + w')/(1 + conj(w') w)) dvol_H(w)`.
pub fn boundary_limit_cost(w_prime: DiskPoint, zeta: &ConformalDensity, cfg: &CostConfig) -> Result<f64> {
    let quad = cfg.quadrature()?;
    Ok(quad.integrate(w_prime, |w| zeta.evaluate(w).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{synthesize, Generator, Sample};
    use crate::hyperbolic::hyperbolic_disk_volume;
    use serde_json::Map;

    fn constant(c: f64) -> ConformalDensity {
        // enough samples for the hull to contain Ω_{0,1}
        let d = synthesize(&Generator::FlatDisk, 256, 1).unwrap();
        let samples = d.samples().iter().map(|s| Sample { mu: c, ..*s }).collect();
        ConformalDensity::new(samples, Map::new()).unwrap()
    }

    #[test]
    fn golden_section_finds_a_v_shaped_minimum() {
        let (x, v) = golden_section(|t| (t - 0.3).abs(), 0.0, 1.0, 1e-8);
        assert!((x - 0.3).abs() < 1e-8 && v < 1e-8);
    }

    #[test]
    fn identical_densities_and_points_cost_nothing() {
        let mu = synthesize(&Generator::MultiBump { bumps: 3 }, 64, 3).unwrap();
        let z = DiskPoint::new(0.2, -0.1).unwrap();
        let c = local_cost(&mu, &mu, z, z, &CostConfig::default()).unwrap();
        assert!(c.value < 1e-12, "{}", c.value);
        assert!((c.sigma - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn constants_give_the_neighborhood_volume() {
        // inside the sample hull both constants are exact
        let cfg = CostConfig::default();
        let c = local_cost(&constant(1.0), &constant(2.0), DiskPoint::ORIGIN, DiskPoint::ORIGIN, &cfg).unwrap();
        let vol = hyperbolic_disk_volume(1.0);
        assert!((c.value - vol).abs() < 1e-6 * vol, "{} vs {vol}", c.value);
    }

    #[test]
    fn shifted_and_direct_paths_agree_on_grid_angles() {
        let mu = synthesize(&Generator::MultiBump { bumps: 3 }, 64, 4).unwrap();
        let nu = synthesize(&Generator::MultiBump { bumps: 2 }, 64, 5).unwrap();
        let cfg = CostConfig::default();
        let quad = cfg.quadrature().unwrap();
        let (z, w) = (DiskPoint::new(0.1, 0.3).unwrap(), DiskPoint::new(-0.4, 0.05).unwrap());
        let (row, col) = (Side::new(&mu, z, &cfg, &quad), Side::new(&nu, w, &cfg, &quad));
        let pair = Pair { quad: &quad, cfg: &cfg, row: &row, col: &col };
        for s in [0, 1, 7, 30] {
            let angle = TAU * s as f64 / quad.angular() as f64;
            assert!((pair.shifted(s) - pair.direct(angle)).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_follows_isometries() {
        let mu = synthesize(&Generator::MultiBump { bumps: 3 }, 64, 4).unwrap();
        let g = MobiusTransform::new(DiskPoint::new(0.3, -0.2).unwrap(), 2.0);
        let z = DiskPoint::new(0.1, 0.5).unwrap();
        let f = frame(&mu, z, 1.0);
        let h = frame(&mu.push_forward(&g), g.apply(z), 1.0);
        assert!(g.compose(&f).parameter_distance(&h) < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(CostConfig::default().validate().is_ok());
        assert!(CostConfig { radius: 0.0, ..Default::default() }.validate().is_err());
        assert!(CostConfig { sigma_grid: 4, ..Default::default() }.validate().is_err());
        assert!(CostConfig { refine_tol: 0.2, ..Default::default() }.validate().is_err());
        assert!(CostConfig { quad_angular: 0, ..Default::default() }.validate().is_err());
        let c: CostConfig = serde_json::from_str(r#"{"R": 0.5}"#).unwrap();
        assert_eq!(c.radius, 0.5);
        assert_eq!(c.sigma_grid, 48);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let mu = constant(0.5);
        let pts = [DiskPoint::ORIGIN, DiskPoint::new(0.1, 0.0).unwrap()];
        let cm = cost_matrix(&mu, &mu, &pts, &pts[..1], &CostConfig::default()).unwrap();
        assert_eq!(cm.to_csv().lines().count(), 2);
        assert_eq!(cm.cols(), 1);
        let back: CostMatrix = serde_json::from_str(&cm.to_json().unwrap()).unwrap();
        assert_eq!(back, cm);
    }
}
