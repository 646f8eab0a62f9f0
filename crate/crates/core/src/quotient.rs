//! The conformal Wasserstein distance
//!
//! ```text
//! D(μ, ν) = min_m  min_π Σ π_ij d_H(m(z_i), w_j)
//! ```
//!
//! over disk Möbius maps `m`, and a heuristic scan for approximate
//! self-isometries.
//!
//! Both densities are first moved to a canonical chart: the Riemannian
//! barycenter of the samples goes to the origin and the principal axis of
//! their second moment to the real axis. Isometries carry the chart along, so
//! the search starts from the same configuration for every copy of a density.
//! In that chart a polar grid over `(a, θ)` with `|a| ≤ a_max` is evaluated
//! in parallel and the best candidates are refined by Nelder–Mead.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::ConformalDensity;
use crate::error::{Error, Result};
use crate::hyperbolic::{
    barycenter, hyperbolic_disk_volume, hyperbolic_distance, log_origin, DiskPoint, DiskQuadrature, MobiusTransform,
    DEFAULT_ANGULAR_NODES, DEFAULT_RADIAL_NODES,
};
use crate::transport::{solve_transport, support, TransportPlan, TransportProblem};

/// Tolerance used when comparing quotient distances, in units of hyperbolic
/// distance.
pub const QUOTIENT_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuotientConfig {
    /// Radial levels of the grid over `a` (besides `a = 0`).
    pub a_grid: usize,
    /// Angular positions of `a` per radial level.
    pub a_angular: usize,
    pub theta_grid: usize,
    /// Largest `|a|` on the grid.
    pub a_max: f64,
    /// Grid candidates refined by Nelder–Mead.
    pub refine_top: usize,
    pub max_iterations: usize,
    /// Stop when the simplex values agree to this.
    pub refine_tol: f64,
    /// Support points per density for each transport solve.
    pub ot_points: usize,
}

impl Default for QuotientConfig {
    fn default() -> Self {
        QuotientConfig {
            a_grid: 8,
            a_angular: 16,
            theta_grid: 16,
            a_max: 0.9,
            refine_top: 3,
            max_iterations: 400,
            refine_tol: 1e-10,
            ot_points: 64,
        }
    }
}

impl QuotientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_grid == 0 || self.a_angular == 0 || self.theta_grid == 0 || self.ot_points == 0 {
            return Err(Error::InvalidParameter("grid resolutions and ot_points must be positive".into()));
        }
        if !(self.a_max > 0.0 && self.a_max < 1.0) {
            return Err(Error::InvalidParameter(format!("a_max must lie in (0, 1), got {}", self.a_max)));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::InvalidParameter("refine_tol must be positive".into()));
        }
        Ok(())
    }

    /// Grid candidates, identity first.
    pub fn grid(&self) -> Vec<MobiusTransform> {
        let thetas = (0..self.theta_grid).map(|t| TAU * t as f64 / self.theta_grid as f64);
        let mut out: Vec<MobiusTransform> = thetas.clone().map(|t| MobiusTransform::new(DiskPoint::ORIGIN, t)).collect();
        for r in 1..=self.a_grid {
            let radius = self.a_max * r as f64 / self.a_grid as f64;
            for k in 0..self.a_angular {
                let a = DiskPoint::from_polar(radius, TAU * k as f64 / self.a_angular as f64).expect("a_max < 1");
                out.extend(thetas.clone().map(|t| MobiusTransform::new(a, t)));
            }
        }
        out
    }
}

/// One evaluated map of the search, in the original coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub m: MobiusTransform,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientResult {
    pub distance: f64,
    /// Optimal map, sending `μ`'s samples towards `ν`'s.
    pub m_star: MobiusTransform,
    pub plan: TransportPlan,
    pub row_support: Vec<usize>,
    pub col_support: Vec<usize>,
    pub search_trace: Vec<TraceEntry>,
}

/// Chart sending the density to its canonical position.
pub fn canonical_chart(density: &ConformalDensity) -> Result<MobiusTransform> {
    let points = density.points();
    let masses = density.masses();
    let center = barycenter(&points, &masses)?;
    let to_center = MobiusTransform::to_origin(center);
    let logs: Vec<Complex64> = points.iter().map(|z| log_origin(to_center.apply_complex(z.to_complex()))).collect();
    let moment = |k: i32| -> Complex64 { logs.iter().zip(&masses).map(|(v, w)| v.powi(k) * *w).sum() };
    let second = moment(2);
    let mut angle = if second.norm() > 1e-300 { 0.5 * second.arg() } else { 0.0 };
    // the axis fixes the angle up to π; the third moment picks the half
    if (moment(3) * Complex64::from_polar(1.0, -3.0 * angle)).re < 0.0 {
        angle += std::f64::consts::PI;
    }
    Ok(MobiusTransform::rotation(-angle).compose(&to_center))
}

// Transport objective between the moved row points and the column points.
struct Objective {
    rows: Vec<DiskPoint>,
    cols: Vec<DiskPoint>,
    row_masses: Vec<f64>,
    col_masses: Vec<f64>,
}

impl Objective {
    fn cost(&self, m: &MobiusTransform) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|&z| {
                let mz = m.apply(z);
                self.cols.iter().map(|&w| hyperbolic_distance(mz, w)).collect()
            })
            .collect()
    }

    fn solve(&self, m: &MobiusTransform) -> Result<TransportPlan> {
        let problem = TransportProblem::new(self.cost(m), self.row_masses.clone(), self.col_masses.clone())?;
        solve_transport(&problem)
    }

    fn value(&self, m: &MobiusTransform) -> f64 {
        self.solve(m).map_or(f64::INFINITY, |p| p.objective)
    }
}

fn to_params(m: &MobiusTransform) -> [f64; 3] {
    [m.a().re(), m.a().im(), m.theta()]
}

fn from_params(p: &[f64; 3]) -> Option<MobiusTransform> {
    let a = DiskPoint::new(p[0], p[1]).ok()?;
    (a.norm() < 0.999).then(|| MobiusTransform::new(a, p[2]))
}

// Nelder–Mead on (Re a, Im a, θ); never returns a value above the start.
fn nelder_mead<F: FnMut(&[f64; 3]) -> f64>(
    mut f: F,
    start: [f64; 3],
    step: [f64; 3],
    max_iterations: usize,
    tol: f64,
    trace: &mut Vec<([f64; 3], f64)>,
) -> ([f64; 3], f64) {
    let mut eval = |p: &[f64; 3], trace: &mut Vec<([f64; 3], f64)>| {
        let v = f(p);
        trace.push((*p, v));
        v
    };
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, eval(&start, trace)));
    for k in 0..3 {
        let mut p = start;
        p[k] += step[k];
        simplex.push((p, eval(&p, trace)));
    }
    let combine = |a: &[f64; 3], b: &[f64; 3], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
    for _ in 0..max_iterations {
        simplex.sort_by(|x, y| x.1.total_cmp(&y.1));
        if (simplex[3].1 - simplex[0].1).abs() <= tol {
            break;
        }
        let mut centroid = [0.0; 3];
        for (p, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += p[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflected = combine(&centroid, &worst.0, -1.0);
        let fr = eval(&reflected, trace);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst.0, -2.0);
            let fe = eval(&expanded, trace);
            simplex[3] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                combine(&centroid, &reflected, 0.5)
            } else {
                combine(&centroid, &worst.0, 0.5)
            };
            let fc = eval(&contracted, trace);
            if fc < worst.1.min(fr) {
                simplex[3] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for vertex in simplex.iter_mut().skip(1) {
                    let p = combine(&best, &vertex.0, 0.5);
                    *vertex = (p, eval(&p, trace));
                }
            }
        }
    }
    simplex.sort_by(|x, y| x.1.total_cmp(&y.1));
    simplex[0]
}

/// Quotient distance between `μ` and `ν` under the hyperbolic ground cost.
pub fn quotient_distance(mu: &ConformalDensity, nu: &ConformalDensity, cfg: &QuotientConfig) -> Result<QuotientResult> {
    cfg.validate()?;
    let chart_mu = canonical_chart(mu)?;
    let chart_nu = canonical_chart(nu)?;
    let (row_support, row_masses) = support(mu, cfg.ot_points)?;
    let (col_support, col_masses) = support(nu, cfg.ot_points)?;
    let objective = Objective {
        rows: row_support.iter().map(|&i| chart_mu.apply(mu.samples()[i].point)).collect(),
        cols: col_support.iter().map(|&j| chart_nu.apply(nu.samples()[j].point)).collect(),
        row_masses,
        col_masses,
    };

    let grid = cfg.grid();
    let values: Vec<f64> = grid.par_iter().map(|m| objective.value(m)).collect();
    let mut trace: Vec<(MobiusTransform, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let step = [
        0.5 * cfg.a_max / cfg.a_grid as f64,
        0.5 * cfg.a_max / cfg.a_grid as f64,
        0.5 * TAU / cfg.theta_grid as f64,
    ];
    let mut best = (grid[order[0]], values[order[0]]);
    for &start in order.iter().take(cfg.refine_top.max(1)) {
        let mut steps = Vec::new();
        let (p, v) = nelder_mead(
            |p| from_params(p).map_or(f64::INFINITY, |m| objective.value(&m)),
            to_params(&grid[start]),
            step,
            cfg.max_iterations,
            cfg.refine_tol,
            &mut steps,
        );
        trace.extend(steps.into_iter().filter_map(|(p, v)| from_params(&p).map(|m| (m, v))));
        if v < best.1 {
            best = (from_params(&p).expect("finite value implies a valid map"), v);
        }
    }

    let plan = objective.solve(&best.0)?;
    let to_original = |m: &MobiusTransform| chart_nu.inverse().compose(m).compose(&chart_mu);
    Ok(QuotientResult {
        distance: plan.objective,
        m_star: to_original(&best.0),
        plan,
        row_support,
        col_support,
        search_trace: trace
            .iter()
            .map(|(m, value)| TraceEntry { m: to_original(m), value: *value })
            .collect(),
    })
}

/// A map of the scan with its residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfFit {
    pub center: DiskPoint,
    pub m: MobiusTransform,
    /// `∫_{Ω_{center,R}} |μ - μ∘m| dvol_H`.
    pub residual: f64,
    pub is_identity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfFitReport {
    pub radius: f64,
    pub threshold: f64,
    /// Identity at each center, and every non-identity map below threshold.
    pub entries: Vec<SelfFit>,
}

impl SelfFitReport {
    /// Non-identity maps below the threshold.
    pub fn flagged(&self) -> impl Iterator<Item = &SelfFit> {
        self.entries.iter().filter(|e| !e.is_identity)
    }
}

/// Default flagging threshold: `1e-3 · Vol_H(Ω_{0,R})`.
pub fn default_self_fit_threshold(radius: f64) -> f64 {
    1e-3 * hyperbolic_disk_volume(radius)
}

/// Scans the grid of `cfg` for maps `m` that nearly preserve `μ` on
/// `Ω_{z0,R}`, with `z0` the origin and eight points at radius 0.4.
/// Heuristic: a diagnostic, not a decision procedure.
pub fn self_fittability_scan(mu: &ConformalDensity, radius: f64, cfg: &QuotientConfig) -> Result<SelfFitReport> {
    self_fittability_scan_with(mu, radius, cfg, default_self_fit_threshold(radius))
}

pub fn self_fittability_scan_with(
    mu: &ConformalDensity,
    radius: f64,
    cfg: &QuotientConfig,
    threshold: f64,
) -> Result<SelfFitReport> {
    cfg.validate()?;
    let quad = DiskQuadrature::new(radius, DEFAULT_RADIAL_NODES, DEFAULT_ANGULAR_NODES)?;
    let mut centers = vec![DiskPoint::ORIGIN];
    centers.extend((0..8).map(|k| DiskPoint::from_polar(0.4, TAU * k as f64 / 8.0).expect("inside")));
    let grid = cfg.grid();

    let mut entries = Vec::new();
    for &center in &centers {
        let nodes = quad.nodes_around(center);
        let base: Vec<f64> = nodes.iter().map(|&z| mu.evaluate_complex(z)).collect();
        let residuals: Vec<f64> = grid
            .par_iter()
            .map(|m| {
                nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &z)| quad.weight(i) * (base[i] - mu.evaluate_complex(m.apply_complex(z))).abs())
                    .sum()
            })
            .collect();
        entries.push(SelfFit { center, m: MobiusTransform::IDENTITY, residual: residuals[0], is_identity: true });
        for (m, &residual) in grid.iter().zip(&residuals).skip(1) {
            if residual < threshold {
                entries.push(SelfFit { center, m: *m, residual, is_identity: false });
            }
        }
    }
    Ok(SelfFitReport { radius, threshold, entries })
}
