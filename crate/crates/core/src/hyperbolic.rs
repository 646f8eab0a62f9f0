//! Poincaré-disk geometry.
//!
//! The disk carries the metric `(1 - |z|^2)^-2 |dz|^2`, so the distance from
//! the origin to `r` is `atanh(r)` and the geodesic disk of radius `R` around
//! the origin is the Euclidean disk of radius `tanh(R)`. Disk-preserving
//! Möbius maps `z -> e^{iθ}(z - a)/(1 - conj(a) z)` are the isometries.

use std::f64::consts::{PI, TAU};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this to the unit circle are not valid [`DiskPoint`]s.
pub const BOUNDARY_MARGIN: f64 = 1e-9;

/// A point of the open unit disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiskPoint {
    re: f64,
    im: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Result<Self> {
        let p = DiskPoint { re, im };
        if !(re.is_finite() && im.is_finite()) || p.norm() >= 1.0 - BOUNDARY_MARGIN {
            return Err(Error::OutsideDisk { re, im });
        }
        Ok(p)
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    /// Polar constructor, `radius` is Euclidean.
    pub fn from_polar(radius: f64, angle: f64) -> Result<Self> {
        Self::from_complex(Complex64::from_polar(radius, angle))
    }

    /// Like [`DiskPoint::from_complex`] but pulls points that rounding pushed
    /// into the boundary margin radially back inside.
    pub(crate) fn clamped(z: Complex64) -> Self {
        let r = z.norm();
        let max = 1.0 - 2.0 * BOUNDARY_MARGIN;
        if r > max {
            let s = max / r;
            DiskPoint {
                re: z.re * s,
                im: z.im * s,
            }
        } else {
            DiskPoint { re: z.re, im: z.im }
        }
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn im(&self) -> f64 {
        self.im
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// The hyperbolic volume element factor `(1 - |z|^2)^-2`.
    pub fn volume_factor(&self) -> f64 {
        let s = 1.0 - (self.re * self.re + self.im * self.im);
        1.0 / (s * s)
    }
}

impl TryFrom<[f64; 2]> for DiskPoint {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        DiskPoint::new(v[0], v[1])
    }
}

impl From<DiskPoint> for [f64; 2] {
    fn from(p: DiskPoint) -> Self {
        [p.re, p.im]
    }
}

impl From<DiskPoint> for Complex64 {
    fn from(p: DiskPoint) -> Self {
        p.to_complex()
    }
}

/// A point `e^{iψ}` of the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    angle: f64,
}

impl BoundaryPoint {
    pub fn new(angle: f64) -> Self {
        BoundaryPoint {
            angle: normalize_angle(angle),
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(1.0, self.angle)
    }

    /// Interior point at Euclidean distance `1 - radius` from this boundary point.
    pub fn approach(&self, radius: f64) -> Result<DiskPoint> {
        DiskPoint::from_polar(radius, self.angle)
    }
}

/// Maps an angle to `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Hyperbolic distance `atanh(|z - w| / |1 - conj(z) w|)`.
pub fn hyperbolic_distance(z: DiskPoint, w: DiskPoint) -> f64 {
    complex_distance(z.to_complex(), w.to_complex())
}

pub(crate) fn complex_distance(z: Complex64, w: Complex64) -> f64 {
    let num = (z - w).norm();
    let den = (Complex64::new(1.0, 0.0) - z.conj() * w).norm();
    (num / den).min(1.0).atanh()
}

/// A disk-preserving Möbius transformation `z -> e^{iθ}(z - a)/(1 - conj(a) z)`
/// stored in canonical `(a, θ)` form with `θ ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobiusTransform {
    a: DiskPoint,
    theta: f64,
}

impl Default for MobiusTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl MobiusTransform {
    pub const IDENTITY: MobiusTransform = MobiusTransform {
        a: DiskPoint::ORIGIN,
        theta: 0.0,
    };

    pub fn new(a: DiskPoint, theta: f64) -> Self {
        MobiusTransform {
            a,
            theta: normalize_angle(theta),
        }
    }

    pub fn rotation(theta: f64) -> Self {
        Self::new(DiskPoint::ORIGIN, theta)
    }

    /// The map `z -> (z - p)/(1 - conj(p) z)` sending `p` to the origin.
    pub fn to_origin(p: DiskPoint) -> Self {
        Self::new(p, 0.0)
    }

    /// The map sending the origin to `p`, inverse of [`MobiusTransform::to_origin`].
    pub fn from_origin(p: DiskPoint) -> Self {
        Self::to_origin(p).inverse()
    }

    pub fn a(&self) -> DiskPoint {
        self.a
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn apply(&self, z: DiskPoint) -> DiskPoint {
        DiskPoint::clamped(self.apply_complex(z.to_complex()))
    }

    /// Applies the map to any complex number where the denominator is nonzero;
    /// the unit circle is mapped to itself.
    pub fn apply_complex(&self, z: Complex64) -> Complex64 {
        let a = self.a.to_complex();
        Complex64::from_polar(1.0, self.theta) * (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)
    }

    /// `m'(z) = e^{iθ}(1 - |a|^2)/(1 - conj(a) z)^2`.
    pub fn derivative(&self, z: DiskPoint) -> Complex64 {
        let a = self.a.to_complex();
        let d = Complex64::new(1.0, 0.0) - a.conj() * z.to_complex();
        Complex64::from_polar(1.0 - a.norm_sqr(), self.theta) / (d * d)
    }

    pub fn inverse(&self) -> Self {
        let a = self.a.to_complex();
        let a_inv = -a * Complex64::from_polar(1.0, self.theta);
        MobiusTransform::new(DiskPoint::clamped(a_inv), -self.theta)
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &MobiusTransform) -> Self {
        let (a1, b1) = self.su11();
        let (a2, b2) = other.su11();
        let alpha = a1 * a2 + b1 * b2.conj();
        let beta = a1 * b2 + b1 * a2.conj();
        Self::from_su11(alpha, beta)
    }

    // Matrix [[α, β], [conj(β), conj(α)]] with α = e^{iθ/2}, β = -e^{iθ/2} a.
    fn su11(&self) -> (Complex64, Complex64) {
        let alpha = Complex64::from_polar(1.0, 0.5 * self.theta);
        (alpha, -alpha * self.a.to_complex())
    }

    fn from_su11(alpha: Complex64, beta: Complex64) -> Self {
        let a = -beta / alpha;
        let rot = alpha / alpha.conj();
        MobiusTransform::new(DiskPoint::clamped(a), rot.arg())
    }

    /// The member of the one-parameter family of disk maps sending `z0` to
    /// `w0` selected by the unit complex `sigma`:
    /// `m(z) = τ(z - a)/(1 - conj(a) z)` with
    /// `a = (z0 - w0 conj(σ))/(1 - conj(z0) w0 conj(σ))` and
    /// `τ = σ(1 - conj(z0) w0 conj(σ))/(1 - z0 conj(w0) σ)`.
    pub fn interpolating(z0: DiskPoint, w0: DiskPoint, sigma: Complex64) -> Result<Self> {
        let n = sigma.norm();
        if !((n - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "sigma must lie on the unit circle, |sigma| = {n}"
            )));
        }
        let sigma = sigma / n;
        let (z0, w0) = (z0.to_complex(), w0.to_complex());
        let one = Complex64::new(1.0, 0.0);
        let k = one - z0.conj() * w0 * sigma.conj();
        let a = (z0 - w0 * sigma.conj()) / k;
        let tau = sigma * k / (one - z0 * w0.conj() * sigma);
        Ok(MobiusTransform::new(DiskPoint::clamped(a), tau.arg()))
    }

    /// Maximum parameter difference, used for approximate equality in tests
    /// and in the quotient search.
    pub fn parameter_distance(&self, other: &MobiusTransform) -> f64 {
        let da = (self.a.to_complex() - other.a.to_complex()).norm();
        let dt = (Complex64::from_polar(1.0, self.theta) - Complex64::from_polar(1.0, other.theta)).norm();
        da.max(dt)
    }
}

/// The closed hyperbolic disk `Ω_{center,R}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicDisk {
    center: DiskPoint,
    radius: f64,
}

impl GeodesicDisk {
    pub fn new(center: DiskPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "geodesic disk radius must be positive, got {radius}"
            )));
        }
        Ok(GeodesicDisk { center, radius })
    }

    pub fn center(&self) -> DiskPoint {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Euclidean radius of the same disk moved to the origin.
    pub fn centered_euclidean_radius(&self) -> f64 {
        self.radius.tanh()
    }

    pub fn contains(&self, z: DiskPoint) -> bool {
        MobiusTransform::to_origin(self.center).apply_complex(z.to_complex()).norm()
            <= self.centered_euclidean_radius()
    }

    /// `π sinh²(R)`.
    pub fn volume(&self) -> f64 {
        hyperbolic_disk_volume(self.radius)
    }
}

pub fn hyperbolic_disk_volume(radius: f64) -> f64 {
    let s = radius.sinh();
    PI * s * s
}

/// Tangent vector at the origin pointing to `u`, with length `d(0, u)`.
pub fn log_origin(u: Complex64) -> Complex64 {
    let r = u.norm();
    if r < 1e-300 {
        Complex64::new(0.0, 0.0)
    } else {
        u * (r.atanh() / r)
    }
}

/// Inverse of [`log_origin`].
pub fn exp_origin(v: Complex64) -> Complex64 {
    let r = v.norm();
    if r < 1e-300 {
        Complex64::new(0.0, 0.0)
    } else {
        v * (r.tanh() / r)
    }
}

/// Weighted Riemannian center of mass, the minimizer of `Σ w_i d(p, z_i)^2`.
pub fn barycenter(points: &[DiskPoint], weights: &[f64]) -> Result<DiskPoint> {
    let total: f64 = weights.iter().sum();
    if points.is_empty() || points.len() != weights.len() || !(total > 0.0) {
        return Err(Error::InvalidInput("barycenter needs points with positive total weight".into()));
    }
    let mut p = DiskPoint::ORIGIN;
    for _ in 0..200 {
        let to_p = MobiusTransform::to_origin(p);
        let step: Complex64 = points
            .iter()
            .zip(weights)
            .map(|(z, w)| log_origin(to_p.apply_complex(z.to_complex())) * (w / total))
            .sum();
        p = DiskPoint::clamped(MobiusTransform::from_origin(p).apply_complex(exp_origin(step)));
        if step.norm() < 1e-15 {
            break;
        }
    }
    Ok(p)
}

/// Weighted hyperbolic median, the minimizer of `Σ w_i d(p, z_i)`, by
/// Weiszfeld steps in the tangent space at the current iterate.
pub fn median_center(points: &[DiskPoint], weights: &[f64], max_iterations: usize) -> Result<DiskPoint> {
    let total: f64 = weights.iter().sum();
    if points.is_empty() || points.len() != weights.len() || !(total > 0.0) {
        return Err(Error::InvalidInput("median needs points with positive total weight".into()));
    }
    let mut p = DiskPoint::ORIGIN;
    for _ in 0..max_iterations {
        let to_p = MobiusTransform::to_origin(p);
        let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
        for (z, &w) in points.iter().zip(weights) {
            let v = log_origin(to_p.apply_complex(z.to_complex()));
            let d = v.norm();
            if d > 1e-14 {
                num += v * (w / d);
                den += w / d;
            }
        }
        if den == 0.0 {
            return Ok(p);
        }
        let step = num / den;
        p = DiskPoint::clamped(MobiusTransform::from_origin(p).apply_complex(exp_origin(step)));
        if step.norm() < 1e-12 {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence { what: "hyperbolic median".into(), iterations: max_iterations })
}

/// Default radial node count of [`DiskQuadrature`].
pub const DEFAULT_RADIAL_NODES: usize = 24;
/// Default angular node count of [`DiskQuadrature`].
pub const DEFAULT_ANGULAR_NODES: usize = 48;

/// Tensor-product rule on the centered geodesic disk `Ω_{0,R}`: Gauss–Legendre
/// in geodesic radius `t ∈ [0, R]` (so `|z| = tanh t`) times the trapezoid
/// rule in angle. The hyperbolic area element becomes `½ sinh(2t) dt dφ`.
///
/// Nodes are stored ring by ring: node `l * angular + k` has radius index `l`
/// and angle `2πk/angular`. Rotating by a multiple of `2π/angular` permutes
/// nodes within each ring.
#[derive(Clone, Debug)]
pub struct DiskQuadrature {
    radius: f64,
    radial: usize,
    angular: usize,
    nodes: Vec<Complex64>,
    ring_weights: Vec<f64>,
}

impl DiskQuadrature {
    pub fn new(radius: f64, radial: usize, angular: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "quadrature radius must be positive, got {radius}"
            )));
        }
        let radial_nz = NonZeroUsize::new(radial)
            .ok_or_else(|| Error::InvalidParameter("radial node count must be positive".into()))?;
        if angular == 0 {
            return Err(Error::InvalidParameter(
                "angular node count must be positive".into(),
            ));
        }
        let rule = GaussLegendre::new(radial_nz);
        let dphi = TAU / angular as f64;
        let mut rings: Vec<(f64, f64)> = rule
            .into_iter()
            .map(|(x, w)| {
                let t = 0.5 * radius * (x + 1.0);
                (t, 0.5 * radius * w * 0.5 * (2.0 * t).sinh() * dphi)
            })
            .collect();
        rings.sort_by(|p, q| p.0.total_cmp(&q.0));

        let mut nodes = Vec::with_capacity(radial * angular);
        for &(t, _) in &rings {
            let r = t.tanh();
            nodes.extend((0..angular).map(|k| Complex64::from_polar(r, dphi * k as f64)));
        }
        Ok(DiskQuadrature {
            radius,
            radial,
            angular,
            nodes,
            ring_weights: rings.into_iter().map(|(_, w)| w).collect(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn radial(&self) -> usize {
        self.radial
    }

    pub fn angular(&self) -> usize {
        self.angular
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes of the centered disk.
    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    /// Weight shared by every node of ring `l`.
    pub fn ring_weights(&self) -> &[f64] {
        &self.ring_weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.ring_weights[index / self.angular]
    }

    /// Nodes of `Ω_{center,R}`, the images of the centered nodes under the
    /// isometry sending 0 to `center`.
    pub fn nodes_around(&self, center: DiskPoint) -> Vec<Complex64> {
        let m = MobiusTransform::from_origin(center);
        self.nodes.iter().map(|&u| m.apply_complex(u)).collect()
    }

    /// `∫_{Ω_{center,R}} f dvol_H`.
    pub fn integrate<F>(&self, center: DiskPoint, mut f: F) -> f64
    where
        F: FnMut(DiskPoint) -> f64,
    {
        let m = MobiusTransform::from_origin(center);
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, &u)| self.weight(i) * f(DiskPoint::clamped(m.apply_complex(u))))
            .sum()
    }
}

/// `∫_Ω f dvol_H` with the default node counts.
pub fn hyperbolic_quadrature<F>(disk: &GeodesicDisk, f: F) -> f64
where
    F: FnMut(DiskPoint) -> f64,
{
    DiskQuadrature::new(disk.radius(), DEFAULT_RADIAL_NODES, DEFAULT_ANGULAR_NODES)
        .expect("disk radius is validated on construction")
        .integrate(disk.center(), f)
}

/// Lift to the hyperboloid `x² + y² - t² = -1` (curvature -1 model of the
/// same disk, where disk Möbius maps act linearly).
#[inline]
pub(crate) fn lift(z: Complex64) -> [f64; 3] {
    let r2 = z.norm_sqr();
    let s = 1.0 / (1.0 - r2);
    [2.0 * z.re * s, 2.0 * z.im * s, (1.0 + r2) * s]
}

#[inline]
pub(crate) fn minkowski(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    p[0] * q[0] + p[1] * q[1] - p[2] * q[2]
}
