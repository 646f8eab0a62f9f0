//! Seeded synthetic densities for tests and demos.
//!
//! The Euclidean density is `μ̃(z) ∝ exp(Σ_b h_b exp(-d(z, c_b)² / (2 w_b²)))`
//! with `d` the hyperbolic distance, normalized over the disk. Samples are
//! drawn by systematic sampling of a dense sunflower lattice visited in
//! Hilbert-curve order, so every sample carries the same mass `1/n`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use super::{ConformalDensity, Sample};
use crate::error::{Error, Result};
use crate::hyperbolic::{hyperbolic_distance, DiskPoint};

/// Density bump with hyperbolic center and width; `height` is in log units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: DiskPoint,
    pub height: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    FlatDisk,
    GaussianBump(Bump),
    /// `bumps` random bumps drawn from the seed.
    MultiBump { bumps: usize },
    /// Explicit bump list.
    Bumps { bumps: Vec<Bump> },
}

impl Generator {
    fn resolve(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Bump>> {
        let bumps = match self {
            Generator::FlatDisk => Vec::new(),
            Generator::GaussianBump(b) => vec![*b],
            Generator::Bumps { bumps } => bumps.clone(),
            Generator::MultiBump { bumps } => (0..*bumps)
                .map(|_| {
                    let r = 0.6 * rng.gen::<f64>().sqrt();
                    Bump {
                        center: DiskPoint::from_polar(r, rng.gen_range(0.0..2.0 * PI)).expect("radius < 1"),
                        height: rng.gen_range(1.0..3.0),
                        width: rng.gen_range(0.25..0.6),
                    }
                })
                .collect(),
        };
        for b in &bumps {
            if !(b.width > 0.0 && b.width.is_finite() && b.height.is_finite()) {
                return Err(Error::InvalidParameter(format!("bad bump {b:?}")));
            }
        }
        Ok(bumps)
    }
}

fn log_profile(bumps: &[Bump], z: DiskPoint) -> f64 {
    bumps
        .iter()
        .map(|b| {
            let d = hyperbolic_distance(z, b.center);
            b.height * (-d * d / (2.0 * b.width * b.width)).exp()
        })
        .sum()
}

/// Position along a Hilbert curve of order 16 covering `[-1, 1]^2`.
pub fn hilbert_index(z: DiskPoint) -> u64 {
    const ORDER: u32 = 16;
    let side = 1u64 << ORDER;
    let scale = |v: f64| (((v + 1.0) * 0.5 * side as f64) as u64).min(side - 1);
    let (mut x, mut y) = (scale(z.re()), scale(z.im()));
    let mut d = 0u64;
    let mut s = side / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = side - 1 - x;
                y = side - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

/// Deterministic synthetic density with `n` equal-mass samples.
pub fn synthesize(kind: &Generator, n: usize, seed: u64) -> Result<ConformalDensity> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps = kind.resolve(&mut rng)?;
    let offset: f64 = rng.gen();

    let lattice = (64 * n).max(4096);
    let mut candidates: Vec<(u64, DiskPoint, f64)> = sunflower(lattice)
        .map(|p| (hilbert_index(p), p, log_profile(&bumps, p).exp()))
        .collect();
    candidates.sort_by_key(|c| c.0);

    // Z = ∫_D exp(profile) dx dy, midpoint rule on equal-area lattice cells
    let total: f64 = candidates.iter().map(|c| c.2).sum();
    let normalizer = PI * total / lattice as f64;

    let mut samples = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut next = 0usize;
    for &(_, p, w) in &candidates {
        cumulative += w;
        while next < n && (offset + next as f64) / n as f64 * total < cumulative {
            let q = 1.0 - p.norm() * p.norm();
            samples.push(Sample {
                point: p,
                mu: w / normalizer * q * q,
                mass: 1.0 / n as f64,
            });
            next += 1;
        }
    }
    // rounding can leave the last target unmet
    while samples.len() < n {
        let &(_, p, w) = candidates.last().expect("lattice is nonempty");
        let q = 1.0 - p.norm() * p.norm();
        samples.push(Sample { point: p, mu: w / normalizer * q * q, mass: 1.0 / n as f64 });
    }

    finish(samples, kind, seed, "systematic")
}

/// Deterministic synthetic density on the `n`-point sunflower lattice: the
/// sample locations do not depend on the density, and each sample carries
/// the mass of its equal-area cell.
pub fn synthesize_on_lattice(kind: &Generator, n: usize, seed: u64) -> Result<ConformalDensity> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps = kind.resolve(&mut rng)?;
    let points: Vec<(DiskPoint, f64)> = sunflower(n)
        .map(|p| (p, log_profile(&bumps, p).exp()))
        .collect();
    let total: f64 = points.iter().map(|p| p.1).sum();
    let normalizer = PI * total / n as f64;
    let samples = points
        .into_iter()
        .map(|(p, w)| {
            let q = 1.0 - p.norm() * p.norm();
            Sample { point: p, mu: w / normalizer * q * q, mass: w / total }
        })
        .collect();
    finish(samples, kind, seed, "lattice")
}

fn sunflower(n: usize) -> impl Iterator<Item = DiskPoint> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n).map(move |k| {
        let r = ((k as f64 + 0.5) / n as f64).sqrt();
        DiskPoint::from_polar(r, golden * k as f64).expect("lattice is inside the disk")
    })
}

fn finish(samples: Vec<Sample>, kind: &Generator, seed: u64, sampling: &str) -> Result<ConformalDensity> {
    let mut meta = Map::new();
    meta.insert("source".into(), json!("synthetic"));
    meta.insert("generator".into(), serde_json::to_value(kind)?);
    meta.insert("sampling".into(), json!(sampling));
    meta.insert("seed".into(), json!(seed));
    ConformalDensity::new(samples, meta)
}
