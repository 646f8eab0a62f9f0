//! Conformal densities on the disk.
//!
//! A surface is represented by its hyperbolic conformal density `μ`: the
//! surface area element is `μ(z) dvol_H(z)` with `dvol_H = (1 - |z|^2)^-2 dx dy`.
//! The flat Euclidean factor is `μ̃(z) = μ(z) (1 - |z|^2)^-2`, so the unit disk
//! with area normalized to one has `μ(z) = (1 - |z|^2)^2 / π`.
//!
//! Densities are sampled: each sample carries a location, the value `μ` there
//! and the mass of the surface cell it stands for.

mod interp;
mod synth;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hyperbolic::{DiskPoint, MobiusTransform};

use interp::Interpolant;
pub use synth::{hilbert_index, synthesize, synthesize_on_lattice, Bump, Generator};

/// Schema tag of [`DensityFile`].
pub const DENSITY_SCHEMA: &str = "cwass-density/1";

/// Samples farther than this from the origin are pulled radially inward.
pub const CLAMP_RADIUS: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "z")]
    pub point: DiskPoint,
    pub mu: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Piecewise linear in `ln μ` over a Möbius-invariant triangulation.
    #[default]
    #[serde(rename = "pwl")]
    PiecewiseLinear,
}

/// On-disk form of a [`ConformalDensity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityFile {
    pub schema: String,
    pub interp: Interpolation,
    pub samples: Vec<Sample>,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

/// A sampled hyperbolic density with its interpolant.
#[derive(Clone, Debug)]
pub struct ConformalDensity {
    samples: Vec<Sample>,
    interp: Interpolation,
    meta: Map<String, Value>,
    interpolant: Arc<Interpolant>,
}

impl PartialEq for ConformalDensity {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples && self.interp == other.interp && self.meta == other.meta
    }
}

impl ConformalDensity {
    pub fn new(samples: Vec<Sample>, meta: Map<String, Value>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("density has no samples".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.mu.is_finite() && s.mu >= 0.0) {
                return Err(Error::InvalidInput(format!("sample {i}: mu = {} is not a finite nonnegative value", s.mu)));
            }
            if !(s.mass.is_finite() && s.mass >= 0.0) {
                return Err(Error::InvalidInput(format!("sample {i}: mass = {} is not a finite nonnegative value", s.mass)));
            }
        }
        let mut samples = samples;
        let mut meta = meta;
        let mut clamped = 0u64;
        for s in &mut samples {
            let r = s.point.norm();
            if r > CLAMP_RADIUS {
                s.point = DiskPoint::clamped(s.point.to_complex() * (CLAMP_RADIUS / r));
                clamped += 1;
            }
        }
        if clamped > 0 {
            let prev = meta.get("clamped_samples").and_then(Value::as_u64).unwrap_or(0);
            meta.insert("clamped_samples".into(), Value::from(prev + clamped));
        }
        Ok(Self::assemble(samples, meta))
    }

    fn assemble(samples: Vec<Sample>, meta: Map<String, Value>) -> Self {
        let points: Vec<Complex64> = samples.iter().map(|s| s.point.to_complex()).collect();
        let values: Vec<f64> = samples.iter().map(|s| s.mu).collect();
        let interpolant = Arc::new(Interpolant::new(&points, &values));
        ConformalDensity {
            samples,
            interp: Interpolation::PiecewiseLinear,
            meta,
            interpolant,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    pub fn meta(&self) -> &Map<String, Value> {
        &self.meta
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn points(&self) -> Vec<DiskPoint> {
        self.samples.iter().map(|s| s.point).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mass).collect()
    }

    /// Interpolated hyperbolic density at `z`; finite and nonnegative.
    pub fn evaluate(&self, z: DiskPoint) -> f64 {
        self.interpolant.evaluate(z.to_complex())
    }

    #[inline]
    pub(crate) fn evaluate_complex(&self, z: Complex64) -> f64 {
        self.interpolant.evaluate(DiskPoint::clamped(z).to_complex())
    }

    /// `μ(z) (1 - |z|^2)^-2`.
    pub fn euclidean_density(&self, z: DiskPoint) -> f64 {
        self.evaluate(z) * z.volume_factor()
    }

    /// `(m^*μ)(z) = μ(m(z))`: samples move to `m^-1(z_i)`, values and masses
    /// are kept.
    pub fn pull_back(&self, m: &MobiusTransform) -> ConformalDensity {
        self.relocate(&m.inverse())
    }

    /// `(m_*μ)(w) = μ(m^-1(w))`: samples move to `m(z_i)`.
    pub fn push_forward(&self, m: &MobiusTransform) -> ConformalDensity {
        self.relocate(m)
    }

    fn relocate(&self, map: &MobiusTransform) -> ConformalDensity {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                point: map.apply(s.point),
                ..*s
            })
            .collect();
        ConformalDensity::new(samples, self.meta.clone()).expect("relocation keeps samples valid")
    }

    pub fn total_mass(&self) -> f64 {
        self.samples.iter().map(|s| s.mass).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= 1e-9
    }

    /// Scales masses and density values so that the masses sum to one.
    pub fn renormalize(&self) -> Result<ConformalDensity> {
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("density has zero total mass".into()));
        }
        let mut samples: Vec<Sample> = self
            .samples
            .iter()
            .map(|s| Sample {
                point: s.point,
                mu: s.mu / total,
                mass: s.mass / total,
            })
            .collect();
        // absorb the last rounding error so the sum is one
        let sum: f64 = samples.iter().map(|s| s.mass).sum();
        if sum != 1.0 {
            if let Some(big) = samples.iter_mut().max_by(|a, b| a.mass.total_cmp(&b.mass)) {
                big.mass += 1.0 - sum;
            }
        }
        Ok(Self::assemble(samples, self.meta.clone()))
    }

    /// Multiplies every density value by an independent factor `1 + level·u`,
    /// `u` uniform in `[-1, 1]`.
    pub fn with_multiplicative_noise(&self, level: f64, seed: u64) -> ConformalDensity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                mu: s.mu * (1.0 + level * rng.gen_range(-1.0..=1.0)),
                ..*s
            })
            .collect();
        Self::assemble(samples, self.meta.clone())
    }

    pub fn to_file(&self) -> DensityFile {
        DensityFile {
            schema: DENSITY_SCHEMA.to_string(),
            interp: self.interp,
            samples: self.samples.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_file(file: DensityFile) -> Result<Self> {
        if file.schema != DENSITY_SCHEMA {
            return Err(Error::Schema(file.schema));
        }
        ConformalDensity::new(file.samples, file.meta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
