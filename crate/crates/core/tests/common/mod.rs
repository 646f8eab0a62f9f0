#![allow(dead_code)]

use cwass::density::{synthesize, ConformalDensity, Generator};
use cwass::hyperbolic::{DiskPoint, MobiusTransform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn point(rng: &mut ChaCha8Rng, max_radius: f64) -> DiskPoint {
    let r = max_radius * rng.gen::<f64>().sqrt();
    DiskPoint::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU)).unwrap()
}

pub fn mobius(rng: &mut ChaCha8Rng, max_radius: f64) -> MobiusTransform {
    MobiusTransform::new(point(rng, max_radius), rng.gen_range(0.0..std::f64::consts::TAU))
}

pub fn bumps(n: usize, seed: u64) -> ConformalDensity {
    synthesize(&Generator::MultiBump { bumps: 3 }, n, seed).unwrap()
}
