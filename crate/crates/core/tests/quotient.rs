mod common;

use common::{bumps, mobius};
use cwass::density::{synthesize, synthesize_on_lattice, Generator};
use cwass::hyperbolic::{hyperbolic_distance, MobiusTransform};
use cwass::quotient::{
    canonical_chart, default_self_fit_threshold, quotient_distance, self_fittability_scan, QuotientConfig, QUOTIENT_TOL,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> QuotientConfig {
    QuotientConfig { ot_points: 32, ..Default::default() }
}

#[test]
fn canonical_chart_is_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mu = bumps(64, 4);
    let c = canonical_chart(&mu).unwrap();
    for _ in 0..5 {
        let m = mobius(&mut rng, 0.6);
        let moved = canonical_chart(&mu.push_forward(&m)).unwrap();
        // moved ∘ m agrees with c
        let p = moved.compose(&m);
        for s in mu.samples() {
            assert!(hyperbolic_distance(p.apply(s.point), c.apply(s.point)) < 1e-8);
        }
    }
}

#[test]
fn orbit_distance_vanishes_and_recovers_the_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mu = bumps(64, 9);
    let m = mobius(&mut rng, 0.5);
    let nu = mu.push_forward(&m);
    let r = quotient_distance(&mu, &nu, &config()).unwrap();
    assert!(r.distance <= QUOTIENT_TOL, "{}", r.distance);
    for s in mu.samples() {
        assert!(hyperbolic_distance(r.m_star.apply(s.point), m.apply(s.point)) < 1e-6);
    }
    assert!((r.plan.row_sums().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(!r.search_trace.is_empty());
}

#[test]
fn distinct_shapes_are_apart_and_symmetric() {
    let mu = bumps(64, 1);
    let nu = synthesize(&Generator::MultiBump { bumps: 1 }, 64, 2).unwrap();
    let ab = quotient_distance(&mu, &nu, &config()).unwrap();
    let ba = quotient_distance(&nu, &mu, &config()).unwrap();
    assert!(ab.distance > 10.0 * QUOTIENT_TOL, "{}", ab.distance);
    assert!((ab.distance - ba.distance).abs() <= 2.0 * QUOTIENT_TOL, "{} {}", ab.distance, ba.distance);
    // the reported map achieves the reported value
    let cost: Vec<Vec<f64>> = ab
        .row_support
        .iter()
        .map(|&i| {
            let z = ab.m_star.apply(mu.samples()[i].point);
            ab.col_support.iter().map(|&j| hyperbolic_distance(z, nu.samples()[j].point)).collect()
        })
        .collect();
    let d = ab.plan.cost_under(&cost);
    assert!((d - ab.distance).abs() < 1e-9, "{d} {}", ab.distance);
}

#[test]
fn self_fit_scan_reports_identity_and_finds_rotations_of_the_flat_disk() {
    let flat = synthesize_on_lattice(&Generator::FlatDisk, 256, 0).unwrap();
    let report = self_fittability_scan(&flat, 1.0, &QuotientConfig::default()).unwrap();
    assert_eq!(report.threshold, default_self_fit_threshold(1.0));
    let identities: Vec<_> = report.entries.iter().filter(|e| e.is_identity).collect();
    assert_eq!(identities.len(), 9);
    assert!(identities.iter().all(|e| e.residual < 1e-9));
    assert!(report.flagged().count() > 0);
    assert!(report.flagged().all(|e| e.residual < report.threshold && e.m != MobiusTransform::IDENTITY));
}

#[test]
fn asymmetric_density_has_no_flagged_maps_at_the_origin() {
    let mu = bumps(64, 3);
    let report = self_fittability_scan(&mu, 1.0, &QuotientConfig::default()).unwrap();
    assert!(report.flagged().all(|e| e.center.norm() > 0.0 || e.residual < report.threshold));
    assert!(report.flagged().filter(|e| e.center.norm() == 0.0).count() == 0);
}
