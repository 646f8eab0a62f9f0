//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits nonzero if any failed.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use cwass::density::{synthesize, synthesize_on_lattice, Bump, ConformalDensity, Generator, Sample};
use cwass::flatten::{disk_mesh, flatten_to_disk, hemisphere_mesh, mobius_normalize, SurfaceMesh};
use cwass::hyperbolic::{hyperbolic_disk_volume, DiskPoint, MobiusTransform};
use cwass::localcost::{local_cost, CostConfig};
use cwass::quotient::{quotient_distance, QuotientConfig, QUOTIENT_TOL};
use cwass::transport::{generalized_distance, solve_assignment, solve_transport, TransportProblem};
use cwass_cli::{mds_embed, run, silhouette, Method, RunManifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn point(rng: &mut ChaCha8Rng, max_radius: f64) -> DiskPoint {
    DiskPoint::from_polar(max_radius * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..TAU)).unwrap()
}

fn mobius(rng: &mut ChaCha8Rng, max_radius: f64) -> MobiusTransform {
    MobiusTransform::new(point(rng, max_radius), rng.gen_range(0.0..TAU))
}

fn bumps(n: usize, seed: u64) -> ConformalDensity {
    synthesize(&Generator::MultiBump { bumps: 3 }, n, seed).unwrap()
}

fn invariance_tolerance() -> f64 {
    1e-2 * hyperbolic_disk_volume(CostConfig::default().radius)
}

fn isometry_invariance() -> Outcome {
    let cfg = CostConfig::default();
    let tol = invariance_tolerance();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mu = bumps(64, 2000 + seed);
        let m = mobius(&mut rng, 0.6);
        let d = generalized_distance(&mu, &mu.push_forward(&m), &cfg, 64).unwrap().distance;
        worst = worst.max(d);
    }
    outcome(worst <= tol, format!("max T = {worst:.3e} over 20 densities, bound {tol:.3e}"))
}

fn local_cost_properties() -> Outcome {
    let cfg = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let (mut negative, mut sym, mut inv, mut tri, mut refl): (usize, f64, f64, f64, f64) = (0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..50 {
        let d = [bumps(64, 3000 + 3 * k), bumps(64, 3001 + 3 * k), bumps(64, 3002 + 3 * k)];
        let p = [point(&mut rng, 0.6), point(&mut rng, 0.6), point(&mut rng, 0.6)];
        let c = |i: usize, j: usize| local_cost(&d[i], &d[j], p[i], p[j], &cfg).unwrap().value;
        let (c01, c10, c12, c02) = (c(0, 1), c(1, 0), c(1, 2), c(0, 2));
        negative += [c01, c10, c12, c02].iter().filter(|&&v| v < 0.0).count();
        sym = sym.max((c01 - c10).abs());
        tri = tri.max(c02 - c01 - c12);

        let (m1, m2) = (mobius(&mut rng, 0.5), mobius(&mut rng, 0.5));
        let moved = local_cost(&d[0].pull_back(&m1), &d[1].pull_back(&m2), m1.inverse().apply(p[0]), m2.inverse().apply(p[1]), &cfg)
            .unwrap()
            .value;
        inv = inv.max((moved - c01).abs());

        let m = mobius(&mut rng, 0.5);
        let r = local_cost(&d[1].pull_back(&m), &d[1], m.inverse().apply(p[1]), p[1], &cfg).unwrap().value;
        refl = refl.max(r);
    }
    let pass = negative == 0 && sym <= 1e-3 && inv <= 1e-3 && tri <= 3e-3 && refl <= 1e-3;
    outcome(
        pass,
        format!(
            "50 tuples: negatives {negative}, symmetry {sym:.1e} (1e-3), invariance {inv:.1e} (1e-3), \
             triangle excess {tri:.1e} (3e-3), reflexivity {refl:.1e} (1e-3)"
        ),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn transport_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let (mut objective_err, mut birkhoff_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let brute = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        let (_, assignment) = solve_assignment(&cost).unwrap();
        let plan = solve_transport(&TransportProblem::uniform(cost).unwrap()).unwrap();
        objective_err = objective_err.max((assignment / n as f64 - brute).abs()).max((plan.objective - brute).abs());
        for f in &plan.coupling {
            birkhoff_err = birkhoff_err.max(f.mass.abs().min((f.mass - 1.0 / n as f64).abs()));
        }
    }
    outcome(
        objective_err <= 1e-10 && birkhoff_err <= 1e-9,
        format!("200 instances: objective error {objective_err:.1e} (1e-10), coupling off {{0, 1/n}} by {birkhoff_err:.1e} (1e-9)"),
    )
}

fn quotient_axioms() -> Outcome {
    let cfg = QuotientConfig { ot_points: 32, ..Default::default() };
    let tol = QUOTIENT_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let (mut orbit, mut inv, mut tri): (f64, f64, f64) = (0.0, 0.0, f64::NEG_INFINITY);
    let q = |a: &ConformalDensity, b: &ConformalDensity| quotient_distance(a, b, &cfg).unwrap().distance;
    for k in 0..20 {
        let d = [bumps(64, 4000 + 3 * k), bumps(64, 4001 + 3 * k), bumps(64, 4002 + 3 * k)];
        let (d01, d12, d02) = (q(&d[0], &d[1]), q(&d[1], &d[2]), q(&d[0], &d[2]));
        tri = tri.max(d02 - d01 - d12);
        let m = mobius(&mut rng, 0.6);
        orbit = orbit.max(q(&d[0], &d[0].push_forward(&m)));
        let (m1, m2) = (mobius(&mut rng, 0.6), mobius(&mut rng, 0.6));
        inv = inv.max((q(&d[0].push_forward(&m1), &d[1].push_forward(&m2)) - d01).abs());
    }
    outcome(
        orbit <= tol && inv <= 2.0 * tol && tri <= 3.0 * tol,
        format!(
            "20 triples: orbit distance {orbit:.1e} ({tol:.0e}), invariance {inv:.1e} ({:.0e}), triangle excess {tri:.1e} ({:.0e})",
            2.0 * tol,
            3.0 * tol
        ),
    )
}

fn closed_forms() -> Outcome {
    let vol = hyperbolic_disk_volume(1.0);
    let exact = PI * 1f64.sinh().powi(2);
    let vol_err = (vol - exact).abs() / exact;
    let flat = synthesize(&Generator::FlatDisk, 256, 1).unwrap();
    let constant = |c: f64| {
        let samples = flat.samples().iter().map(|s| Sample { mu: c, ..*s }).collect();
        ConformalDensity::new(samples, Default::default()).unwrap()
    };
    let cost = local_cost(&constant(1.0), &constant(2.0), DiskPoint::ORIGIN, DiskPoint::ORIGIN, &CostConfig::default())
        .unwrap()
        .value;
    let cost_err = (cost - exact).abs() / exact;
    outcome(
        vol_err <= 1e-6 && cost_err <= 1e-6,
        format!("volume rel. error {vol_err:.1e}, constant-density cost rel. error {cost_err:.1e} (1e-6)"),
    )
}

fn separation() -> Outcome {
    let cfg = CostConfig::default();
    let n = 128;
    let bump = |height: f64| {
        let b = Bump { center: DiskPoint::ORIGIN, height, width: 0.25 };
        synthesize_on_lattice(&Generator::GaussianBump(b), n, 0).unwrap()
    };
    let h = 4.0;
    let base = bump(h);
    let gaps = [0.05, 0.10, 0.20, 0.40];
    let d: Vec<f64> = gaps
        .iter()
        .map(|g| generalized_distance(&base, &bump(h * (1.0 + g)), &cfg, n).unwrap().distance)
        .collect();
    let bound = 5.0 * invariance_tolerance();
    let monotone = d.windows(2).all(|w| w[1] > w[0]);
    let separated = d[2] >= bound && d[3] >= bound;
    outcome(
        monotone && separated,
        format!(
            "T at gaps 5/10/20/40%: {:.4} {:.4} {:.4} {:.4}; 20% and 40% vs {bound:.4}; monotone {monotone}",
            d[0], d[1], d[2], d[3]
        ),
    )
}

fn clustering() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut classes = Vec::new();
    for class in 0..4u64 {
        let base = bumps(64, 5000 + class);
        for member in 0..2u64 {
            let shape = if member == 0 { base.clone() } else { base.push_forward(&mobius(&mut rng, 0.5)) };
            let noisy = shape.with_multiplicative_noise(0.01, 6000 + 2 * class + member);
            let path = dir.path().join(format!("c{class}_{member}.json"));
            noisy.save(&path).unwrap();
            inputs.push(path);
            classes.push(class as usize);
        }
    }
    let manifest = RunManifest { n_points: 64, ..RunManifest::new(inputs, Method::Trd) };
    let out = run(&manifest).unwrap();
    let d = out.report.dense().unwrap();
    let (mut within, mut between) = (0.0f64, f64::INFINITY);
    for i in 0..8 {
        for j in i + 1..8 {
            if classes[i] == classes[j] {
                within = within.max(d[i][j]);
            } else {
                between = between.min(d[i][j]);
            }
        }
    }
    let embedding = mds_embed(&d, 2).unwrap();
    let s = silhouette(&embedding.coordinates, &classes);
    outcome(
        within < between && s > 0.5,
        format!(
            "max within {within:.4} < min between {between:.4}; silhouette {s:.3} (0.5); max asymmetry {:.1e}",
            out.report.max_asymmetry()
        ),
    )
}

fn interior_error(mesh: &SurfaceMesh, normalize: bool, oracle: impl Fn(f64) -> f64) -> f64 {
    let mut flat = flatten_to_disk(mesh).unwrap();
    if normalize {
        flat = mobius_normalize(&flat).unwrap();
    }
    let boundary: std::collections::HashSet<usize> = mesh.boundary().iter().copied().collect();
    (0..mesh.vertices().len())
        .filter(|v| !boundary.contains(v))
        .map(|v| {
            let s = flat.density.samples()[v];
            (s.mu * s.point.volume_factor() / oracle(s.point.norm()) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

fn flattening() -> Outcome {
    let disk = interior_error(&disk_mesh(8).unwrap(), false, |_| 1.0 / PI);
    let stereo = |r: f64| 2.0 / (PI * (1.0 + r * r).powi(2));
    let coarse = interior_error(&hemisphere_mesh(16).unwrap(), true, stereo);
    let fine = interior_error(&hemisphere_mesh(32).unwrap(), true, stereo);
    outcome(
        disk <= 0.02 && coarse <= 0.05 && fine < coarse,
        format!("planar disk {disk:.2e} (2%); hemisphere {coarse:.2e} (5%) refined to {fine:.2e}"),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("isometry invariance", isometry_invariance),
        ("local-cost properties", local_cost_properties),
        ("transport oracle equivalence", transport_oracle),
        ("quotient metric axioms", quotient_axioms),
        ("closed-form quadrature anchors", closed_forms),
        ("separation", separation),
        ("end-to-end clustering", clustering),
        ("flattening sanity", flattening),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| outcome(false, "panicked".into()));
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {} [{}]: {} ({}; {:.1} s)",
            k + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
