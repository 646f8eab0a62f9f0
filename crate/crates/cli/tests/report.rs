use std::path::PathBuf;

use cwass::density::{synthesize, Generator};
use cwass::transport::{solve_assignment, Flow, TransportPlan};
use cwass_cli::{export_correspondence, run, Method, PairResult, RunManifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(dir: &std::path::Path, seeds: &[u64]) -> Vec<PathBuf> {
    seeds
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let p = dir.join(format!("d{k}.json"));
            synthesize(&Generator::MultiBump { bumps: 2 }, 16, s).unwrap().save(&p).unwrap();
            p
        })
        .collect()
}

fn manifest(inputs: Vec<PathBuf>) -> RunManifest {
    RunManifest { n_points: 16, ..RunManifest::new(inputs, Method::Trd) }
}

#[test]
fn identical_inputs_are_at_distance_zero() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = corpus(dir.path(), &[5, 5]);
    let out = run(&manifest(inputs)).unwrap();
    let d = out.report.dense().unwrap();
    assert!(d[0][1].abs() < 1e-9, "{}", d[0][1]);
    assert!(out.report.is_complete());
}

#[test]
fn three_inputs_give_a_symmetric_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&manifest(corpus(dir.path(), &[1, 2, 3]))).unwrap();
    let d = out.report.dense().unwrap();
    assert_eq!(d.len(), 3);
    for i in 0..3 {
        assert_eq!(d[i][i], 0.0);
        for j in 0..3 {
            assert_eq!(d[i][j], d[j][i]);
        }
    }
    assert_eq!(out.report.pairs.len(), 3);
    assert!(out.report.max_asymmetry() < 1e-9);
    assert_eq!(out.report.labels, vec!["d0", "d1", "d2"]);
}

#[test]
fn failed_inputs_leave_null_rows_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = corpus(dir.path(), &[1, 2]);
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    inputs.insert(1, broken);
    let out = run(&manifest(inputs)).unwrap();
    let r = &out.report;
    assert!(!r.is_complete());
    assert_eq!(r.failed_inputs.len(), 1);
    assert_eq!(r.failed_inputs[0].index, 1);
    assert!(r.matrix[1].iter().all(Option::is_none));
    assert!(r.matrix[0][2].is_some());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(corpus(dir.path(), &[7, 8, 9]));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&m).unwrap().write(&a).unwrap();
    run(&m).unwrap().write(&b).unwrap();
    for name in ["matrix.json", "pair_0_1.json", "pair_1_2.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(a.join("timings.json").exists());
}

#[test]
fn quotient_method_records_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(corpus(dir.path(), &[1, 2]));
    m.method = Method::Quotient;
    m.quotient.ot_points = 16;
    m.quotient.a_grid = 3;
    m.quotient.a_angular = 6;
    m.quotient.theta_grid = 6;
    let out = run(&m).unwrap();
    assert!(out.pair_results[0].m_star.is_some());
    assert!(out.report.dense().unwrap()[0][1] > 0.0);
}

fn pair(plan: TransportPlan) -> PairResult {
    let n = plan.rows;
    PairResult {
        source: 0,
        target: 1,
        method: Method::Trd,
        distance: plan.objective,
        row_support: (0..n).collect(),
        col_support: (0..n).collect(),
        plan,
        m_star: None,
    }
}

fn permutation_plan(perm: &[usize]) -> TransportPlan {
    let n = perm.len();
    TransportPlan {
        rows: n,
        cols: n,
        coupling: perm.iter().enumerate().map(|(row, &col)| Flow { row, col, mass: 1.0 / n as f64 }).collect(),
        objective: 0.0,
        is_permutation: true,
    }
}

#[test]
fn correspondence_examples() {
    assert_eq!(
        export_correspondence(&pair(permutation_plan(&[0, 1, 2]))),
        format!("source,target,mass\n0,0,{0}\n1,1,{0}\n2,2,{0}\n", 1.0 / 3.0)
    );
    assert_eq!(export_correspondence(&pair(permutation_plan(&[1, 0]))), "source,target,mass\n0,1,0.5\n1,0,0.5\n");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cost: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.gen()).collect()).collect();
    let (perm, _) = solve_assignment(&cost).unwrap();
    let csv = export_correspondence(&pair(permutation_plan(&perm)));
    let rows: Vec<(usize, usize)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    let mut sources: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let mut targets: Vec<usize> = rows.iter().map(|r| r.1).collect();
    sources.sort_unstable();
    targets.sort_unstable();
    assert_eq!(sources, (0..5).collect::<Vec<_>>());
    assert_eq!(targets, (0..5).collect::<Vec<_>>());
}
