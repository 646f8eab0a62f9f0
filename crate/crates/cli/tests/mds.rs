use cwass_cli::{mds_embed, silhouette};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn equilateral_triangle() {
    let d = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let e = mds_embed(&d, 2).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((dist(&e.coordinates[i], &e.coordinates[j]) - d[i][j]).abs() < 1e-9);
        }
    }
    assert!(e.truncated.is_empty());
}

#[test]
fn two_points_sit_at_plus_minus_half() {
    let e = mds_embed(&[vec![0.0, 3.0], vec![3.0, 0.0]], 2).unwrap();
    let mut xs: Vec<f64> = e.coordinates.iter().map(|c| c[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert!((xs[0] + 1.5).abs() < 1e-12 && (xs[1] - 1.5).abs() < 1e-12);
    assert!(e.coordinates.iter().all(|c| c[1].abs() < 1e-12));
}

#[test]
fn line_metric_is_one_dimensional() {
    let d: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i as f64 - j as f64).abs()).collect()).collect();
    let e = mds_embed(&d, 2).unwrap();
    assert!(e.eigenvalues[1].abs() < 1e-9, "{:?}", e.eigenvalues);
    for i in 0..4 {
        for j in 0..4 {
            assert!((dist(&e.coordinates[i], &e.coordinates[j]) - d[i][j]).abs() < 1e-9);
        }
    }
}

#[test]
fn non_euclidean_input_reports_truncation() {
    // violates the triangle inequality, so the Gram matrix is indefinite
    let d = vec![
        vec![0.0, 1.0, 1.0, 5.0],
        vec![1.0, 0.0, 1.0, 1.0],
        vec![1.0, 1.0, 0.0, 1.0],
        vec![5.0, 1.0, 1.0, 0.0],
    ];
    let e = mds_embed(&d, 3).unwrap();
    assert!(e.eigenvalues.iter().any(|&l| l < -1e-9));
    assert!(!e.truncated.is_empty());
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(mds_embed(&[vec![0.0, 0.0], vec![0.0, 0.0]], 2).is_err());
    assert!(mds_embed(&[vec![0.0, 1.0]], 2).is_err());
    assert!(mds_embed(&[], 2).is_err());
}

#[test]
fn silhouette_bounds() {
    let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![5.0, 0.0], vec![5.0, 1.0]];
    let s = silhouette(&pts, &[0, 0, 1, 1]);
    assert!(s > 0.5 && s <= 1.0);
}
