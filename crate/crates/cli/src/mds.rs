//! Classical (Torgerson) multidimensional scaling.

use anyhow::{bail, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Embedding {
    /// One row of `dim` coordinates per input point.
    pub coordinates: Vec<Vec<f64>>,
    /// All eigenvalues of the double-centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Negative eigenvalues among the kept `dim`, replaced by zero.
    pub truncated: Vec<f64>,
}

impl Embedding {
    pub fn to_csv(&self, labels: &[String]) -> String {
        let dim = self.coordinates.first().map_or(0, Vec::len);
        let mut out = String::from("label");
        for k in 0..dim {
            out.push_str(&format!(",x{}", k + 1));
        }
        out.push('\n');
        for (label, row) in labels.iter().zip(&self.coordinates) {
            out.push_str(label);
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Embeds a symmetric distance matrix in `dim` dimensions.
pub fn mds_embed(distances: &[Vec<f64>], dim: usize) -> Result<Embedding> {
    let n = distances.len();
    if n == 0 || distances.iter().any(|row| row.len() != n) {
        bail!("distance matrix must be square and nonempty");
    }
    if dim == 0 {
        bail!("embedding dimension must be positive");
    }
    if distances.iter().flatten().any(|d| !d.is_finite()) {
        bail!("distance matrix has non-finite entries");
    }
    if distances.iter().flatten().all(|&d| d == 0.0) {
        bail!("distance matrix is all zero; nothing to embed");
    }
    let sq = DMatrix::from_fn(n, n, |i, j| distances[i][j].powi(2));
    let centering = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let gram = -0.5 * &centering * sq * &centering;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut coordinates = vec![vec![0.0; dim]; n];
    let mut truncated = Vec::new();
    for (k, &e) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[e];
        if lambda < 0.0 {
            truncated.push(lambda);
            continue;
        }
        let scale = lambda.sqrt();
        for (i, row) in coordinates.iter_mut().enumerate() {
            row[k] = eig.eigenvectors[(i, e)] * scale;
        }
    }
    Ok(Embedding {
        coordinates,
        eigenvalues: order.iter().map(|&e| eig.eigenvalues[e]).collect(),
        truncated,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient of a labelled point set.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
        for j in (0..n).filter(|&j| j != i) {
            let e = sums.entry(labels[j]).or_default();
            e.0 += euclidean(&points[i], &points[j]);
            e.1 += 1;
        }
        let Some(&(own, count)) = sums.get(&labels[i]) else { continue };
        let a = own / count as f64;
        let b = sums
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, (s, c))| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}
