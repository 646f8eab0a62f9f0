//! Exact discrete optimal transport.
//!
//! [`solve_transport`] runs the network simplex method on the bipartite
//! transportation graph: a spanning-tree basis started by the north-west
//! corner rule, node potentials solved along the tree, Dantzig pricing and a
//! switch to Bland's rule after a run of degenerate pivots. [`solve_assignment`]
//! is the shortest-augmenting-path Hungarian method for square problems.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::ConformalDensity;
use crate::error::{Error, Result};
use crate::hyperbolic::DiskPoint;
use crate::localcost::{cost_matrix, CostConfig, CostMatrix};

/// Pivot tolerance on reduced costs.
pub const PIVOT_TOL: f64 = 1e-11;
/// Largest tolerated difference between total row and column mass.
pub const BALANCE_TOL: f64 = 1e-9;

const DEGENERATE_RUN: usize = 50;

/// Balanced transportation problem with a dense cost matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportProblem {
    cost: Vec<Vec<f64>>,
    row_masses: Vec<f64>,
    col_masses: Vec<f64>,
}

impl TransportProblem {
    pub fn new(cost: Vec<Vec<f64>>, row_masses: Vec<f64>, col_masses: Vec<f64>) -> Result<Self> {
        let n = row_masses.len();
        let m = col_masses.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("transport problem has no rows or columns".into()));
        }
        if cost.len() != n || cost.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput(format!("cost matrix is not {n}×{m}")));
        }
        if cost.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidInput("costs must be finite and nonnegative".into()));
        }
        if row_masses.iter().chain(&col_masses).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("masses must be finite and nonnegative".into()));
        }
        let rows: f64 = row_masses.iter().sum();
        let cols: f64 = col_masses.iter().sum();
        if (rows - cols).abs() > BALANCE_TOL {
            return Err(Error::Unbalanced { rows, cols });
        }
        Ok(TransportProblem { cost, row_masses, col_masses })
    }

    /// Uniform masses `1/n` and `1/m`.
    pub fn uniform(cost: Vec<Vec<f64>>) -> Result<Self> {
        let n = cost.len();
        let m = cost.first().map_or(0, Vec::len);
        Self::new(cost, vec![1.0 / n.max(1) as f64; n], vec![1.0 / m.max(1) as f64; m])
    }

    pub fn from_cost_matrix(cost: &CostMatrix, row_masses: Vec<f64>, col_masses: Vec<f64>) -> Result<Self> {
        Self::new(cost.values.clone(), row_masses, col_masses)
    }

    pub fn cost(&self) -> &[Vec<f64>] {
        &self.cost
    }

    pub fn row_masses(&self) -> &[f64] {
        &self.row_masses
    }

    pub fn col_masses(&self) -> &[f64] {
        &self.col_masses
    }
}

/// One nonzero entry of a coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

/// Optimal coupling in sparse form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub coupling: Vec<Flow>,
    pub objective: f64,
    pub is_permutation: bool,
}

impl TransportPlan {
    fn new(rows: usize, cols: usize, mut coupling: Vec<Flow>, cost: &[Vec<f64>]) -> Self {
        coupling.retain(|f| f.mass > 0.0);
        coupling.sort_by_key(|f| (f.row, f.col));
        let objective = coupling.iter().map(|f| f.mass * cost[f.row][f.col]).sum();
        let is_permutation = rows == cols && coupling.len() == rows && {
            let target = 1.0 / rows as f64;
            let mut seen_rows = vec![false; rows];
            let mut seen_cols = vec![false; cols];
            coupling.iter().all(|f| {
                let fresh = !seen_rows[f.row] && !seen_cols[f.col];
                seen_rows[f.row] = true;
                seen_cols[f.col] = true;
                fresh && (f.mass - target).abs() <= 1e-9
            })
        };
        TransportPlan { rows, cols, coupling, objective, is_permutation }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for f in &self.coupling {
            s[f.row] += f.mass;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for f in &self.coupling {
            s[f.col] += f.mass;
        }
        s
    }

    /// `Σ π_ij c_ij` for another cost of the same shape.
    pub fn cost_under(&self, cost: &[Vec<f64>]) -> f64 {
        self.coupling.iter().map(|f| f.mass * cost[f.row][f.col]).sum()
    }

    /// Target column of each row when the plan is a permutation.
    pub fn permutation(&self) -> Option<Vec<usize>> {
        self.is_permutation.then(|| self.coupling.iter().map(|f| f.col).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `i,j,mass` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,mass\n");
        for f in &self.coupling {
            writeln!(out, "{},{},{}", f.row, f.col, f.mass).expect("writing to a string");
        }
        out
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

// Spanning-tree basis of the transportation graph: rows are nodes 0..n,
// columns n..n+m.
struct Basis {
    n: usize,
    m: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
}

impl Basis {
    fn north_west(rows: &[f64], cols: &[f64]) -> Self {
        let (n, m) = (rows.len(), cols.len());
        let (mut r, mut c) = (rows.to_vec(), cols.to_vec());
        let mut basis = Basis {
            n,
            m,
            cells: Vec::with_capacity(n + m - 1),
            flow: Vec::with_capacity(n + m - 1),
            adjacency: vec![Vec::new(); n + m],
        };
        let (mut i, mut j) = (0, 0);
        loop {
            let x = r[i].min(c[j]).max(0.0);
            r[i] -= x;
            c[j] -= x;
            basis.push(i, j, x);
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || r[i] <= c[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        // rounding residue of nearly balanced masses
        let last = basis.flow.len() - 1;
        basis.flow[last] += r[n - 1].max(c[m - 1]).max(0.0);
        basis
    }

    fn push(&mut self, i: usize, j: usize, x: f64) {
        let id = self.cells.len();
        self.cells.push((i, j));
        self.flow.push(x);
        self.adjacency[i].push(id);
        self.adjacency[self.n + j].push(id);
    }

    fn other_end(&self, id: usize, node: usize) -> usize {
        let (i, j) = self.cells[id];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    fn potentials(&self, cost: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.n + self.m];
        let mut queue = VecDeque::from([0usize]);
        pot[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &id in &self.adjacency[node] {
                let next = self.other_end(id, node);
                if pot[next].is_nan() {
                    let (i, j) = self.cells[id];
                    // u_i + v_j = c_ij
                    pot[next] = cost[i][j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.n);
        (pot, v)
    }

    // basis cells on the tree path from row `p` to column `q`, in order
    fn path(&self, p: usize, q: usize) -> Vec<usize> {
        let target = self.n + q;
        let mut via = vec![usize::MAX; self.n + self.m];
        let mut queue = VecDeque::from([p]);
        via[p] = usize::MAX - 1;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &id in &self.adjacency[node] {
                let next = self.other_end(id, node);
                if via[next] == usize::MAX {
                    via[next] = id;
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != p {
            let id = via[node];
            cells.push(id);
            node = self.other_end(id, node);
        }
        cells.reverse();
        cells
    }

    fn replace(&mut self, leaving: usize, i: usize, j: usize, x: f64) {
        let (a, b) = self.cells[leaving];
        self.adjacency[a].retain(|&c| c != leaving);
        self.adjacency[self.n + b].retain(|&c| c != leaving);
        self.cells[leaving] = (i, j);
        self.flow[leaving] = x;
        self.adjacency[i].push(leaving);
        self.adjacency[self.n + j].push(leaving);
    }
}

/// Optimal plan of a balanced transportation problem.
pub fn solve_transport(problem: &TransportProblem) -> Result<TransportPlan> {
    let cost = &problem.cost;
    let (n, m) = (problem.row_masses.len(), problem.col_masses.len());
    let mut basis = Basis::north_west(&problem.row_masses, &problem.col_masses);
    let scale = cost.iter().flatten().fold(1.0f64, |a, &c| a.max(c));
    let tol = PIVOT_TOL * scale;

    let max_iterations = 100 * (n + m) * (n + m) + 1000;
    let mut degenerate = 0usize;
    for _ in 0..max_iterations {
        let (u, v) = basis.potentials(cost);
        let bland = degenerate >= DEGENERATE_RUN;
        let mut entering = None;
        let mut most_negative = -tol;
        'pricing: for i in 0..n {
            for j in 0..m {
                let reduced = cost[i][j] - u[i] - v[j];
                if reduced < most_negative {
                    entering = Some((i, j));
                    if bland {
                        break 'pricing;
                    }
                    most_negative = reduced;
                }
            }
        }
        let Some((p, q)) = entering else {
            let coupling = basis
                .cells
                .iter()
                .zip(&basis.flow)
                .map(|(&(row, col), &mass)| Flow { row, col, mass })
                .collect();
            return Ok(TransportPlan::new(n, m, coupling, cost));
        };

        // cells alternate -, +, -, ... along the path from row p to column q
        let path = basis.path(p, q);
        let mut leaving = usize::MAX;
        let mut theta = f64::INFINITY;
        for &id in path.iter().step_by(2) {
            let better = basis.flow[id] < theta || (basis.flow[id] == theta && bland && basis.cells[id] < basis.cells[leaving]);
            if better {
                theta = basis.flow[id];
                leaving = id;
            }
        }
        for (k, &id) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis.flow[id] = (basis.flow[id] - theta).max(0.0);
            } else {
                basis.flow[id] += theta;
            }
        }
        basis.replace(leaving, p, q, theta);
        degenerate = if theta == 0.0 { degenerate + 1 } else { 0 };
    }
    Err(Error::NoConvergence {
        what: "network simplex".into(),
        iterations: max_iterations,
    })
}

/// Reduced costs `c_ij - u_i - v_j` are all `≥ -tol` for potentials solved on
/// the plan's support; an optimality certificate for tree-shaped supports.
pub fn dual_certificate(problem: &TransportProblem, plan: &TransportPlan) -> Option<f64> {
    let (n, m) = (plan.rows, plan.cols);
    let cost = &problem.cost;
    let mut pot = vec![f64::NAN; n + m];
    let mut adjacency = vec![Vec::new(); n + m];
    for f in &plan.coupling {
        adjacency[f.row].push(n + f.col);
        adjacency[n + f.col].push(f.row);
    }
    for root in 0..n + m {
        if !pot[root].is_nan() {
            continue;
        }
        pot[root] = 0.0;
        let mut queue = VecDeque::from([root]);
        while let Some(node) = queue.pop_front() {
            for &next in &adjacency[node] {
                if pot[next].is_nan() {
                    let (i, j) = if node < n { (node, next - n) } else { (next, node - n) };
                    pot[next] = cost[i][j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
    }
    // separate support components may be shifted against each other; only
    // report the certificate when the support is connected
    let connected = plan.coupling.len() + 1 >= n + m;
    connected.then(|| {
        let mut worst = f64::INFINITY;
        for i in 0..n {
            for j in 0..m {
                worst = worst.min(cost[i][j] - pot[i] - pot[n + j]);
            }
        }
        worst
    })
}

/// Minimum-cost perfect matching of a square matrix; returns the column
/// assigned to each row and the total cost.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("assignment needs a nonempty square matrix".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("assignment costs must be finite".into()));
    }
    // potentials u (rows), v (columns), 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if reduced < min_to[j] {
                        min_to[j] = reduced;
                        way[j] = j0;
                    }
                    if min_to[j] < delta {
                        delta = min_to[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((assignment, total))
}

/// Indices of the samples used as transport support, with their masses.
/// All samples when `n_points` is at least the sample count, otherwise a
/// mass-systematic subsample in index order (offset one half), duplicates
/// merged. Masses are rescaled to sum to one.
pub fn support(density: &ConformalDensity, n_points: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be positive".into()));
    }
    let masses = density.masses();
    let total: f64 = masses.iter().sum();
    if n_points >= masses.len() {
        return Ok(((0..masses.len()).collect(), masses.iter().map(|w| w / total).collect()));
    }
    let mut picked: Vec<(usize, f64)> = Vec::with_capacity(n_points);
    let mut cumulative = 0.0;
    let mut next = 0usize;
    for (i, &w) in masses.iter().enumerate() {
        cumulative += w / total;
        while next < n_points && (next as f64 + 0.5) / n_points as f64 <= cumulative {
            match picked.last_mut() {
                Some(last) if last.0 == i => last.1 += 1.0 / n_points as f64,
                _ => picked.push((i, 1.0 / n_points as f64)),
            }
            next += 1;
        }
    }
    while next < n_points {
        let i = masses.len() - 1;
        match picked.last_mut() {
            Some(last) if last.0 == i => last.1 += 1.0 / n_points as f64,
            _ => picked.push((i, 1.0 / n_points as f64)),
        }
        next += 1;
    }
    Ok(picked.into_iter().unzip())
}

/// `T^R_d(μ, ν)` with its optimal plan and the cost matrix it was solved on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedDistance {
    pub distance: f64,
    pub plan: TransportPlan,
    /// Sample indices of the plan's rows and columns.
    pub row_support: Vec<usize>,
    pub col_support: Vec<usize>,
    pub cost: CostMatrix,
}

/// Kantorovich distance with the local cost `d^R` as ground cost.
pub fn generalized_distance(
    mu: &ConformalDensity,
    nu: &ConformalDensity,
    cfg: &CostConfig,
    n_points: usize,
) -> Result<GeneralizedDistance> {
    let (rows, row_masses) = support(mu, n_points)?;
    let (cols, col_masses) = support(nu, n_points)?;
    let row_points: Vec<DiskPoint> = rows.iter().map(|&i| mu.samples()[i].point).collect();
    let col_points: Vec<DiskPoint> = cols.iter().map(|&j| nu.samples()[j].point).collect();
    let cost = cost_matrix(mu, nu, &row_points, &col_points, cfg)?;
    let problem = TransportProblem::from_cost_matrix(&cost, row_masses, col_masses)?;
    let plan = solve_transport(&problem)?;
    Ok(GeneralizedDistance {
        distance: plan.objective,
        plan,
        row_support: rows,
        col_support: cols,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn north_west_basis_is_a_spanning_tree() {
        let b = Basis::north_west(&[0.5, 0.5], &[0.25, 0.25, 0.5]);
        assert_eq!(b.cells.len(), 4);
        let total: f64 = b.flow.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(b.path(0, 2).len(), 3);
    }

    #[test]
    fn tiny_problems() {
        let p = TransportProblem::uniform(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let plan = solve_transport(&p).unwrap();
        assert_eq!(plan.objective, 0.0);
        assert!(plan.is_permutation);
        assert_eq!(plan.permutation().unwrap(), vec![0, 1]);

        let p = TransportProblem::uniform(vec![vec![3.5]]).unwrap();
        let plan = solve_transport(&p).unwrap();
        assert_eq!(plan.coupling, vec![Flow { row: 0, col: 0, mass: 1.0 }]);
        assert_eq!(plan.objective, 3.5);
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(matches!(
            TransportProblem::new(vec![vec![1.0]], vec![1.0], vec![0.5]),
            Err(Error::Unbalanced { .. })
        ));
        assert!(TransportProblem::uniform(vec![vec![f64::NAN]]).is_err());
        assert!(TransportProblem::uniform(vec![vec![-1.0]]).is_err());
        assert!(TransportProblem::new(vec![vec![1.0, 2.0]], vec![1.0], vec![1.0]).is_err());
        assert!(solve_assignment(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn assignment_examples() {
        let eye = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        assert_eq!(solve_assignment(&eye).unwrap(), (vec![0, 1, 2], 0.0));
        let anti = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(solve_assignment(&anti).unwrap(), (vec![2, 1, 0], 0.0));
    }

    #[test]
    fn csv_rows() {
        let p = TransportProblem::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let plan = solve_transport(&p).unwrap();
        assert_eq!(plan.to_csv(), "source,target,mass\n0,1,0.5\n1,0,0.5\n");
    }
}
