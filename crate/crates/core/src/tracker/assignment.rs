//! Exact min-cost bipartite assignment (Hungarian algorithm with potentials,
//! O(n^2 m)) plus a documented greedy fallback. Infeasible pairs carry
//! `FORBIDDEN`; because one forbidden edge outweighs any sum of feasible
//! ones, the exact solver maximizes the number of feasible matches first and
//! minimizes their total cost second. Forbidden pairs in the arg-min are
//! dropped from the returned matching.

pub const FORBIDDEN: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentResult {
    /// (row, col) pairs with feasible cost, sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Solve the assignment exactly. `cost` is rectangular (rows x cols); any
/// entry >= FORBIDDEN / 2 is treated as infeasible.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> AssignmentResult {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return AssignmentResult {
            matches: Vec::new(),
            unmatched_rows: (0..n).collect(),
            unmatched_cols: (0..m).collect(),
        };
    }
    // The potentials formulation needs rows <= cols; transpose if not.
    let transposed = n > m;
    let (rows, cols) = if transposed { (m, n) } else { (n, m) };
    let at = |i: usize, j: usize| -> f64 {
        if transposed {
            cost[j][i]
        } else {
            cost[i][j]
        }
    };

    // 1-based arrays; p[j] is the row assigned to column j, p[0] the row
    // currently seeking a column.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut matches = Vec::new();
    for (j, &pj) in p.iter().enumerate().skip(1) {
        if pj == 0 {
            continue;
        }
        let (row, col) = if transposed { (j - 1, pj - 1) } else { (pj - 1, j - 1) };
        if cost[row][col] < FORBIDDEN / 2.0 {
            matches.push((row, col));
        }
    }
    matches.sort_unstable();
    finish(n, m, matches)
}

/// Greedy nearest-first fallback: repeatedly take the globally cheapest
/// feasible pair. Can swap identities that the exact solver keeps; only for
/// configurations that opt in.
pub fn greedy_assignment(cost: &[Vec<f64>]) -> AssignmentResult {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c < FORBIDDEN / 2.0 {
                edges.push((c, i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; m];
    let mut matches = Vec::new();
    for (_, i, j) in edges {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            matches.push((i, j));
        }
    }
    matches.sort_unstable();
    finish(n, m, matches)
}

fn finish(n: usize, m: usize, matches: Vec<(usize, usize)>) -> AssignmentResult {
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; m];
    for &(i, j) in &matches {
        row_used[i] = true;
        col_used[j] = true;
    }
    AssignmentResult {
        matches,
        unmatched_rows: (0..n).filter(|&i| !row_used[i]).collect(),
        unmatched_cols: (0..m).filter(|&j| !col_used[j]).collect(),
    }
}
