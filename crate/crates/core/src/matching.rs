//! Min-cost bipartite matching (Hungarian method with potentials).
//!
//! `assign` handles rectangular `rows <= cols` instances and returns an
//! injective row-to-column map; `min_cost_matching` is the square case.

use crate::error::{invalid, Result};

/// Square min-cost perfect matching. Returns `(perm, cost)` where row `i`
/// is matched to column `perm[i]`.
pub fn min_cost_matching(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if let Some((i, row)) = cost.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(invalid(format!(
            "cost matrix is not square: row {i} has {} entries, expected {n}",
            row.len()
        )));
    }
    assign(cost)
}

/// Min-cost injective assignment of every row to a distinct column.
/// Requires `rows <= cols` and finite entries.
pub fn assign(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m) {
        return Err(invalid("cost matrix rows have differing lengths"));
    }
    if n > m {
        return Err(invalid(format!("cannot assign {n} rows into {m} columns")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix has non-finite entries"));
    }
    let perm = hungarian(n, m, |i, j| cost[i][j]);
    let total = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((perm, total))
}

/// Core O(n^2 m) shortest-augmenting-path solver. `a(i, j)` is the cost of
/// row `i`, column `j` (0-based).
pub(crate) fn hungarian(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based internally; column 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![f64::INFINITY; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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

    let mut perm = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}
