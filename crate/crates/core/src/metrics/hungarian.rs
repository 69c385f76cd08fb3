//! Minimum-cost rectangular assignment.
//!
//! The matrix is padded to a square with zero-cost dummy rows or columns and
//! solved with the shortest-augmenting-path Hungarian method. The dual
//! potentials then describe every optimal assignment at once (the perfect
//! matchings of the tight-edge graph), which is searched greedily for the
//! lexicographically smallest sorted pair list.

use super::{MetricsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Assignment {
    /// Column assigned to each row, if any.
    pub fn row_to_col(&self, rows: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; rows];
        for &(r, c) in &self.pairs {
            out[r] = Some(c);
        }
        out
    }
}

pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    if cost.iter().any(|r| r.len() != m) {
        return Err(MetricsError::RaggedMatrix);
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(MetricsError::NonFiniteCost);
    }
    let k = n.max(m);
    let padded = |i: usize, j: usize| if i < n && j < m { cost[i][j] } else { 0.0 };
    let (u, v) = solve_square(k, &padded);
    let scale = cost.iter().flatten().fold(1.0f64, |a, c| a.max(c.abs()));
    let eps = 1e-9 * scale;
    let tight: Vec<Vec<bool>> = (0..k)
        .map(|i| (0..k).map(|j| padded(i, j) - u[i] - v[j] <= eps).collect())
        .collect();
    let pairs = lexicographic_optimum(n, m, k, &tight);
    let total = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok(Assignment { pairs, total })
}

/// Returns row and column potentials of an optimal square assignment.
fn solve_square(k: usize, c: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
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
    (u[1..].to_vec(), v[1..].to_vec())
}

/// Row constraint used while probing feasibility.
#[derive(Clone, Copy, PartialEq)]
enum RowRule {
    Free,
    Only(usize),
    DummyOnly,
}

fn lexicographic_optimum(n: usize, m: usize, k: usize, tight: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let target = n.min(m);
    let mut rules = vec![RowRule::Free; k];
    let mut pairs = Vec::with_capacity(target);
    let mut next_row = 0;
    while pairs.len() < target {
        let mut committed = false;
        'search: for i in next_row..n {
            for j in 0..m {
                if !tight[i][j] || rules.contains(&RowRule::Only(j)) {
                    continue;
                }
                let mut trial = rules.clone();
                for r in trial.iter_mut().take(i).skip(next_row) {
                    *r = RowRule::DummyOnly;
                }
                trial[i] = RowRule::Only(j);
                if has_perfect_matching(k, m, tight, &trial) {
                    rules = trial;
                    pairs.push((i, j));
                    next_row = i + 1;
                    committed = true;
                    break 'search;
                }
            }
        }
        assert!(committed, "tight graph always admits the optimal assignment");
    }
    pairs
}

fn has_perfect_matching(k: usize, m: usize, tight: &[Vec<bool>], rules: &[RowRule]) -> bool {
    let allowed = |i: usize, j: usize| {
        tight[i][j]
            && match rules[i] {
                RowRule::Free => !rules.contains(&RowRule::Only(j)),
                RowRule::Only(c) => c == j,
                RowRule::DummyOnly => j >= m,
            }
    };
    let mut match_col = vec![usize::MAX; k];
    for i in 0..k {
        let mut seen = vec![false; k];
        if !augment(i, k, &allowed, &mut seen, &mut match_col) {
            return false;
        }
    }
    true
}

fn augment(
    i: usize,
    k: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
    seen: &mut [bool],
    match_col: &mut [usize],
) -> bool {
    for j in 0..k {
        if allowed(i, j) && !seen[j] {
            seen[j] = true;
            if match_col[j] == usize::MAX || augment(match_col[j], k, allowed, seen, match_col) {
                match_col[j] = i;
                return true;
            }
        }
    }
    false
}
