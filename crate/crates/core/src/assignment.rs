//! Kuhn–Munkres assignment for rectangular cost matrices (rows ≤ columns).
//!
//! The solver runs the shortest-augmenting-path form of the Hungarian method
//! directly on the `R × C` matrix, which is equivalent to padding the matrix
//! to `C × C` with constant dummy rows but costs `O(R²·C)` instead of `O(C³)`.
//! Among optimal assignments the lexicographically smallest column sequence is
//! returned, so results never depend on solver internals.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Dense row-major cost matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CostMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub columns: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost one-to-one assignment of every row to a distinct column.
pub fn hungarian_assign(cost: &CostMatrix) -> Result<Assignment> {
    let (n, m) = (cost.rows, cost.cols);
    if n > m {
        return Err(Error::OutOfRange {
            what: "assignment rows (columns must be at least rows)",
            requested: n,
            available: m,
        });
    }
    if cost.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    if n == 0 {
        return Ok(Assignment {
            columns: Vec::new(),
            total_cost: 0.0,
        });
    }

    let (columns, u, v) = solve_with_duals(cost);
    let total = total_of(cost, &columns);

    let scale = cost.data.iter().fold(0.0_f64, |a, &b| a.max(math::abs(b)));
    let eps = 1e-9 * (1.0 + scale);
    if let Some(lex) = lexicographic_optimum(cost, &u, &v, eps) {
        let lex_total = total_of(cost, &lex);
        if lex_total <= total {
            return Ok(Assignment {
                columns: lex,
                total_cost: lex_total,
            });
        }
    }
    Ok(Assignment {
        columns,
        total_cost: total,
    })
}

fn total_of(cost: &CostMatrix, columns: &[usize]) -> f64 {
    columns.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum()
}

/// Returns the assignment together with row and column potentials.
fn solve_with_duals(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let (n, m) = (cost.rows, cost.cols);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // owner[j] = 1-based row matched to 1-based column j, 0 when free.
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = cost.row(i0 - 1);
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
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

    let mut columns = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            columns[owner[j] - 1] = j - 1;
        }
    }
    // Drop the virtual slot 0 so indices line up with the matrix.
    (columns, u[1..].to_vec(), v[1..].to_vec())
}

/// Greedy row-by-row smallest-column choice restricted to optimal assignments.
///
/// With optimal duals `(u, v)`, an assignment is optimal iff it only uses tight
/// edges and covers every column whose potential is negative. Each tentative
/// choice is kept only if such a completion still exists.
fn lexicographic_optimum(cost: &CostMatrix, u: &[f64], v: &[f64], eps: f64) -> Option<Vec<usize>> {
    let (n, m) = (cost.rows, cost.cols);
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let row = cost.row(i);
            (0..m).filter(|&j| row[j] - u[i] - v[j] <= eps).collect()
        })
        .collect();
    let must_cover: Vec<bool> = v.iter().map(|&vj| vj < -eps).collect();

    let mut col_taken = vec![false; m];
    let mut chosen = Vec::with_capacity(n);
    for i in 0..n {
        let mut accepted = None;
        for &j in &tight[i] {
            if col_taken[j] {
                continue;
            }
            col_taken[j] = true;
            if completion_exists(&tight, i + 1, &col_taken, &must_cover) {
                accepted = Some(j);
                break;
            }
            col_taken[j] = false;
        }
        chosen.push(accepted?);
    }
    Some(chosen)
}

fn completion_exists(tight: &[Vec<usize>], first_row: usize, taken: &[bool], must_cover: &[bool]) -> bool {
    let rows: Vec<usize> = (first_row..tight.len()).collect();
    let m = taken.len();

    // Every remaining row can be matched.
    let mut col_owner = vec![usize::MAX; m];
    for &r in &rows {
        let mut seen = vec![false; m];
        if !augment_row(r, tight, taken, &mut col_owner, &mut seen) {
            return false;
        }
    }

    // Every remaining must-cover column can be matched (Mendelsohn–Dulmage:
    // both saturations together imply one matching that does both).
    let pending: Vec<usize> = (0..m).filter(|&j| must_cover[j] && !taken[j]).collect();
    if pending.is_empty() {
        return true;
    }
    if pending.len() > rows.len() {
        return false;
    }
    let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &r in &rows {
        for &j in &tight[r] {
            if !taken[j] {
                by_col[j].push(r);
            }
        }
    }
    let mut row_owner = vec![usize::MAX; tight.len()];
    for &j in &pending {
        let mut seen = vec![false; tight.len()];
        if !augment_col(j, &by_col, &mut row_owner, &mut seen) {
            return false;
        }
    }
    true
}

fn augment_row(r: usize, tight: &[Vec<usize>], taken: &[bool], owner: &mut [usize], seen: &mut [bool]) -> bool {
    for &j in &tight[r] {
        if taken[j] || seen[j] {
            continue;
        }
        seen[j] = true;
        if owner[j] == usize::MAX || augment_row(owner[j], tight, taken, owner, seen) {
            owner[j] = r;
            return true;
        }
    }
    false
}

fn augment_col(j: usize, by_col: &[Vec<usize>], owner: &mut [usize], seen: &mut [bool]) -> bool {
    for &r in &by_col[j] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        if owner[r] == usize::MAX {
            owner[r] = j;
            return true;
        }
        let prev = owner[r];
        if augment_col(prev, by_col, owner, seen) {
            owner[r] = j;
            return true;
        }
    }
    false
}
