//! Tiny dense solvers: Gaussian elimination for the Bézier fits and a Jacobi
//! eigensolver for 3×3 covariance matrices.

use crate::math;

/// Solve `a · x = b` for a 4×4 system with three right-hand sides (x, y, z).
/// Returns `None` when a pivot falls below `tol` relative to the matrix scale.
pub(crate) fn solve4(mut a: [[f64; 4]; 4], mut b: [[f64; 3]; 4], tol: f64) -> Option<[[f64; 3]; 4]> {
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, &v| m.max(math::abs(v)));
    if scale == 0.0 {
        return None;
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| math::abs(a[i][col]).total_cmp(&math::abs(a[j][col])))
            .unwrap_or(col);
        if math::abs(a[pivot][col]) <= tol * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..3 {
                b[row][k] -= f * b[col][k];
            }
        }
    }
    let mut x = [[0.0; 3]; 4];
    for row in (0..4).rev() {
        for k in 0..3 {
            let mut s = b[row][k];
            for j in row + 1..4 {
                s -= a[row][j] * x[j][k];
            }
            x[row][k] = s / a[row][row];
        }
    }
    Some(x)
}

/// Solve the row-major `n×n` system `a · x = b` in place; `b` becomes `x`.
/// Returns false on a zero pivot.
pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| math::abs(a[i * n + col]).total_cmp(&math::abs(a[j * n + col])))
            .unwrap_or(col);
        if a[pivot * n + col] == 0.0 || !a[pivot * n + col].is_finite() {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for j in row + 1..n {
            s -= a[row * n + j] * b[j];
        }
        b[row] = s / a[row * n + row];
    }
    true
}

/// Eigen-decomposition of a symmetric 3×3 matrix. Eigenvalues are returned in
/// descending order with unit eigenvectors as the matching columns.
pub(crate) fn symmetric_eigen3(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if math::abs(a[p][q]) < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
            let t = sign / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
            let c = 1.0 / math::sqrt(t * t + 1.0);
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = [a[idx[0]][idx[0]], a[idx[1]][idx[1]], a[idx[2]][idx[2]]];
    let mut vectors = [[0.0; 3]; 3];
    for (col, &src) in idx.iter().enumerate() {
        for row in 0..3 {
            vectors[row][col] = v[row][src];
        }
    }
    (values, vectors)
}
