use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::geometry::Point3;
use crate::linalg;
use crate::math;

/// Segments of the piecewise-linear arc-length table.
pub const ARC_LENGTH_SEGMENTS: usize = 1024;

const NEWTON_STEPS: usize = 10;
const RIDGE: f64 = 1e-9;

/// A cubic Bézier curve given by its four control points.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct BezierCurve {
    pub control: [Point3; 4],
}

#[inline]
fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

impl BezierCurve {
    pub fn new(control: [Point3; 4]) -> Result<Self> {
        if control.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("Bézier control points"));
        }
        Ok(BezierCurve { control })
    }

    /// `B(t)` for `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> Result<Point3> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(alloc::format!("curve parameter {t} outside [0, 1]")));
        }
        Ok(self.point_at(t))
    }

    #[inline]
    pub(crate) fn point_at(&self, t: f64) -> Point3 {
        let b = bernstein(t);
        let [p0, p1, p2, p3] = self.control;
        p0 * b[0] + p1 * b[1] + p2 * b[2] + p3 * b[3]
    }

    fn derivative(&self, t: f64) -> Point3 {
        let [p0, p1, p2, p3] = self.control;
        let s = 1.0 - t;
        (p1 - p0) * (3.0 * s * s) + (p2 - p1) * (6.0 * s * t) + (p3 - p2) * (3.0 * t * t)
    }

    fn second_derivative(&self, t: f64) -> Point3 {
        let [p0, p1, p2, p3] = self.control;
        (p2 - p1 * 2.0 + p0) * (6.0 * (1.0 - t)) + (p3 - p2 * 2.0 + p1) * (6.0 * t)
    }

    /// Cumulative arc length at `t_k = k / segments`, `k = 0..=segments`.
    pub(crate) fn arc_length_table(&self, segments: usize) -> Vec<f64> {
        let mut table = Vec::with_capacity(segments + 1);
        table.push(0.0);
        let mut prev = self.control[0];
        let mut acc = 0.0;
        for k in 1..=segments {
            let p = self.point_at(k as f64 / segments as f64);
            acc += p.distance(prev);
            table.push(acc);
            prev = p;
        }
        table
    }

    pub fn arc_length(&self) -> f64 {
        *self.arc_length_table(ARC_LENGTH_SEGMENTS).last().unwrap_or(&0.0)
    }

    /// `n ≥ 2` points evenly spaced in arc length, from `P0` to `P3`.
    pub fn sample_uniform(&self, n: usize) -> Result<Vec<Point3>> {
        if n < 2 {
            return Err(invalid("uniform sampling needs at least 2 points"));
        }
        let table = self.arc_length_table(ARC_LENGTH_SEGMENTS);
        let total = table[ARC_LENGTH_SEGMENTS];
        let mut out = Vec::with_capacity(n);
        out.push(self.control[0]);
        let mut seg = 0usize;
        for j in 1..n - 1 {
            let target = total * j as f64 / (n - 1) as f64;
            while seg + 1 < ARC_LENGTH_SEGMENTS && table[seg + 1] < target {
                seg += 1;
            }
            let len = table[seg + 1] - table[seg];
            let frac = if len > 0.0 {
                ((target - table[seg]) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t = (seg as f64 + frac) / ARC_LENGTH_SEGMENTS as f64;
            out.push(self.point_at(t));
        }
        out.push(self.control[3]);
        Ok(out)
    }

    /// Newton refinement of the foot-point equation `(B(t) − q)·B'(t) = 0`
    /// starting from `t0`; never returns a parameter farther from `q` than `t0`.
    pub(crate) fn project(&self, q: Point3, t0: f64) -> f64 {
        let mut best_t = t0;
        let mut best_d2 = self.point_at(t0).distance_squared(q);
        let mut t = t0;
        for _ in 0..NEWTON_STEPS {
            let diff = self.point_at(t) - q;
            let d1 = self.derivative(t);
            let f = diff.dot(d1);
            let df = d1.dot(d1) + diff.dot(self.second_derivative(t));
            if !(math::abs(df) > 1e-300) {
                break;
            }
            let next = (t - f / df).clamp(0.0, 1.0);
            let d2 = self.point_at(next).distance_squared(q);
            if d2 < best_d2 {
                best_d2 = d2;
                best_t = next;
            }
            if next == t {
                break;
            }
            t = next;
        }
        best_t
    }
}

/// Result of [`fit_bezier`].
#[derive(Clone, Debug, PartialEq)]
pub struct BezierFit {
    pub curve: BezierCurve,
    /// RMS point-to-curve distance of the targets.
    pub residual: f64,
    /// Number of reparameterize-then-solve rounds performed.
    pub iterations: usize,
    /// Residual after the initial solve and after every round; non-increasing.
    pub history: Vec<f64>,
    /// The normal equations were singular and a ridge term was added.
    pub regularized: bool,
}

/// Chord-length parameters of an ordered point sequence.
/// Cumulative `‖Δp‖^power` normalized to [0, 1]: 0 gives uniform, 0.5
/// centripetal and 1 chord-length parameters.
pub(crate) fn chord_params(points: &[Point3], power: f64) -> Vec<f64> {
    let mut t = vec![0.0; points.len()];
    for i in 1..points.len() {
        let d = points[i].distance(points[i - 1]);
        t[i] = t[i - 1] + if power == 0.0 { 1.0 } else { math::pow(d, power) };
    }
    let total = *t.last().unwrap_or(&0.0);
    if total > 0.0 {
        for v in t.iter_mut() {
            *v /= total;
        }
    } else {
        let n = (points.len() - 1).max(1) as f64;
        for (i, v) in t.iter_mut().enumerate() {
            *v = i as f64 / n;
        }
    }
    if let Some(last) = t.last_mut() {
        *last = 1.0;
    }
    t
}

fn solve_control_points(targets: &[Point3], params: &[f64]) -> (BezierCurve, bool) {
    let mut ata = [[0.0; 4]; 4];
    let mut atb = [[0.0; 3]; 4];
    for (q, &t) in targets.iter().zip(params) {
        let b = bernstein(t);
        for r in 0..4 {
            for c in 0..4 {
                ata[r][c] += b[r] * b[c];
            }
            atb[r][0] += b[r] * q.x;
            atb[r][1] += b[r] * q.y;
            atb[r][2] += b[r] * q.z;
        }
    }
    let (solution, regularized) = match linalg::solve4(ata, atb, 1e-13) {
        Some(x) => (x, false),
        None => {
            let mut ridge = ata;
            for (i, row) in ridge.iter_mut().enumerate() {
                row[i] += RIDGE;
            }
            // A ridge-regularized Gram matrix is positive definite.
            (linalg::solve4(ridge, atb, 0.0).unwrap_or([[0.0; 3]; 4]), true)
        }
    };
    let control = [
        Point3::from(solution[0]),
        Point3::from(solution[1]),
        Point3::from(solution[2]),
        Point3::from(solution[3]),
    ];
    (BezierCurve { control }, regularized)
}

const POLISH_ITERS: usize = 100;

/// Levenberg–Marquardt over the control points and interior parameters
/// jointly, from the alternating fit's solution. The parameter block of the
/// normal equations is diagonal, so it is eliminated and only a 12×12 system
/// is solved per step. End parameters stay pinned.
fn polish(curve: &BezierCurve, targets: &[Point3], params: &[f64]) -> (BezierCurve, Vec<f64>) {
    let n = targets.len();
    let mut best = *curve;
    let mut t = params.to_vec();
    let mut cost = sq_cost(&best, targets, &t);
    let mut mu = 1e-3;
    for _ in 0..POLISH_ITERS {
        if cost == 0.0 || mu > 1e12 {
            break;
        }
        let mut a = [0.0; 144];
        let mut g = [0.0; 12];
        let mut cross = vec![[0.0; 12]; n];
        let mut d = vec![0.0; n];
        let mut gt = vec![0.0; n];
        for i in 0..n {
            let b = bernstein(t[i]);
            let r = (best.point_at(t[i]) - targets[i]).to_array();
            for j in 0..4 {
                for c in 0..3 {
                    g[j * 3 + c] += b[j] * r[c];
                }
                for k in 0..4 {
                    for c in 0..3 {
                        a[(j * 3 + c) * 12 + k * 3 + c] += b[j] * b[k];
                    }
                }
            }
            if i == 0 || i == n - 1 {
                continue;
            }
            let dv = best.derivative(t[i]).to_array();
            for j in 0..4 {
                for c in 0..3 {
                    cross[i][j * 3 + c] = b[j] * dv[c];
                }
            }
            d[i] = dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2];
            gt[i] = dv[0] * r[0] + dv[1] * r[1] + dv[2] * r[2];
        }

        let mut s = a;
        for j in 0..12 {
            s[j * 12 + j] *= 1.0 + mu;
        }
        let mut rhs = g.map(|v| -v);
        let dd: Vec<f64> = d.iter().map(|&v| v * (1.0 + mu) + 1e-300).collect();
        for i in 1..n - 1 {
            let bi = &cross[i];
            for j in 0..12 {
                rhs[j] += bi[j] * gt[i] / dd[i];
                for k in 0..12 {
                    s[j * 12 + k] -= bi[j] * bi[k] / dd[i];
                }
            }
        }
        if !linalg::solve_dense(&mut s, &mut rhs, 12) {
            mu *= 10.0;
            continue;
        }
        let mut cand = best;
        for (j, p) in cand.control.iter_mut().enumerate() {
            *p += Point3::new(rhs[j * 3], rhs[j * 3 + 1], rhs[j * 3 + 2]);
        }
        let mut cand_t = t.clone();
        for i in 1..n - 1 {
            let dp: f64 = (0..12).map(|j| cross[i][j] * rhs[j]).sum();
            cand_t[i] = (t[i] + (-gt[i] - dp) / dd[i]).clamp(0.0, 1.0);
        }
        let cand_cost = sq_cost(&cand, targets, &cand_t);
        if cand_cost < cost {
            let gain = cost - cand_cost;
            best = cand;
            t = cand_t;
            cost = cand_cost;
            mu = (mu * 0.3).max(1e-15);
            if gain <= 1e-30 * n as f64 {
                break;
            }
        } else {
            mu *= 10.0;
        }
    }
    (best, t)
}

fn sq_cost(curve: &BezierCurve, targets: &[Point3], params: &[f64]) -> f64 {
    targets
        .iter()
        .zip(params)
        .map(|(q, &t)| curve.point_at(t).distance_squared(*q))
        .sum()
}

fn rms(curve: &BezierCurve, targets: &[Point3], params: &[f64]) -> f64 {
    let sum: f64 = targets
        .iter()
        .zip(params)
        .map(|(q, &t)| curve.point_at(t).distance_squared(*q))
        .sum();
    math::sqrt(sum / targets.len() as f64)
}

/// Foot-point parameters of the interior targets; the end targets stay
/// pinned to `t = 0` and `t = 1` so the curve cannot overrun the data.
fn reproject(curve: &BezierCurve, targets: &[Point3], params: &[f64]) -> Vec<f64> {
    let last = targets.len() - 1;
    targets
        .iter()
        .zip(params)
        .enumerate()
        .map(|(k, (q, &t))| if k == 0 || k == last { t } else { curve.project(*q, t) })
        .collect()
}

/// Alternating least-squares cubic Bézier fit to an ordered target sequence.
///
/// Each round projects every target onto the current curve and re-solves the
/// linear system for the control points, stopping when the residual improves
/// by less than `tol` or after `max_iters`. A joint Levenberg–Marquardt pass
/// then finishes the fit. This runs from chord-length, centripetal and
/// uniform starting parameters and the lowest residual wins (earlier start on
/// ties).
pub fn fit_bezier(targets: &[Point3], max_iters: usize, tol: f64) -> Result<BezierFit> {
    if targets.len() < 4 {
        return Err(Error::OutOfRange {
            what: "Bézier fit targets (at least 4 needed)",
            requested: 4,
            available: targets.len(),
        });
    }
    if targets.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("Bézier fit targets"));
    }
    let mut best: Option<BezierFit> = None;
    for power in START_POWERS {
        let fit = fit_from(targets, chord_params(targets, power), max_iters, tol);
        if best.as_ref().is_none_or(|b| fit.residual < b.residual) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Chord-length, centripetal and uniform starting parameters, in that order.
const START_POWERS: [f64; 3] = [1.0, 0.5, 0.0];

fn fit_from(targets: &[Point3], mut params: Vec<f64>, max_iters: usize, tol: f64) -> BezierFit {
    let (mut curve, mut regularized) = solve_control_points(targets, &params);
    let mut residual = rms(&curve, targets, &params);
    let mut history = vec![residual];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let projected = reproject(&curve, targets, &params);
        let (next, reg) = solve_control_points(targets, &projected);
        let next_residual = rms(&next, targets, &projected);
        if !(next_residual <= residual) {
            // Rounding-level increase: the previous round was already optimal.
            break;
        }
        let improvement = residual - next_residual;
        curve = next;
        params = projected;
        residual = next_residual;
        regularized |= reg;
        history.push(residual);
        if improvement < tol {
            break;
        }
    }

    let (polished, polished_params) = polish(&curve, targets, &params);
    let polished_residual = rms(&polished, targets, &polished_params);
    if polished_residual < residual {
        curve = polished;
        params = polished_params;
        residual = polished_residual;
        history.push(residual);
    }

    // Report the distance to the final curve, not to its last parameters.
    let final_params = reproject(&curve, targets, &params);
    let reported = rms(&curve, targets, &final_params).min(residual);
    if let Some(last) = history.last_mut() {
        *last = reported;
    }

    BezierFit {
        curve,
        residual: reported,
        iterations,
        history,
        regularized,
    }
}
