use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{self, Point3};
use crate::linalg;
use crate::math;

use super::bezier::BezierCurve;

/// Number of points on every arch polyline.
pub const ARCH_POINTS: usize = 32;

const MIN_SPACING: f64 = 1e-9;

/// An ordered 32-point arch running left to right along the jaw.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ArchPolyline {
    points: Vec<Point3>,
}

impl ArchPolyline {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() != ARCH_POINTS {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: ARCH_POINTS,
            });
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("arch polyline"));
        }
        if points.windows(2).any(|w| w[0].distance(w[1]) <= MIN_SPACING) {
            return Err(Error::Degenerate("arch polyline has coincident consecutive points"));
        }
        Ok(ArchPolyline { points })
    }

    /// Arc-length uniform samples of a Bézier curve.
    pub fn from_bezier(curve: &BezierCurve) -> Result<Self> {
        ArchPolyline::new(curve.sample_uniform(ARCH_POINTS)?)
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn reversed(&self) -> ArchPolyline {
        let mut points = self.points.clone();
        points.reverse();
        ArchPolyline { points }
    }

    /// Distance from `q` to the nearest point of the piecewise-linear chain.
    pub fn distance_to(&self, q: Point3) -> f64 {
        self.points
            .windows(2)
            .map(|w| segment_distance(q, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for ArchPolyline {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let points = Vec::<Point3>::deserialize(d)?;
        ArchPolyline::new(points).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn segment_distance(q: Point3, a: Point3, b: Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return q.distance(a);
    }
    let t = ((q - a).dot(ab) / len2).clamp(0.0, 1.0);
    q.distance(a + ab * t)
}

/// Orders points along a jaw-like curve.
///
/// Points are projected onto their best-fit plane and sorted by angle around
/// their mean; the sequence is cut at the widest angular gap and oriented so
/// the first point has the smaller x. Nearly collinear inputs fall back to
/// sorting along the principal axis.
pub fn order_along_arch(points: &[Point3]) -> Vec<usize> {
    let n = points.len();
    let mut idx: Vec<usize> = (0..n).collect();
    if n < 3 {
        idx.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        return idx;
    }
    let m = geometry::mean(points).unwrap_or(Point3::ZERO);
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = (*p - m).to_array();
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    let (vals, vecs) = linalg::symmetric_eigen3(cov);
    let e1 = Point3::new(vecs[0][0], vecs[1][0], vecs[2][0]);
    let e2 = Point3::new(vecs[0][1], vecs[1][1], vecs[2][1]);

    let key = |p: Point3| -> f64 {
        let d = p - m;
        if vals[1] <= 1e-12 * vals[0] {
            d.dot(e1)
        } else {
            math::atan2(d.dot(e2), d.dot(e1))
        }
    };
    let keys: Vec<f64> = points.iter().map(|&p| key(p)).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(points[a].total_cmp(&points[b])));

    if vals[1] > 1e-12 * vals[0] {
        // Cut the circular order at its widest gap.
        let mut cut = 0;
        let mut widest = keys[idx[0]] + 2.0 * PI - keys[idx[n - 1]];
        for i in 1..n {
            let gap = keys[idx[i]] - keys[idx[i - 1]];
            if gap > widest {
                widest = gap;
                cut = i;
            }
        }
        idx.rotate_left(cut);
    }

    let (first, last) = (points[idx[0]], points[idx[n - 1]]);
    if first.x > last.x || (first.x == last.x && first.total_cmp(&last).is_gt()) {
        idx.reverse();
    }
    idx
}

/// Ground-truth arch through tooth centroids.
///
/// The ordered centroids are joined into a chain and 32 points are placed on
/// it. Every centroid is itself one of the output points; the remaining points
/// are spread over the segments in proportion to their length, evenly within
/// each segment. With more than 32 centroids the chain is resampled uniformly
/// in arc length instead.
pub fn build_target_arch(centroids: &[Point3]) -> Result<ArchPolyline> {
    if centroids.len() < 2 {
        return Err(Error::OutOfRange {
            what: "target arch centroids (at least 2 needed)",
            requested: 2,
            available: centroids.len(),
        });
    }
    if centroids.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("centroids"));
    }
    let order = order_along_arch(centroids);
    let mut chain: Vec<Point3> = Vec::with_capacity(order.len());
    for &i in &order {
        let p = centroids[i];
        if chain.last().is_none_or(|q: &Point3| q.distance(p) > MIN_SPACING) {
            chain.push(p);
        }
    }
    if chain.len() < 2 {
        return Err(Error::Degenerate("all centroids coincide"));
    }
    if chain.len() > ARCH_POINTS {
        return ArchPolyline::new(resample_chain(&chain, ARCH_POINTS));
    }

    let slots = snap_slots(&chain);
    let mut out = Vec::with_capacity(ARCH_POINTS);
    for (k, w) in chain.windows(2).enumerate() {
        out.push(w[0]);
        let m = slots[k + 1] - slots[k] - 1;
        for j in 1..=m {
            out.push(w[0].lerp(w[1], j as f64 / (m + 1) as f64));
        }
    }
    out.push(chain[chain.len() - 1]);
    ArchPolyline::new(out)
}

/// Largest-remainder split of `count` items proportional to `weights`.
/// Output index of every chain vertex: the nearest arc-uniform sample,
/// made strictly increasing with the ends pinned to the first and last slot.
fn snap_slots(chain: &[Point3]) -> Vec<usize> {
    let n = chain.len();
    let last = ARCH_POINTS - 1;
    let mut cum = Vec::with_capacity(n);
    cum.push(0.0);
    for w in chain.windows(2) {
        cum.push(cum[cum.len() - 1] + w[0].distance(w[1]));
    }
    let total = cum[n - 1];
    let mut slots: Vec<usize> = cum
        .iter()
        .map(|c| math::round(c / total * last as f64) as usize)
        .collect();
    slots[0] = 0;
    slots[n - 1] = last;
    for k in 1..n {
        slots[k] = slots[k].max(slots[k - 1] + 1).min(last - (n - 1 - k));
    }
    for k in (0..n - 1).rev() {
        slots[k] = slots[k].min(slots[k + 1] - 1);
    }
    slots
}

/// `n` points evenly spaced in arc length along a polyline chain.
pub(crate) fn resample_chain(chain: &[Point3], n: usize) -> Vec<Point3> {
    let mut cum = Vec::with_capacity(chain.len());
    cum.push(0.0);
    for w in chain.windows(2) {
        cum.push(cum[cum.len() - 1] + w[0].distance(w[1]));
    }
    let total = cum[cum.len() - 1];
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for j in 0..n {
        let s = total * j as f64 / (n - 1) as f64;
        while seg + 2 < chain.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(chain[seg].lerp(chain[seg + 1], t));
    }
    out[0] = chain[0];
    out[n - 1] = chain[chain.len() - 1];
    out
}
