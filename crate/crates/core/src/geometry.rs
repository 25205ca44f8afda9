//! Point sets, normalization and the distance/loss functions shared by every stage.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::math;
use crate::spatial::KdTree;

/// A point (or displacement vector) in normalized model units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(from = "[f64; 3]", into = "[f64; 3]")
)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3::new(0.0, 0.0, 0.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_squared())
    }

    /// Squared Euclidean distance. Every nearest-neighbor routine in the crate
    /// compares this exact expression so that tree and brute-force results agree.
    #[inline]
    pub fn distance_squared(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(self, other: Point3) -> f64 {
        math::sqrt(self.distance_squared(other))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn lerp(self, other: Point3, t: f64) -> Point3 {
        self + (other - self) * t
    }

    #[inline]
    pub fn get(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Lexicographic total order on coordinates.
    pub fn total_cmp(&self, other: &Point3) -> core::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.z.total_cmp(&other.z))
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Point3 {
    #[inline]
    fn sub_assign(&mut self, o: Point3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Arithmetic mean of a nonempty slice of points.
pub fn mean(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let mut sum = Point3::ZERO;
    for &p in points {
        sum += p;
    }
    Some(sum / points.len() as f64)
}

/// Mean of the points selected by `indices`.
pub fn mean_of(points: &[Point3], indices: &[usize]) -> Option<Point3> {
    if indices.is_empty() {
        return None;
    }
    let mut sum = Point3::ZERO;
    for &i in indices {
        sum += points[i];
    }
    Some(sum / indices.len() as f64)
}

/// An ordered, nonempty set of finite points. Operations refer to points by index.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point cloud"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(PointCloud { points })
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with slices.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> Point3 {
        self.points[index]
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn centroid(&self) -> Point3 {
        mean(&self.points).unwrap_or_default()
    }
}

/// A translation followed by a uniform scale: `p' = (p + translation) * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transform {
    pub translation: Point3,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        translation: Point3::ZERO,
        scale: 1.0,
    };

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        (p + self.translation) * self.scale
    }

    #[inline]
    pub fn invert(&self, p: Point3) -> Point3 {
        p / self.scale - self.translation
    }
}

/// Center the cloud at its centroid and scale it so the farthest point has norm 1.
pub fn normalize_model(cloud: &PointCloud) -> Result<(PointCloud, Transform)> {
    let c = cloud.centroid();
    let radius = cloud
        .points()
        .iter()
        .map(|&p| (p - c).norm())
        .fold(0.0_f64, f64::max);
    // Relative to the coordinate magnitude: identical points can leave a
    // rounding-level radius after centering.
    let extent = cloud
        .points()
        .iter()
        .map(|p| math::abs(p.x).max(math::abs(p.y)).max(math::abs(p.z)))
        .fold(0.0_f64, f64::max);
    if radius == 0.0 || radius <= 1e-12 * extent {
        return Err(Error::Degenerate("all points identical"));
    }
    let transform = Transform {
        translation: -c,
        scale: 1.0 / radius,
    };
    let points = cloud.points().iter().map(|&p| transform.apply(p)).collect();
    Ok((PointCloud { points }, transform))
}

/// Symmetric Chamfer distance in sum-of-squares form:
/// `Σ_{x∈a} min_y ‖x−y‖² + Σ_{y∈b} min_x ‖x−y‖²`.
pub fn chamfer_distance(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer input"));
    }
    Ok(directed_sq_sum(a, b) + directed_sq_sum(b, a))
}

fn directed_sq_sum(from: &[Point3], to: &[Point3]) -> f64 {
    // Tiny sets are faster by scan; both routes pick the same minimum.
    if to.len() <= 32 {
        from.iter()
            .map(|&p| {
                to.iter()
                    .map(|&q| p.distance_squared(q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    } else {
        let tree = KdTree::new(to);
        from.iter().map(|&p| tree.nearest(p).1).sum()
    }
}

/// Scalar Huber function: quadratic below `delta`, linear above.
#[inline]
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = math::abs(residual);
    if a <= delta {
        0.5 * a * a
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Smooth-ℓ1 of a 3-vector residual, summed over coordinates.
#[inline]
pub fn huber_point(residual: Point3, delta: f64) -> f64 {
    huber(residual.x, delta) + huber(residual.y, delta) + huber(residual.z, delta)
}

/// Mean Huber loss over components.
pub fn huber_l1(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if !(delta > 0.0) {
        return Err(crate::error::invalid("huber delta must be positive"));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| huber(p - t, delta))
        .sum();
    Ok(total / pred.len() as f64)
}

/// [`huber_l1`] over flattened xyz components of two point sequences.
pub fn huber_l1_points(pred: &[Point3], target: &[Point3], delta: f64) -> Result<f64> {
    let flat = |ps: &[Point3]| ps.iter().flat_map(|p| p.to_array()).collect::<Vec<_>>();
    huber_l1(&flat(pred), &flat(target), delta)
}

pub const PROB_EPS: f64 = 1e-7;

/// Binary cross-entropy with the probability clamped to `[ε, 1−ε]`.
pub fn cross_entropy(prob: f64, label: bool) -> f64 {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label {
        -math::ln(p)
    } else {
        -math::ln(1.0 - p)
    }
}
