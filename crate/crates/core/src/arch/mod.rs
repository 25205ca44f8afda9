//! Dental arch estimation: cubic Bézier fitting, ground-truth arch
//! construction through tooth centroids and vote-driven polyline refinement.

mod bezier;
mod polyline;
mod refine;

pub use bezier::{fit_bezier, BezierCurve, BezierFit, ARC_LENGTH_SEGMENTS};
pub use polyline::{build_target_arch, order_along_arch, ArchPolyline, ARCH_POINTS};
pub use refine::{refine_arch, RefineParams};


use crate::geometry::huber_point;

/// Control-point loss: mean Huber penalty over the four control points.
pub fn loss_ctr(pred: &BezierCurve, target: &BezierCurve, delta: f64) -> f64 {
    pred.control
        .iter()
        .zip(&target.control)
        .map(|(p, t)| huber_point(*p - *t, delta))
        .sum::<f64>()
        / 4.0
}

/// Arch-point loss: mean Huber penalty over index-aligned arch points.
pub fn loss_arch(pred: &ArchPolyline, gt: &ArchPolyline, delta: f64) -> f64 {
    pred.points()
        .iter()
        .zip(gt.points())
        .map(|(p, g)| huber_point(*p - *g, delta))
        .sum::<f64>()
        / ARCH_POINTS as f64
}

/// Mean squared distance between index-aligned arch points.
pub fn arch_mse(pred: &ArchPolyline, gt: &ArchPolyline) -> f64 {
    pred.points()
        .iter()
        .zip(gt.points())
        .map(|(p, g)| p.distance_squared(*g))
        .sum::<f64>()
        / ARCH_POINTS as f64
}
