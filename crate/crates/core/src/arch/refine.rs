use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::geometry::Point3;
use crate::spatial::KdTree;
use crate::synth::Vote;

use super::polyline::ArchPolyline;

const COINCIDENT: f64 = 1e-12;

/// Constants of the vote-driven arch refiner.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RefineParams {
    pub iterations: usize,
    pub neighbors: usize,
    pub step_size: f64,
    pub smoothing_lambda: f64,
    pub smoothing_passes: usize,
    /// Look up nearest votes again at every iteration instead of once.
    pub requery: bool,
    /// Scale of the offset component along the local arch tangent. At 0 the
    /// points only move across the arch, which keeps their spacing.
    pub tangential_weight: f64,
    /// Each vote's feature is its voted position averaged over the votes
    /// within this radius, repeated `feature_passes` times. 0 uses the raw
    /// positions.
    pub feature_radius: f64,
    pub feature_passes: usize,
    /// Votes with fewer neighbors within `feature_radius` than this fraction
    /// of the densest vote's count are ignored.
    pub min_support: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            iterations: 3,
            neighbors: 3,
            step_size: 1.0,
            smoothing_lambda: 0.5,
            smoothing_passes: 5,
            requery: true,
            tangential_weight: 0.0,
            feature_radius: 0.08,
            feature_passes: 3,
            min_support: 0.3,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 || self.neighbors < 1 {
            return Err(invalid("refinement needs at least one iteration and one neighbor"));
        }
        if !(0.0..=1.0).contains(&self.step_size) {
            return Err(invalid(format!("step_size {} outside [0, 1]", self.step_size)));
        }
        if !(self.smoothing_lambda >= 0.0) || !self.smoothing_lambda.is_finite() {
            return Err(invalid(format!("smoothing_lambda {} must be ≥ 0", self.smoothing_lambda)));
        }
        if !(0.0..=1.0).contains(&self.tangential_weight) {
            return Err(invalid(format!(
                "tangential_weight {} outside [0, 1]",
                self.tangential_weight
            )));
        }
        if !(self.feature_radius >= 0.0) || !self.feature_radius.is_finite() {
            return Err(invalid(format!("feature_radius {} must be ≥ 0", self.feature_radius)));
        }
        if !(0.0..=1.0).contains(&self.min_support) {
            return Err(invalid(format!("min_support {} outside [0, 1]", self.min_support)));
        }
        Ok(())
    }
}

/// Moves every arch point toward its nearest votes.
///
/// Each iteration finds the `neighbors` nearest votes, takes the
/// inverse-distance-weighted mean of their features as the target, smooths the offsets toward it along the chain and
/// adds `step_size` times the result. Output does not depend on vote order.
pub fn refine_arch(init: &ArchPolyline, votes: &[Vote], params: &RefineParams) -> Result<ArchPolyline> {
    params.validate()?;
    if votes.len() < params.neighbors {
        return Err(Error::OutOfRange {
            what: "votes for arch refinement",
            requested: params.neighbors,
            available: votes.len(),
        });
    }
    let mut sites: Vec<Point3> = votes.iter().map(|v| v.position).collect();
    sites.sort_by(|a, b| a.total_cmp(b));
    if params.feature_radius > 0.0 && params.min_support > 0.0 {
        sites = dense_votes(sites, params.feature_radius, params.min_support);
    }
    if sites.len() < params.neighbors {
        return Err(Error::OutOfRange {
            what: "supported votes for arch refinement",
            requested: params.neighbors,
            available: sites.len(),
        });
    }
    let tree = KdTree::new(&sites);
    let targets = vote_features(&tree, params.feature_radius, params.feature_passes);

    let mut arch: Vec<Point3> = init.points().to_vec();
    let mut fixed: Option<Vec<Vec<usize>>> = None;
    for _ in 0..params.iterations {
        let neighbors: Vec<Vec<usize>> = match (&fixed, params.requery) {
            (Some(n), false) => n.clone(),
            _ => arch
                .iter()
                .map(|&a| {
                    tree.k_nearest(a, params.neighbors)
                        .map(|ns| ns.into_iter().map(|n| n.index).collect())
                })
                .collect::<Result<_>>()?,
        };
        let raw: Vec<Point3> = arch
            .iter()
            .zip(&neighbors)
            .enumerate()
            .map(|(i, (&a, ns))| {
                let o = idw_target(a, ns, &sites, &targets) - a;
                let t = tangent(&arch, i);
                o - t * (o.dot(t) * (1.0 - params.tangential_weight))
            })
            .collect();
        let smooth = smooth_chain(raw, params.smoothing_lambda, params.smoothing_passes);
        for (a, o) in arch.iter_mut().zip(&smooth) {
            *a += *o * params.step_size;
        }
        if fixed.is_none() {
            fixed = Some(neighbors);
        }
    }
    ArchPolyline::new(arch)
}

fn dense_votes(sites: Vec<Point3>, radius: f64, min_support: f64) -> Vec<Point3> {
    let tree = KdTree::new(&sites);
    let support: Vec<usize> = sites.iter().map(|&q| tree.within_radius(q, radius).len()).collect();
    let floor = min_support * support.iter().copied().max().unwrap_or(0) as f64;
    sites
        .into_iter()
        .zip(support)
        .filter(|&(_, c)| c as f64 >= floor)
        .map(|(p, _)| p)
        .collect()
}

/// Mean-shift steps with a flat kernel, starting from the vote positions.
fn vote_features(tree: &KdTree, radius: f64, passes: usize) -> Vec<Point3> {
    let sites = tree.points();
    let mut f = sites.to_vec();
    if radius <= 0.0 {
        return f;
    }
    for _ in 0..passes {
        f = f
            .iter()
            .map(|&q| {
                let near = tree.within_radius(q, radius);
                if near.is_empty() {
                    return q;
                }
                near.iter().fold(Point3::ZERO, |s, &i| s + sites[i]) / near.len() as f64
            })
            .collect();
    }
    f
}

fn idw_target(a: Point3, neighbors: &[usize], sites: &[Point3], targets: &[Point3]) -> Point3 {
    let coincident: Vec<usize> = neighbors
        .iter()
        .copied()
        .filter(|&i| sites[i].distance(a) <= COINCIDENT)
        .collect();
    if !coincident.is_empty() {
        let sum = coincident.iter().fold(Point3::ZERO, |s, &i| s + targets[i]);
        return sum / coincident.len() as f64;
    }
    let mut num = Point3::ZERO;
    let mut den = 0.0;
    for &i in neighbors {
        let w = 1.0 / sites[i].distance(a);
        num += targets[i] * w;
        den += w;
    }
    num / den
}

fn tangent(chain: &[Point3], i: usize) -> Point3 {
    let n = chain.len();
    let d = chain[(i + 1).min(n - 1)] - chain[i.saturating_sub(1)];
    let len = d.norm();
    if len > 0.0 {
        d / len
    } else {
        Point3::ZERO
    }
}

fn smooth_chain(mut o: Vec<Point3>, lambda: f64, passes: usize) -> Vec<Point3> {
    let n = o.len();
    if n < 2 {
        return o;
    }
    for _ in 0..passes {
        let prev = o.clone();
        o[0] = prev[0] * (1.0 - lambda) + prev[1] * lambda;
        o[n - 1] = prev[n - 1] * (1.0 - lambda) + prev[n - 2] * lambda;
        for i in 1..n - 1 {
            o[i] = prev[i] * (1.0 - lambda) + (prev[i - 1] + prev[i + 1]) * (lambda / 2.0);
        }
    }
    o
}
