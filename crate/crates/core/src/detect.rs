//! Centroid detection from votes: arch-aware sampling, radius grouping,
//! proposals with a size/spread confidence, NMS, metrics and losses.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::{ArchPolyline, ARCH_POINTS};
use crate::assignment::{hungarian_assign, CostMatrix};
use crate::error::{invalid, Error, Result};
use crate::geometry::{chamfer_distance, cross_entropy, huber_l1_points, mean, Point3};
use crate::math;
use crate::sampling::{farthest_point_sampling, random_sampling};
use crate::spatial::KdTree;
use crate::synth::{ground_truth_offsets, DentalModel, Vote};

/// Weights and size of arch-aware sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SamplingParams {
    pub alpha: f64,
    pub beta: f64,
    pub n_samples: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            alpha: 1.0,
            beta: 5.0,
            n_samples: 64,
        }
    }
}

impl SamplingParams {
    pub fn slots_per_arch_point(&self) -> usize {
        self.n_samples.div_ceil(ARCH_POINTS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("alpha and beta must be finite and non-negative"));
        }
        if self.n_samples == 0 {
            return Err(invalid("n_samples must be at least 1"));
        }
        Ok(())
    }
}

/// How proposal seeds are picked from the votes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SamplingMethod {
    Aps,
    Fps,
    Random,
}

impl SamplingMethod {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMethod::Aps => "aps",
            SamplingMethod::Fps => "fps",
            SamplingMethod::Random => "random",
        }
    }
}

impl core::str::FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aps" => Ok(SamplingMethod::Aps),
            "fps" => Ok(SamplingMethod::Fps),
            "random" => Ok(SamplingMethod::Random),
            other => Err(invalid(format!("unknown sampling method `{other}`"))),
        }
    }
}

/// Slot-by-vote cost `α·‖vote − arch point‖ + β·‖displacement‖`.
///
/// Slot `i` belongs to arch point `i mod 32`, so slots are spread
/// round-robin along the arch.
pub fn aps_cost_matrix(votes: &[Vote], arch: &ArchPolyline, params: &SamplingParams) -> Result<CostMatrix> {
    params.validate()?;
    if votes.is_empty() {
        return Err(Error::Empty("votes"));
    }
    if params.n_samples > votes.len() {
        return Err(Error::OutOfRange {
            what: "APS samples",
            requested: params.n_samples,
            available: votes.len(),
        });
    }
    let pts = arch.points();
    Ok(CostMatrix::from_fn(params.n_samples, votes.len(), |i, j| {
        let v = &votes[j];
        params.alpha * v.position.distance(pts[i % ARCH_POINTS]) + params.beta * v.displacement_norm
    }))
}

/// Vote indices chosen by optimal slot-to-vote assignment, ascending.
pub fn arch_aware_sampling(votes: &[Vote], arch: &ArchPolyline, params: &SamplingParams) -> Result<Vec<usize>> {
    let cost = aps_cost_matrix(votes, arch, params)?;
    let mut picked = hungarian_assign(&cost)?.columns;
    picked.sort_unstable();
    Ok(picked)
}

/// Seed votes for the chosen method. `arch` is only used by APS.
pub fn sample_votes(
    votes: &[Vote],
    method: SamplingMethod,
    arch: Option<&ArchPolyline>,
    params: &SamplingParams,
    seed: u64,
) -> Result<Vec<usize>> {
    match method {
        SamplingMethod::Aps => {
            let arch = arch.ok_or(invalid("arch-aware sampling needs an arch"))?;
            arch_aware_sampling(votes, arch, params)
        }
        SamplingMethod::Fps => {
            params.validate()?;
            let positions: Vec<Point3> = votes.iter().map(|v| v.position).collect();
            let mut picked = farthest_point_sampling(&positions, params.n_samples, 0)?;
            picked.sort_unstable();
            Ok(picked)
        }
        SamplingMethod::Random => {
            params.validate()?;
            let mut picked = random_sampling(votes.len(), params.n_samples, seed)?;
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

/// For each selected vote, in ascending order, every vote within `radius` of
/// it (ascending indices).
pub fn group_votes(selected: &[usize], votes: &[Vote], radius: f64) -> Result<Vec<Vec<usize>>> {
    if !(radius > 0.0) {
        return Err(invalid("grouping radius must be positive"));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= votes.len()) {
        return Err(Error::OutOfRange {
            what: "selected vote index",
            requested: bad,
            available: votes.len(),
        });
    }
    let positions: Vec<Point3> = votes.iter().map(|v| v.position).collect();
    let tree = KdTree::new(&positions);
    let mut order = selected.to_vec();
    order.sort_unstable();
    Ok(order
        .into_iter()
        .map(|i| tree.within_radius(positions[i], radius))
        .collect())
}

/// Candidate tooth centroid.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Proposal {
    pub position: Point3,
    pub confidence: f64,
    pub member_votes: Vec<usize>,
    pub gt_assignment: Option<usize>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + math::exp(-x))
}

/// `σ(ln size − 2·spread / radius_scale)` where spread is the RMS distance of
/// the members to their mean.
pub fn proposal_confidence(size: usize, spread: f64, radius_scale: f64) -> f64 {
    sigmoid(math::ln(size as f64) - 2.0 * spread / radius_scale).clamp(0.0, 1.0)
}

/// One proposal per cluster at the mean member position.
pub fn make_proposals(clusters: &[Vec<usize>], votes: &[Vote], radius_scale: f64) -> Result<Vec<Proposal>> {
    if !(radius_scale > 0.0) {
        return Err(invalid("confidence radius scale must be positive"));
    }
    clusters
        .iter()
        .map(|members| {
            if members.is_empty() {
                return Err(Error::Empty("proposal cluster"));
            }
            let pts: Vec<Point3> = members
                .iter()
                .map(|&i| {
                    votes.get(i).map(|v| v.position).ok_or(Error::OutOfRange {
                        what: "cluster member",
                        requested: i,
                        available: votes.len(),
                    })
                })
                .collect::<Result<_>>()?;
            let center = mean(&pts).unwrap_or(Point3::ZERO);
            let spread = math::sqrt(pts.iter().map(|p| p.distance_squared(center)).sum::<f64>() / pts.len() as f64);
            Ok(Proposal {
                position: center,
                confidence: proposal_confidence(pts.len(), spread, radius_scale),
                member_votes: members.clone(),
                gt_assignment: None,
            })
        })
        .collect()
}

/// Radius and count thresholds of the detector.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectionParams {
    pub grouping_radius: f64,
    pub conf_gt_threshold: f64,
    pub nms_radius: f64,
    pub max_centroids: usize,
    pub match_threshold: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            grouping_radius: 0.1,
            conf_gt_threshold: 0.3,
            nms_radius: 0.12,
            max_centroids: 20,
            match_threshold: 0.3,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grouping_radius", self.grouping_radius),
            ("conf_gt_threshold", self.conf_gt_threshold),
            ("nms_radius", self.nms_radius),
            ("match_threshold", self.match_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.max_centroids == 0 {
            return Err(invalid("max_centroids must be at least 1"));
        }
        Ok(())
    }
}

/// Labels each proposal positive when its nearest centroid is closer than
/// `threshold`, recording that centroid. Returns the labels.
pub fn assign_gt_confidence(proposals: &mut [Proposal], gt_centroids: &[Point3], threshold: f64) -> Vec<bool> {
    proposals
        .iter_mut()
        .map(|p| {
            p.gt_assignment = None;
            let mut best = (f64::INFINITY, usize::MAX);
            for (k, c) in gt_centroids.iter().enumerate() {
                let d = p.position.distance(*c);
                if d < best.0 {
                    best = (d, k);
                }
            }
            let positive = best.0 < threshold;
            if positive {
                p.gt_assignment = Some(best.1);
            }
            positive
        })
        .collect()
}

/// Greedy suppression in descending confidence (ties: lower index first).
/// Returns the indices of retained proposals in selection order.
pub fn nms(proposals: &[Proposal], radius: f64, max_k: usize) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(invalid("NMS radius must be positive"));
    }
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .confidence
            .total_cmp(&proposals[a].confidence)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() == max_k {
            break;
        }
        let p = proposals[i].position;
        if kept.iter().all(|&k| proposals[k].position.distance(p) >= radius) {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionMetrics {
    /// Percent of predictions that are true positives.
    pub accuracy: f64,
    /// Percent of ground-truth centroids that are matched.
    pub recall: f64,
    pub chamfer: f64,
    pub true_positives: usize,
}

/// One-to-one matching of predictions to ground truth.
///
/// Pairs closer than `match_threshold` are true positives. The assignment
/// minimizes total distance among matchings with the most true positives,
/// which a gated cost (distance, plus a penalty larger than any possible sum
/// of gated distances for pairs at or beyond the threshold) achieves in one
/// solve.
pub fn detection_metrics(pred: &[Point3], gt: &[Point3], match_threshold: f64) -> Result<DetectionMetrics> {
    if pred.is_empty() {
        return Err(Error::Empty("predicted centroids"));
    }
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth centroids"));
    }
    if !(match_threshold > 0.0) {
        return Err(invalid("match threshold must be positive"));
    }
    let transpose = pred.len() > gt.len();
    let (rows, cols) = if transpose { (gt, pred) } else { (pred, gt) };
    let penalty = (rows.len() + 1) as f64 * match_threshold + 1.0;
    let cost = CostMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let d = rows[r].distance(cols[c]);
        if d < match_threshold {
            d
        } else {
            d + penalty
        }
    });
    let assignment = hungarian_assign(&cost)?;
    let tp = assignment
        .columns
        .iter()
        .enumerate()
        .filter(|(r, &c)| rows[*r].distance(cols[c]) < match_threshold)
        .count();
    Ok(DetectionMetrics {
        accuracy: 100.0 * tp as f64 / pred.len() as f64,
        recall: 100.0 * tp as f64 / gt.len() as f64,
        chamfer: chamfer_distance(pred, gt)?,
        true_positives: tp,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectionLossParams {
    pub gamma: f64,
    pub huber_delta: f64,
}

impl Default for DetectionLossParams {
    fn default() -> Self {
        DetectionLossParams {
            gamma: 0.1,
            huber_delta: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionLoss {
    pub l_offset: f64,
    pub l_conf: f64,
    pub l_centers: f64,
    pub l_det: f64,
    /// No proposal was labeled positive, so `l_centers` is 0 by convention.
    pub no_positives: bool,
}

/// Offset, confidence and center terms, combined as
/// `l_offset + l_conf + γ·l_centers`. Proposals must carry ground-truth
/// assignments from [`assign_gt_confidence`].
pub fn detection_loss(
    votes: &[Vote],
    proposals: &[Proposal],
    model: &DentalModel,
    params: &DetectionLossParams,
) -> Result<DetectionLoss> {
    if !(params.gamma >= 0.0) {
        return Err(invalid("gamma must be non-negative"));
    }
    let seeds: Vec<usize> = votes.iter().map(|v| v.seed_index).collect();
    let targets = ground_truth_offsets(model, &seeds)?;
    let displacements: Vec<Point3> = votes.iter().map(|v| v.displacement).collect();
    let l_offset = huber_l1_points(&displacements, &targets, params.huber_delta)?;

    let l_conf = if proposals.is_empty() {
        0.0
    } else {
        proposals
            .iter()
            .map(|p| cross_entropy(p.confidence, p.gt_assignment.is_some()))
            .sum::<f64>()
            / proposals.len() as f64
    };

    let mut pos = Vec::new();
    let mut tgt = Vec::new();
    for p in proposals {
        if let Some(k) = p.gt_assignment {
            let c = *model.centroids.get(k).ok_or(Error::OutOfRange {
                what: "assigned centroid",
                requested: k,
                available: model.centroids.len(),
            })?;
            pos.push(p.position);
            tgt.push(c);
        }
    }
    let no_positives = pos.is_empty();
    let l_centers = if no_positives {
        0.0
    } else {
        huber_l1_points(&pos, &tgt, params.huber_delta)?
    };
    Ok(DetectionLoss {
        l_offset,
        l_conf,
        l_centers,
        l_det: l_offset + l_conf + params.gamma * l_centers,
        no_positives,
    })
}

/// Dense vote clusters, independent of any arch, for the coarse arch fit.
///
/// Votes are visited in order of decreasing local density (neighbors within
/// `radius / 2`); each unclaimed vote claims every unclaimed vote within
/// `radius`. Clusters smaller than `min_fraction` of the largest one (and
/// than 3 votes) are dropped. Returns `(center, size)` pairs.
pub fn pregroup_votes(votes: &[Vote], radius: f64, min_fraction: f64) -> Result<Vec<(Point3, usize)>> {
    if !(radius > 0.0) {
        return Err(invalid("grouping radius must be positive"));
    }
    if votes.is_empty() {
        return Err(Error::Empty("votes"));
    }
    let positions: Vec<Point3> = votes.iter().map(|v| v.position).collect();
    let tree = KdTree::new(&positions);
    let density: Vec<usize> = positions
        .iter()
        .map(|&p| tree.within_radius(p, radius / 2.0).len())
        .collect();
    let mut order: Vec<usize> = (0..votes.len()).collect();
    order.sort_by(|&a, &b| density[b].cmp(&density[a]).then(a.cmp(&b)));
    let mut claimed = vec![false; votes.len()];
    let mut clusters: Vec<(Point3, usize)> = Vec::new();
    for i in order {
        if claimed[i] {
            continue;
        }
        let members: Vec<usize> = tree
            .within_radius(positions[i], radius)
            .into_iter()
            .filter(|&j| !claimed[j])
            .collect();
        for &j in &members {
            claimed[j] = true;
        }
        let pts: Vec<Point3> = members.iter().map(|&j| positions[j]).collect();
        clusters.push((mean(&pts).unwrap_or(positions[i]), members.len()));
    }
    let largest = clusters.iter().map(|c| c.1).max().unwrap_or(0);
    let floor = (min_fraction * largest as f64).max(3.0);
    clusters.retain(|c| c.1 as f64 >= floor);
    Ok(clusters)
}
