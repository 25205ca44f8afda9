//! Patch-based instance segmentation around detected centroids.
//!
//! Each centroid gets the `M` nearest cloud points as a patch. A patch mask
//! comes from graph region growing: geodesic distance from the point nearest
//! the centroid over a pruned k-NN graph, mapped to a probability. Masks are
//! fused per point by highest probability.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::assignment::{hungarian_assign, CostMatrix};
use crate::error::{invalid, Error, Result};
use crate::geometry::Point3;
use crate::math;
use crate::spatial::KdTree;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SegParams {
    pub patch_size: usize,
    pub knn_graph_k: usize,
    pub max_geodesic_radius: f64,
    pub prob_decay: f64,
    pub accept_prob: f64,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            patch_size: 2048,
            knn_graph_k: 8,
            max_geodesic_radius: 0.2,
            prob_decay: 10.0,
            accept_prob: 0.5,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.knn_graph_k == 0 {
            return Err(invalid("patch_size and knn_graph_k must be positive"));
        }
        for (name, v) in [
            ("max_geodesic_radius", self.max_geodesic_radius),
            ("prob_decay", self.prob_decay),
            ("accept_prob", self.accept_prob),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// The `patch_size` cloud points nearest a center, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center: Point3,
    pub point_indices: Vec<usize>,
    pub relative_coords: Vec<Point3>,
}

pub fn crop_patch(index: &KdTree, center: Point3, params: &SegParams) -> Result<Patch> {
    params.validate()?;
    if !center.is_finite() {
        return Err(Error::NonFinite("patch center"));
    }
    let neighbors = index.k_nearest(center, params.patch_size)?;
    let point_indices: Vec<usize> = neighbors.iter().map(|n| n.index).collect();
    let relative_coords = point_indices.iter().map(|&i| index.points()[i] - center).collect();
    Ok(Patch {
        center,
        point_indices,
        relative_coords,
    })
}

/// Per-point tooth probabilities aligned with [`Patch::point_indices`].
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMask {
    pub probabilities: Vec<f64>,
    /// The seed had no surviving graph edges; only it is marked.
    pub isolated_seed: bool,
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, node).
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Undirected k-NN graph with edges longer than twice the median removed.
fn pruned_knn_graph(points: &[Point3], k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = points.len();
    let tree = KdTree::new(points);
    let k = k.min(n.saturating_sub(1));
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(n * k);
    for (i, &p) in points.iter().enumerate() {
        for nb in tree.k_nearest(p, k + 1)? {
            if nb.index != i {
                let (a, b) = if i < nb.index { (i, nb.index) } else { (nb.index, i) };
                edges.push((a, b, nb.distance));
            }
        }
    }
    edges.sort_by_key(|e| (e.0, e.1));
    edges.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    let mut lengths: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let cutoff = 2.0 * median(&mut lengths);
    let mut adj = vec![Vec::new(); n];
    for (a, b, d) in edges {
        if d <= cutoff {
            adj[a].push((b, d));
            adj[b].push((a, d));
        }
    }
    Ok(adj)
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(State { dist: 0.0, node: source });
    while let Some(State { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(State { dist: nd, node: next });
            }
        }
    }
    dist
}

/// Geodesic region-growing mask seeded at the point nearest the center.
///
/// `p = exp(−decay · max(0, g − r₀))` where `g` is graph distance from the
/// seed and `r₀` the median `g` over the nearest 5% of patch points; points
/// beyond `max_geodesic_radius` or unreachable get 0.
pub fn segment_patch(patch: &Patch, params: &SegParams) -> Result<PatchMask> {
    params.validate()?;
    let n = patch.relative_coords.len();
    if n == 0 {
        return Err(Error::Empty("patch"));
    }
    let adj = pruned_knn_graph(&patch.relative_coords, params.knn_graph_k)?;
    // Patch points are sorted by distance, so the seed is index 0.
    if adj[0].is_empty() {
        let mut probabilities = vec![0.0; n];
        probabilities[0] = 1.0;
        return Ok(PatchMask {
            probabilities,
            isolated_seed: true,
        });
    }
    let g = dijkstra(&adj, 0);
    let core = math::ceil(0.05 * n as f64) as usize;
    let mut near: Vec<f64> = g[..core.max(1)].iter().copied().filter(|d| d.is_finite()).collect();
    let r0 = median(&mut near);
    let probabilities = g
        .iter()
        .map(|&d| {
            if d <= params.max_geodesic_radius {
                math::exp(-params.prob_decay * (d - r0).max(0.0))
            } else {
                0.0
            }
        })
        .collect();
    Ok(PatchMask {
        probabilities,
        isolated_seed: false,
    })
}

/// Fused per-point labeling.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSegmentation {
    /// 0 for background, `k + 1` for the `k`-th patch.
    pub labels: Vec<u32>,
    pub winning_prob: Vec<f64>,
}

/// Highest-probability patch per point; ties go to the nearer patch center,
/// then to the lower patch index. Points below `accept_prob` stay 0.
pub fn fuse_patches(
    n_points: usize,
    patches: &[Patch],
    masks: &[PatchMask],
    params: &SegParams,
) -> Result<InstanceSegmentation> {
    if patches.len() != masks.len() {
        return Err(Error::LengthMismatch {
            left: patches.len(),
            right: masks.len(),
        });
    }
    let mut best: Vec<Option<(f64, f64, usize)>> = vec![None; n_points];
    for (k, (patch, mask)) in patches.iter().zip(masks).enumerate() {
        if mask.probabilities.len() != patch.point_indices.len() {
            return Err(Error::LengthMismatch {
                left: mask.probabilities.len(),
                right: patch.point_indices.len(),
            });
        }
        for ((&i, rel), &p) in patch.point_indices.iter().zip(&patch.relative_coords).zip(&mask.probabilities) {
            if i >= n_points {
                return Err(Error::OutOfRange {
                    what: "patch point index",
                    requested: i,
                    available: n_points,
                });
            }
            let d = rel.norm_squared();
            let better = match best[i] {
                None => true,
                Some((bp, bd, bk)) => p > bp || (p == bp && (d < bd || (d == bd && k < bk))),
            };
            if better {
                best[i] = Some((p, d, k));
            }
        }
    }
    let mut labels = vec![0u32; n_points];
    let mut winning_prob = vec![0.0; n_points];
    for (i, b) in best.iter().enumerate() {
        if let Some((p, _, k)) = *b {
            winning_prob[i] = p;
            if p >= params.accept_prob {
                labels[i] = k as u32 + 1;
            }
        }
    }
    Ok(InstanceSegmentation { labels, winning_prob })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceScore {
    pub gt_id: u32,
    pub pred_id: Option<u32>,
    /// Percent.
    pub iou: f64,
    /// Percent.
    pub dice: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegMetrics {
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub per_instance: Vec<InstanceScore>,
}

fn instance_ids(labels: &[u32]) -> Vec<u32> {
    let mut ids: Vec<u32> = labels.iter().copied().filter(|&l| l > 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Macro-averaged IoU and Dice over ground-truth instances, in percent.
///
/// Predicted and ground-truth instances are matched one-to-one to maximize
/// total IoU; unmatched ground-truth instances score 0.
pub fn iou_dice(pred: &[u32], gt: &[u32]) -> Result<SegMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    let gt_ids = instance_ids(gt);
    if gt_ids.is_empty() {
        return Err(Error::Empty("ground-truth instances"));
    }
    let pred_ids = instance_ids(pred);
    let (ng, np) = (gt_ids.len(), pred_ids.len());
    let gpos = |l: u32| gt_ids.binary_search(&l).ok();
    let ppos = |l: u32| pred_ids.binary_search(&l).ok();

    let mut inter = vec![0usize; ng * np];
    let mut gsize = vec![0usize; ng];
    let mut psize = vec![0usize; np];
    for (&p, &g) in pred.iter().zip(gt) {
        let gi = gpos(g);
        let pi = ppos(p);
        if let Some(gi) = gi {
            gsize[gi] += 1;
        }
        if let Some(pi) = pi {
            psize[pi] += 1;
        }
        if let (Some(gi), Some(pi)) = (gi, pi) {
            inter[gi * np + pi] += 1;
        }
    }
    let iou = |gi: usize, pi: usize| {
        let i = inter[gi * np + pi];
        let u = gsize[gi] + psize[pi] - i;
        if u == 0 {
            0.0
        } else {
            i as f64 / u as f64
        }
    };
    let dice = |gi: usize, pi: usize| {
        let i = inter[gi * np + pi];
        2.0 * i as f64 / (gsize[gi] + psize[pi]) as f64
    };

    let mut matched: Vec<Option<usize>> = vec![None; ng];
    if np > 0 {
        if ng <= np {
            let cost = CostMatrix::from_fn(ng, np, |g, p| -iou(g, p));
            for (g, &p) in hungarian_assign(&cost)?.columns.iter().enumerate() {
                matched[g] = Some(p);
            }
        } else {
            let cost = CostMatrix::from_fn(np, ng, |p, g| -iou(g, p));
            for (p, &g) in hungarian_assign(&cost)?.columns.iter().enumerate() {
                matched[g] = Some(p);
            }
        }
    }

    let per_instance: Vec<InstanceScore> = gt_ids
        .iter()
        .enumerate()
        .map(|(gi, &id)| match matched[gi] {
            Some(pi) => InstanceScore {
                gt_id: id,
                pred_id: Some(pred_ids[pi]),
                iou: 100.0 * iou(gi, pi),
                dice: 100.0 * dice(gi, pi),
            },
            None => InstanceScore {
                gt_id: id,
                pred_id: None,
                iou: 0.0,
                dice: 0.0,
            },
        })
        .collect();
    let mean_iou = per_instance.iter().map(|s| s.iou).sum::<f64>() / ng as f64;
    let mean_dice = per_instance.iter().map(|s| s.dice).sum::<f64>() / ng as f64;
    Ok(SegMetrics {
        mean_iou,
        mean_dice,
        per_instance,
    })
}
