//! Static k-d tree over a borrowed-at-build-time point set.
//!
//! Queries return exactly what a brute-force scan over
//! [`Point3::distance_squared`] would: neighbors ordered by ascending distance,
//! ties broken by ascending index.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::math;

const LEAF_SIZE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
struct Node {
    lo: Point3,
    hi: Point3,
    kind: NodeKind,
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// (squared distance, index) with the lexicographic order used for ties.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

fn box_distance_squared(q: Point3, lo: Point3, hi: Point3) -> f64 {
    let mut d2 = 0.0;
    for axis in 0..3 {
        let v = q.get(axis);
        let l = lo.get(axis);
        let h = hi.get(axis);
        let d = if v < l {
            l - v
        } else if v > h {
            v - h
        } else {
            0.0
        };
        d2 += d * d;
    }
    d2
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn bounds(&self, start: usize, end: usize) -> (Point3, Point3) {
        let first = self.points[self.order[start]];
        let (mut lo, mut hi) = (first, first);
        for &i in &self.order[start..end] {
            let p = self.points[i];
            lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (lo, hi)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let (lo, hi) = self.bounds(start, end);
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a].get(axis).total_cmp(&points[b].get(axis))
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    /// The `k` nearest points to `query`, nearest first.
    pub fn k_nearest(&self, query: Point3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.len() {
            return Err(Error::OutOfRange {
                what: "k-nearest neighbors",
                requested: k,
                available: self.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if heap.len() == k {
                let worst = heap.peek().map(|c| c.d2).unwrap_or(f64::INFINITY);
                if box_distance_squared(query, node.lo, node.hi) > worst {
                    continue;
                }
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let c = Candidate {
                            d2: query.distance_squared(self.points[i]),
                            index: i,
                        };
                        if heap.len() < k {
                            heap.push(c);
                        } else if let Some(top) = heap.peek() {
                            if c < *top {
                                heap.pop();
                                heap.push(c);
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = box_distance_squared(query, self.nodes[left].lo, self.nodes[left].hi);
                    let dr =
                        box_distance_squared(query, self.nodes[right].lo, self.nodes[right].hi);
                    // Push the farther child first so the nearer one is visited next.
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        let mut out = heap.into_vec();
        out.sort_unstable();
        Ok(out
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: math::sqrt(c.d2),
            })
            .collect())
    }

    /// Nearest point as `(index, squared distance)`. Panics on an empty tree.
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if box_distance_squared(query, node.lo, node.hi) > best.d2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let c = Candidate {
                            d2: query.distance_squared(self.points[i]),
                            index: i,
                        };
                        if c < best {
                            best = c;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        assert!(best.index != usize::MAX, "nearest() on an empty tree");
        (best.index, best.d2)
    }

    /// Indices of all points with `‖p − query‖ ≤ radius`, ascending.
    pub fn within_radius(&self, query: Point3, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if box_distance_squared(query, node.lo, node.hi) > r2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if query.distance_squared(self.points[i]) <= r2 {
                            out.push(i);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out.sort_unstable();
        out
    }
}
