//! Baseline subsamplers: farthest point sampling and seeded uniform sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Greedy max-min sampling starting at `start`. Each pick maximizes its
/// squared distance to the already chosen set; ties go to the lowest index.
pub fn farthest_point_sampling(points: &[Point3], k: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::OutOfRange {
            what: "farthest point sampling",
            requested: k,
            available: n,
        });
    }
    if start >= n {
        return Err(Error::OutOfRange {
            what: "farthest point sampling start index",
            requested: start,
            available: n,
        });
    }
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = start;
    loop {
        chosen.push(current);
        taken[current] = true;
        if chosen.len() == k {
            break;
        }
        let c = points[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d2 = c.distance_squared(*p);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(chosen)
}

/// `k` distinct indices drawn uniformly without replacement from `0..n`.
pub fn random_sampling(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::OutOfRange {
            what: "random sampling",
            requested: k,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, k).into_vec())
}
