//! Seeded synthetic jaw scans with per-point tooth labels, and a vote
//! simulator that mimics the output of a trained Hough-voting head.
//!
//! Scan geometry is laid out in a canonical jaw frame (arch in the `z = 0`
//! plane, crowns pointing to `+z`) and then normalized, so every length in
//! [`ScanConfig`] is in canonical units while vote noise is in normalized
//! units.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::arch::{build_target_arch, fit_bezier, order_along_arch, ArchPolyline, BezierCurve, ARC_LENGTH_SEGMENTS};
use crate::error::{invalid, Error, Result};
use crate::geometry::{mean_of, normalize_model, Point3, PointCloud, Transform};
use crate::math;
use crate::sampling::farthest_point_sampling;

/// Superellipsoid shape exponents of a tooth crown.
const CROWN_EXPONENT: f64 = 0.8;
/// Crown semi-axes relative to the tooth radius: along arch, across, height.
const CROWN_AXES: [f64; 3] = [1.0, 0.9, 0.8];
/// Downward slope of the gingiva band away from the arch line.
const GINGIVA_SLOPE: f64 = 0.5;
/// Gingiva extends past the outermost teeth by this much.
const GINGIVA_OVERHANG: f64 = 0.12;
const MIN_TEETH: usize = 4;
const MIN_TOOTH_POINTS: usize = 64;

/// Generator settings. Lengths are in canonical jaw units.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ScanConfig {
    pub n_points: usize,
    pub n_teeth: usize,
    pub arch_shape: [Point3; 4],
    pub tooth_radius_range: (f64, f64),
    pub gingiva_band_width: f64,
    /// Vertical clearance between crown rims and the gingiva band.
    pub gingiva_gap: f64,
    pub missing_tooth_prob: f64,
    /// Standard deviation of the along-arch and sideways tooth displacement.
    pub crowding_jitter: f64,
    /// Smallest allowed distance between neighboring tooth centers.
    pub min_tooth_spacing: f64,
    pub misalignment_angle_max: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            n_points: 16_000,
            n_teeth: 14,
            arch_shape: [
                Point3::new(-0.85, -0.55, 0.0),
                Point3::new(-0.75, 0.75, 0.0),
                Point3::new(0.75, 0.75, 0.0),
                Point3::new(0.85, -0.55, 0.0),
            ],
            tooth_radius_range: (0.055, 0.065),
            gingiva_band_width: 0.3,
            gingiva_gap: 0.05,
            missing_tooth_prob: 0.05,
            crowding_jitter: 0.015,
            min_tooth_spacing: 0.17,
            misalignment_angle_max: 0.25,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.n_teeth) {
            return Err(invalid(format!("n_teeth {} outside 8..=16", self.n_teeth)));
        }
        if self.n_points < self.n_teeth * MIN_TOOTH_POINTS {
            return Err(invalid(format!(
                "n_points {} is below {} per tooth",
                self.n_points, MIN_TOOTH_POINTS
            )));
        }
        let (lo, hi) = self.tooth_radius_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("tooth_radius_range must be positive and ordered"));
        }
        if !(0.0..=1.0).contains(&self.missing_tooth_prob) {
            return Err(invalid("missing_tooth_prob must be in [0, 1]"));
        }
        for (name, v) in [
            ("gingiva_band_width", self.gingiva_band_width),
            ("gingiva_gap", self.gingiva_gap),
            ("crowding_jitter", self.crowding_jitter),
            ("min_tooth_spacing", self.min_tooth_spacing),
            ("misalignment_angle_max", self.misalignment_angle_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a finite non-negative number")));
            }
        }
        if self.arch_shape.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("arch_shape"));
        }
        let length = BezierCurve::new(self.arch_shape)?.arc_length();
        if self.min_tooth_spacing * self.n_teeth as f64 > length {
            return Err(invalid("teeth do not fit on the arch at min_tooth_spacing"));
        }
        Ok(())
    }
}

/// A labeled synthetic scan in normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DentalModel {
    pub cloud: PointCloud,
    /// 0 for gingiva, `t ≥ 1` for the `t`-th tooth from the left.
    pub labels: Vec<u32>,
    /// `centroids[t - 1]` is the mean of the points labeled `t`.
    pub centroids: Vec<Point3>,
    pub gt_arch: ArchPolyline,
    pub gt_bezier: BezierCurve,
    pub config: ScanConfig,
    /// Map from the generator's canonical jaw units to `cloud` coordinates.
    pub normalization: Transform,
}

impl DentalModel {
    /// Derives centroids and ground-truth arches from a labeled cloud.
    pub fn from_labeled(cloud: PointCloud, labels: Vec<u32>, config: ScanConfig) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: cloud.len(),
            });
        }
        let teeth = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); teeth];
        for (i, &l) in labels.iter().enumerate() {
            if l > 0 {
                members[l as usize - 1].push(i);
            }
        }
        if let Some(t) = members.iter().position(|m| m.is_empty()) {
            return Err(invalid(format!("tooth label {} has no points", t + 1)));
        }
        if teeth < MIN_TEETH {
            return Err(Error::OutOfRange {
                what: "teeth in model",
                requested: MIN_TEETH,
                available: teeth,
            });
        }
        let centroids: Vec<Point3> = members
            .iter()
            .map(|m| mean_of(cloud.points(), m).unwrap_or(Point3::ZERO))
            .collect();
        let gt_arch = build_target_arch(&centroids)?;
        let ordered: Vec<Point3> = order_along_arch(&centroids).into_iter().map(|i| centroids[i]).collect();
        let gt_bezier = fit_bezier(&ordered, 200, 1e-12)?.curve;
        Ok(DentalModel {
            cloud,
            labels,
            centroids,
            gt_arch,
            gt_bezier,
            config,
            normalization: Transform::IDENTITY,
        })
    }

    #[inline]
    pub fn n_teeth(&self) -> usize {
        self.centroids.len()
    }

    pub fn tooth_indices(&self, tooth: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == tooth)
            .map(|(i, _)| i)
            .collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> Point3 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    Point3::new(x, y, z) * sigma
}

/// Arc-length parameterized view of the canonical arch.
struct ArchFrame {
    curve: BezierCurve,
    table: Vec<f64>,
}

impl ArchFrame {
    fn new(curve: BezierCurve) -> Self {
        let table = curve.arc_length_table(ARC_LENGTH_SEGMENTS);
        ArchFrame { curve, table }
    }

    fn length(&self) -> f64 {
        self.table[ARC_LENGTH_SEGMENTS]
    }

    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let seg = self.table.partition_point(|&v| v < s).clamp(1, ARC_LENGTH_SEGMENTS) - 1;
        let len = self.table[seg + 1] - self.table[seg];
        let frac = if len > 0.0 { (s - self.table[seg]) / len } else { 0.0 };
        (seg as f64 + frac.clamp(0.0, 1.0)) / ARC_LENGTH_SEGMENTS as f64
    }

    /// Point and unit in-plane tangent at arc length `s`, extended linearly
    /// past either end.
    fn at(&self, s: f64) -> (Point3, Point3) {
        let len = self.length();
        let t = self.param_at(s);
        let h = 1e-4;
        let (ta, tb) = ((t - h).max(0.0), (t + h).min(1.0));
        let mut d = self.curve.point_at(tb) - self.curve.point_at(ta);
        d.z = 0.0;
        let tangent = d / d.norm();
        let base = self.curve.point_at(t);
        let extra = if s < 0.0 {
            s
        } else if s > len {
            s - len
        } else {
            0.0
        };
        (base + tangent * extra, tangent)
    }
}

struct Tooth {
    center: Point3,
    axes: [Point3; 3],
    radii: [f64; 3],
}

impl Tooth {
    fn area(&self) -> f64 {
        // Half of the Knud Thomsen ellipsoid surface approximation.
        let p = 1.6075;
        let [a, b, c] = self.radii;
        let m = (math::pow(a * b, p) + math::pow(a * c, p) + math::pow(b * c, p)) / 3.0;
        2.0 * core::f64::consts::PI * math::pow(m, 1.0 / p)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let mut d = gaussian(rng, 1.0);
        while d.norm_squared() < 1e-12 {
            d = gaussian(rng, 1.0);
        }
        d.z = math::abs(d.z);
        let [a, b, c] = self.radii;
        let e = CROWN_EXPONENT;
        let f = math::pow(math::abs(d.x / a), 2.0 / e)
            + math::pow(math::abs(d.y / b), 2.0 / e)
            + math::pow(math::abs(d.z / c), 2.0 / e);
        let local = d * math::pow(f, -e / 2.0);
        self.center + self.axes[0] * local.x + self.axes[1] * local.y + self.axes[2] * local.z
    }
}

/// Along-arch tooth positions with jitter, kept `min_gap` apart and inside
/// the arch.
fn tooth_positions(cfg: &ScanConfig, length: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = cfg.n_teeth;
    let mut s: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            (i as f64 + 0.5) / n as f64 * length + z * cfg.crowding_jitter
        })
        .collect();
    s.sort_by(|a, b| a.total_cmp(b));
    let gap = cfg.min_tooth_spacing;
    let lo = 0.25 * length / n as f64;
    let hi = length - lo;
    s[0] = s[0].max(lo);
    for i in 1..n {
        s[i] = s[i].max(s[i - 1] + gap);
    }
    s[n - 1] = s[n - 1].min(hi);
    for i in (0..n - 1).rev() {
        s[i] = s[i].min(s[i + 1] - gap);
    }
    s
}

/// Builds one synthetic scan. Pure function of `config`.
pub fn generate_model(config: &ScanConfig) -> Result<DentalModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let frame = ArchFrame::new(BezierCurve::new(config.arch_shape)?);
    let length = frame.length();

    let positions = tooth_positions(config, length, &mut rng);
    let mut teeth = Vec::with_capacity(config.n_teeth);
    let mut dropped = Vec::with_capacity(config.n_teeth);
    for &s in &positions {
        let (base, tangent) = frame.at(s);
        let side = Point3::new(-tangent.y, tangent.x, 0.0);
        let lateral: f64 = rng.sample(StandardNormal);
        let radius = if config.tooth_radius_range.1 > config.tooth_radius_range.0 {
            rng.random_range(config.tooth_radius_range.0..=config.tooth_radius_range.1)
        } else {
            config.tooth_radius_range.0
        };
        let angle = if config.misalignment_angle_max > 0.0 {
            rng.random_range(-config.misalignment_angle_max..=config.misalignment_angle_max)
        } else {
            0.0
        };
        let (c, sn) = (math::cos(angle), math::sin(angle));
        let u = tangent * c + side * sn;
        let v = side * c - tangent * sn;
        teeth.push(Tooth {
            center: base + side * (lateral * config.crowding_jitter),
            axes: [u, v, Point3::new(0.0, 0.0, 1.0)],
            radii: [
                radius * CROWN_AXES[0],
                radius * CROWN_AXES[1],
                radius * CROWN_AXES[2],
            ],
        });
        dropped.push(rng.random_bool(config.missing_tooth_prob));
    }
    let mut survivors = dropped.iter().filter(|d| !**d).count();
    for d in dropped.iter_mut() {
        if survivors >= MIN_TEETH {
            break;
        }
        if *d {
            *d = false;
            survivors += 1;
        }
    }
    let teeth: Vec<Tooth> = teeth
        .into_iter()
        .zip(&dropped)
        .filter(|(_, d)| !**d)
        .map(|(t, _)| t)
        .collect();

    // Split the point budget by surface area, with a floor per tooth.
    let band = config.gingiva_band_width;
    let gingiva_area = (length + 2.0 * GINGIVA_OVERHANG) * band;
    let tooth_areas: Vec<f64> = teeth.iter().map(Tooth::area).collect();
    let total_area = gingiva_area + tooth_areas.iter().sum::<f64>();
    let mut counts: Vec<usize> = tooth_areas
        .iter()
        .map(|a| {
            let share = math::floor(config.n_points as f64 * a / total_area + 0.5) as usize;
            share.max(MIN_TOOTH_POINTS)
        })
        .collect();
    let mut tooth_total: usize = counts.iter().sum();
    while tooth_total > config.n_points {
        // Only reachable with tiny gingiva budgets; trim the largest tooth.
        let k = (0..counts.len()).max_by_key(|&k| (counts[k], usize::MAX - k)).unwrap_or(0);
        if counts[k] <= MIN_TOOTH_POINTS {
            break;
        }
        counts[k] -= 1;
        tooth_total -= 1;
    }
    let gingiva_count = config.n_points - tooth_total;

    let mut labeled: Vec<(Point3, u32)> = Vec::with_capacity(config.n_points);
    for (t, (tooth, &count)) in teeth.iter().zip(&counts).enumerate() {
        for _ in 0..count {
            labeled.push((tooth.sample(&mut rng), t as u32 + 1));
        }
    }
    for _ in 0..gingiva_count {
        let s = rng.random_range(-GINGIVA_OVERHANG..=length + GINGIVA_OVERHANG);
        let w = rng.random_range(-band / 2.0..=band / 2.0);
        let (base, tangent) = frame.at(s);
        let side = Point3::new(-tangent.y, tangent.x, 0.0);
        let z = -config.gingiva_gap - GINGIVA_SLOPE * w * w;
        labeled.push((base + side * w + Point3::new(0.0, 0.0, z), 0));
    }
    labeled.shuffle(&mut rng);

    let (points, labels): (Vec<Point3>, Vec<u32>) = labeled.into_iter().unzip();
    let (cloud, transform) = normalize_model(&PointCloud::new(points)?)?;
    let mut model = DentalModel::from_labeled(cloud, labels, config.clone())?;
    model.normalization = transform;
    Ok(model)
}

/// A seed point's predicted displacement toward its object center.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vote {
    pub seed_index: usize,
    pub position: Point3,
    pub displacement: Point3,
    pub displacement_norm: f64,
}

impl Vote {
    pub fn new(seed_index: usize, seed: Point3, displacement: Point3) -> Self {
        Vote {
            seed_index,
            position: seed + displacement,
            displacement,
            displacement_norm: displacement.norm(),
        }
    }

    /// A vote landing exactly on `position`.
    pub fn to_position(seed_index: usize, seed: Point3, position: Point3) -> Self {
        let displacement = position - seed;
        Vote {
            seed_index,
            position,
            displacement,
            displacement_norm: displacement.norm(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GingivaVoteMode {
    /// Gingiva seeds cast no votes.
    Suppressed,
    /// A fraction of gingiva seeds cast short random votes.
    Clutter,
}

/// Noise model of the simulated voting head. Lengths are normalized units.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VoteNoiseModel {
    pub tooth_vote_sigma: f64,
    pub gingiva_vote_mode: GingivaVoteMode,
    pub clutter_fraction: f64,
    pub clutter_sigma: f64,
    pub seed: u64,
}

impl Default for VoteNoiseModel {
    fn default() -> Self {
        VoteNoiseModel {
            tooth_vote_sigma: 0.02,
            gingiva_vote_mode: GingivaVoteMode::Clutter,
            clutter_fraction: 0.25,
            clutter_sigma: 0.08,
            seed: 0,
        }
    }
}

impl VoteNoiseModel {
    /// Zero noise with gingiva votes suppressed.
    pub fn ideal() -> Self {
        VoteNoiseModel {
            tooth_vote_sigma: 0.0,
            gingiva_vote_mode: GingivaVoteMode::Suppressed,
            clutter_fraction: 0.0,
            clutter_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tooth_vote_sigma >= 0.0 && self.tooth_vote_sigma.is_finite())
            || !(self.clutter_sigma >= 0.0 && self.clutter_sigma.is_finite())
        {
            return Err(invalid("vote noise sigmas must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.clutter_fraction) {
            return Err(invalid("clutter_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Votes from `subsample` FPS seeds of the model cloud.
///
/// Tooth seeds vote for their tooth centroid plus isotropic noise. Gingiva
/// seeds either vote not at all or, in clutter mode, with probability
/// `clutter_fraction` cast a short random vote near where they sit. Tooth
/// noise and clutter use independent random streams.
pub fn simulate_votes(model: &DentalModel, subsample: usize, noise: &VoteNoiseModel) -> Result<Vec<Vote>> {
    noise.validate()?;
    let points = model.cloud.points();
    let seeds = farthest_point_sampling(points, subsample, 0)?;
    let mut tooth_rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut clutter_rng = ChaCha8Rng::seed_from_u64(noise.seed);
    clutter_rng.set_stream(1);
    let mut votes = Vec::with_capacity(subsample);
    for &i in &seeds {
        let p = points[i];
        match model.labels[i] {
            0 => {
                if noise.gingiva_vote_mode == GingivaVoteMode::Clutter
                    && clutter_rng.random_bool(noise.clutter_fraction)
                {
                    votes.push(Vote::new(i, p, gaussian(&mut clutter_rng, noise.clutter_sigma)));
                }
            }
            t => {
                let target = model.centroids[t as usize - 1] + gaussian(&mut tooth_rng, noise.tooth_vote_sigma);
                votes.push(Vote::to_position(i, p, target));
            }
        }
    }
    Ok(votes)
}

/// Vector from each seed to its nearest ground-truth centroid.
pub fn ground_truth_offsets(model: &DentalModel, seed_indices: &[usize]) -> Result<Vec<Point3>> {
    if model.centroids.is_empty() {
        return Err(Error::Empty("model has no teeth"));
    }
    let points = model.cloud.points();
    seed_indices
        .iter()
        .map(|&i| {
            let p = *points.get(i).ok_or(Error::OutOfRange {
                what: "seed index",
                requested: i,
                available: points.len(),
            })?;
            let mut best = (f64::INFINITY, 0usize);
            for (k, c) in model.centroids.iter().enumerate() {
                let d = p.distance_squared(*c);
                if d < best.0 {
                    best = (d, k);
                }
            }
            Ok(model.centroids[best.1] - p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> ScanConfig {
        ScanConfig {
            missing_tooth_prob: 0.0,
            crowding_jitter: 0.0,
            misalignment_angle_max: 0.0,
            n_points: 4000,
            seed: 3,
            ..ScanConfig::default()
        }
    }

    #[test]
    fn plain_model_has_uniform_teeth() {
        let m = generate_model(&plain()).unwrap();
        assert_eq!(m.n_teeth(), 14);
        let gaps: Vec<f64> = m.centroids.windows(2).map(|w| w[0].distance(w[1])).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        for g in gaps {
            assert!((g - mean).abs() / mean < 0.1);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ScanConfig {
            n_points: 3000,
            seed: 11,
            ..ScanConfig::default()
        };
        assert_eq!(generate_model(&cfg).unwrap(), generate_model(&cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = plain();
        c.n_points = 100;
        assert!(generate_model(&c).is_err());
        let mut c = plain();
        c.missing_tooth_prob = 1.5;
        assert!(generate_model(&c).is_err());
        let mut c = plain();
        c.n_teeth = 20;
        assert!(generate_model(&c).is_err());
    }

    #[test]
    fn all_missing_keeps_four() {
        let mut c = plain();
        c.missing_tooth_prob = 1.0;
        assert_eq!(generate_model(&c).unwrap().n_teeth(), 4);
    }

    #[test]
    fn zero_noise_votes_hit_centroids() {
        let m = generate_model(&plain()).unwrap();
        let votes = simulate_votes(&m, 512, &VoteNoiseModel::ideal()).unwrap();
        for v in &votes {
            let t = m.labels[v.seed_index];
            assert!(t > 0);
            assert_eq!(v.position, m.centroids[t as usize - 1]);
        }
    }

    #[test]
    fn zero_clutter_equals_suppressed() {
        let m = generate_model(&plain()).unwrap();
        let suppressed = VoteNoiseModel {
            gingiva_vote_mode: GingivaVoteMode::Suppressed,
            ..VoteNoiseModel::default()
        };
        let clutter = VoteNoiseModel {
            clutter_fraction: 0.0,
            ..VoteNoiseModel::default()
        };
        assert_eq!(
            simulate_votes(&m, 512, &suppressed).unwrap(),
            simulate_votes(&m, 512, &clutter).unwrap()
        );
    }

    #[test]
    fn offsets_point_at_nearest_centroid() {
        let m = generate_model(&plain()).unwrap();
        let c0 = m.centroids[0];
        let idx = m.cloud.points().iter().position(|p| p.distance(c0) < 0.2).unwrap();
        let off = ground_truth_offsets(&m, &[idx]).unwrap();
        let target = m.cloud.get(idx) + off[0];
        let best = m
            .centroids
            .iter()
            .map(|c| c.distance(m.cloud.get(idx)))
            .fold(f64::INFINITY, f64::min);
        assert!((target.distance(m.cloud.get(idx)) - best).abs() < 1e-12);
    }
}
