use archseg_core::arch::ArchPolyline;
use archseg_core::assignment::{hungarian_assign, CostMatrix};
use archseg_core::detect::{
    arch_aware_sampling, aps_cost_matrix, assign_gt_confidence, detection_loss, detection_metrics, group_votes,
    make_proposals, nms, proposal_confidence, DetectionLossParams, Proposal, SamplingParams,
};
use archseg_core::geometry::{cross_entropy, huber_l1_points};
use archseg_core::synth::{generate_model, ground_truth_offsets, simulate_votes, ScanConfig, Vote, VoteNoiseModel};
use archseg_core::Point3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rp(rng: &mut ChaCha8Rng, s: f64) -> Point3 {
    Point3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn random_votes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vote> {
    (0..n).map(|i| Vote::new(i, rp(rng, 1.0), rp(rng, 0.3))).collect()
}

fn curved_arch() -> ArchPolyline {
    ArchPolyline::new(
        (0..32)
            .map(|i| {
                let t = i as f64 / 31.0 * core::f64::consts::PI;
                Point3::new(0.8 * t.cos(), 0.6 * t.sin(), 0.0)
            })
            .collect(),
    )
    .unwrap()
}

fn proposal(position: Point3, confidence: f64) -> Proposal {
    Proposal {
        position,
        confidence,
        member_votes: vec![0],
        gt_assignment: None,
    }
}

fn brute_nms(props: &[Proposal], radius: f64, max_k: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut alive = vec![true; props.len()];
    while kept.len() < max_k {
        let mut best: Option<usize> = None;
        for i in 0..props.len() {
            if alive[i] && best.is_none_or(|b| props[i].confidence > props[b].confidence) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        for i in 0..props.len() {
            if props[i].position.distance(props[b].position) < radius {
                alive[i] = false;
            }
        }
    }
    kept
}

#[test]
fn nms_matches_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let props: Vec<Proposal> = (0..n)
            .map(|_| proposal(rp(&mut rng, 0.5), (rng.random_range(0..10) as f64) / 10.0))
            .collect();
        let radius = rng.random_range(0.05..0.4);
        let max_k = rng.random_range(1..25);
        let kept = nms(&props, radius, max_k).unwrap();
        assert_eq!(kept, brute_nms(&props, radius, max_k));
        assert!(kept.len() <= max_k);
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                assert!(props[i].position.distance(props[j].position) >= radius);
            }
        }
    }
    assert!(nms(&[], 0.1, 3).unwrap().is_empty());
    assert!(nms(&[], 0.0, 3).is_err());
}

#[test]
fn aps_costs_match_scalar_recompute() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let votes = random_votes(&mut rng, 80);
    let arch = curved_arch();
    let params = SamplingParams { alpha: 0.7, beta: 3.0, n_samples: 70 };
    let cost = aps_cost_matrix(&votes, &arch, &params).unwrap();
    assert_eq!((cost.rows(), cost.cols()), (70, 80));
    for i in 0..70 {
        for (j, v) in votes.iter().enumerate() {
            let a = arch.points()[i % 32];
            let d = ((v.position.x - a.x).powi(2) + (v.position.y - a.y).powi(2) + (v.position.z - a.z).powi(2)).sqrt();
            let dn = (v.displacement.x.powi(2) + v.displacement.y.powi(2) + v.displacement.z.powi(2)).sqrt();
            assert!((cost.get(i, j) - (0.7 * d + 3.0 * dn)).abs() < 1e-12);
        }
    }
    let flat = SamplingParams { alpha: 0.0, ..params };
    let cost = aps_cost_matrix(&votes, &arch, &flat).unwrap();
    for j in 0..80 {
        let col0 = cost.get(0, j);
        assert!((0..70).all(|i| cost.get(i, j) == col0));
    }
    let too_many = SamplingParams { n_samples: 81, ..params };
    assert!(aps_cost_matrix(&votes, &arch, &too_many).is_err());
    assert!(aps_cost_matrix(&[], &arch, &params).is_err());
}

#[test]
fn aps_picks_distinct_votes_and_all_when_saturated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = curved_arch();
    for n in [1usize, 10, 40, 64] {
        let votes = random_votes(&mut rng, n);
        let params = SamplingParams { n_samples: n, ..SamplingParams::default() };
        let picked = arch_aware_sampling(&votes, &arch, &params).unwrap();
        assert_eq!(picked, (0..n).collect::<Vec<_>>());
    }
    let votes = random_votes(&mut rng, 200);
    let picked = arch_aware_sampling(&votes, &arch, &SamplingParams::default()).unwrap();
    assert_eq!(picked.len(), 64);
    assert!(picked.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn heavy_beta_prefers_short_displacements() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = curved_arch();
    for _ in 0..20 {
        let votes = random_votes(&mut rng, 120);
        let params = SamplingParams { alpha: 1.0, beta: 1e6, n_samples: 30 };
        let picked = arch_aware_sampling(&votes, &arch, &params).unwrap();
        let mut order: Vec<usize> = (0..votes.len()).collect();
        order.sort_by(|&a, &b| votes[a].displacement_norm.total_cmp(&votes[b].displacement_norm));
        let mut expect = order[..30].to_vec();
        expect.sort_unstable();
        assert_eq!(picked, expect);
    }
}

#[test]
fn aps_is_rigidly_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let votes = random_votes(&mut rng, 100);
        let arch = curved_arch();
        let (s, c) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
        let shift = rp(&mut rng, 2.0);
        let rot = |p: Point3| Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z) + shift;
        let rot_dir = |p: Point3| Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z);
        let moved: Vec<Vote> = votes
            .iter()
            .map(|v| Vote::new(v.seed_index, rot(v.position - v.displacement), rot_dir(v.displacement)))
            .collect();
        let moved_arch = ArchPolyline::new(arch.points().iter().map(|p| rot(*p)).collect()).unwrap();
        let params = SamplingParams { n_samples: 40, ..SamplingParams::default() };
        assert_eq!(
            arch_aware_sampling(&votes, &arch, &params).unwrap(),
            arch_aware_sampling(&moved, &moved_arch, &params).unwrap()
        );
    }
}

#[test]
fn one_vote_per_cluster_when_arch_hits_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let arch = curved_arch();
    let centers: Vec<Point3> = arch.points()[..14].to_vec();
    let mut votes = Vec::new();
    let mut cluster_of = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..15 {
            let seed = *c + rp(&mut rng, 0.05);
            votes.push(Vote::to_position(votes.len(), seed, *c + rp(&mut rng, 0.005)));
            cluster_of.push(k);
        }
    }
    let params = SamplingParams { alpha: 1.0, beta: 0.0, n_samples: 14 };
    let picked = arch_aware_sampling(&votes, &arch, &params).unwrap();
    let mut hit: Vec<usize> = picked.iter().map(|&i| cluster_of[i]).collect();
    hit.sort_unstable();
    assert_eq!(hit, (0..14).collect::<Vec<_>>());
}

#[test]
fn far_clutter_is_never_sampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let arch = curved_arch();
    for _ in 0..10 {
        let mut votes = Vec::new();
        for p in arch.points() {
            for _ in 0..3 {
                let seed = *p + rp(&mut rng, 0.05);
                votes.push(Vote::to_position(votes.len(), seed, *p + rp(&mut rng, 0.02)));
            }
        }
        let n_tooth = votes.len();
        for _ in 0..40 {
            let seed = rp(&mut rng, 0.2) + Point3::new(0.0, -1.5, 0.0);
            votes.push(Vote::new(votes.len(), seed, Point3::new(0.0, -0.6, 0.0) + rp(&mut rng, 0.1)));
        }
        let picked = arch_aware_sampling(&votes, &arch, &SamplingParams::default()).unwrap();
        assert!(picked.iter().all(|&i| i < n_tooth));
    }
}

#[test]
fn grouping_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let votes = random_votes(&mut rng, 150);
        let mut selected: Vec<usize> = (0..20).map(|_| rng.random_range(0..150)).collect();
        selected.dedup();
        let r = rng.random_range(0.05..0.5);
        let groups = group_votes(&selected, &votes, r).unwrap();
        let mut sorted = selected.clone();
        sorted.sort_unstable();
        assert_eq!(groups.len(), sorted.len());
        for (g, &s) in groups.iter().zip(&sorted) {
            let expect: Vec<usize> = (0..votes.len())
                .filter(|&j| votes[j].position.distance(votes[s].position) <= r)
                .collect();
            assert_eq!(*g, expect);
            assert!(g.contains(&s));
        }
    }
    let votes = random_votes(&mut rng, 5);
    assert!(group_votes(&[5], &votes, 0.1).is_err());
    assert!(group_votes(&[0], &votes, 0.0).is_err());
}

#[test]
fn proposals_are_cluster_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let votes = random_votes(&mut rng, 60);
    let clusters: Vec<Vec<usize>> = (0..10).map(|k| (k * 6..k * 6 + 6).collect()).collect();
    let props = make_proposals(&clusters, &votes, 0.1).unwrap();
    for (p, members) in props.iter().zip(&clusters) {
        let mean = members.iter().fold(Point3::ZERO, |s, &i| s + votes[i].position) / members.len() as f64;
        assert!((p.position - mean).norm() < 1e-12);
        assert!(p.confidence > 0.0 && p.confidence < 1.0);
        assert_eq!(p.member_votes, *members);
        assert_eq!(p.gt_assignment, None);
    }
    assert!(make_proposals(&[vec![]], &votes, 0.1).is_err());
    assert!(make_proposals(&[vec![60]], &votes, 0.1).is_err());
    for n in 1..50 {
        assert!(proposal_confidence(n + 1, 0.05, 0.1) > proposal_confidence(n, 0.05, 0.1));
        let s = n as f64 * 0.01;
        assert!(proposal_confidence(10, s + 0.01, 0.1) < proposal_confidence(10, s, 0.1));
    }
}

#[test]
fn gt_confidence_uses_strict_threshold() {
    let gt = vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
    let mut props = vec![
        proposal(Point3::new(0.3, 0.0, 0.0), 0.5),
        proposal(Point3::new(0.299999, 0.0, 0.0), 0.5),
        proposal(Point3::new(0.9, 0.0, 0.0), 0.5),
        proposal(Point3::new(0.5, 0.0, 0.0), 0.5),
    ];
    let labels = assign_gt_confidence(&mut props, &gt, 0.3);
    assert_eq!(labels, vec![false, true, true, false]);
    assert_eq!(props[1].gt_assignment, Some(0));
    assert_eq!(props[2].gt_assignment, Some(1));
    assert_eq!(props[0].gt_assignment, None);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let gt: Vec<Point3> = (0..10).map(|_| rp(&mut rng, 1.0)).collect();
        let mut props: Vec<Proposal> = (0..30).map(|_| proposal(rp(&mut rng, 1.0), 0.5)).collect();
        let labels = assign_gt_confidence(&mut props, &gt, 0.3);
        for (p, l) in props.iter().zip(labels) {
            let (k, d) = gt
                .iter()
                .enumerate()
                .map(|(k, c)| (k, p.position.distance(*c)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(l, d < 0.3);
            assert_eq!(p.gt_assignment, (d < 0.3).then_some(k));
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Largest number of pairs closer than the threshold in any one-to-one matching.
fn brute_tp(pred: &[Point3], gt: &[Point3], thr: f64) -> usize {
    let (small, big) = if pred.len() <= gt.len() { (pred, gt) } else { (gt, pred) };
    let mut best = 0;
    // Injective maps small -> big through permutations of big truncated to |small|.
    for perm in permutations(big.len()) {
        let tp = small.iter().zip(&perm).filter(|(p, &j)| p.distance(big[j]) < thr).count();
        best = best.max(tp);
    }
    best
}

#[test]
fn metrics_match_exhaustive_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let np = rng.random_range(1..=7);
        let ng = rng.random_range(1..=7);
        let pred: Vec<Point3> = (0..np).map(|_| rp(&mut rng, 0.4)).collect();
        let gt: Vec<Point3> = (0..ng).map(|_| rp(&mut rng, 0.4)).collect();
        let m = detection_metrics(&pred, &gt, 0.3).unwrap();
        assert_eq!(m.true_positives, brute_tp(&pred, &gt, 0.3));
        assert!((0.0..=100.0).contains(&m.accuracy) && (0.0..=100.0).contains(&m.recall));
        assert!((m.accuracy - 100.0 * m.true_positives as f64 / np as f64).abs() < 1e-12);
        assert!((m.recall - 100.0 * m.true_positives as f64 / ng as f64).abs() < 1e-12);
    }
}

#[test]
fn metrics_hand_cases() {
    let gt: Vec<Point3> = (0..14).map(|i| Point3::new(i as f64 * 0.15, 0.0, 0.0)).collect();
    let m = detection_metrics(&gt, &gt, 0.3).unwrap();
    assert_eq!((m.accuracy, m.recall, m.chamfer), (100.0, 100.0, 0.0));
    let mut extra = gt.clone();
    extra.push(Point3::new(0.0, 5.0, 0.0));
    let m = detection_metrics(&extra, &gt, 0.3).unwrap();
    assert_eq!(m.recall, 100.0);
    assert!((m.accuracy - 14.0 / 15.0 * 100.0).abs() < 1e-12);
    assert!(detection_metrics(&[], &gt, 0.3).is_err());
    assert!(detection_metrics(&gt, &[], 0.3).is_err());
}

#[test]
fn detection_loss_recombines() {
    let model = generate_model(&ScanConfig { seed: 12, ..ScanConfig::default() }).unwrap();
    let votes = simulate_votes(&model, 1024, &VoteNoiseModel { seed: 2, ..VoteNoiseModel::default() }).unwrap();
    let selected: Vec<usize> = (0..votes.len()).step_by(16).collect();
    let clusters = group_votes(&selected, &votes, 0.1).unwrap();
    let mut props = make_proposals(&clusters, &votes, 0.1).unwrap();
    assign_gt_confidence(&mut props, &model.centroids, 0.3);
    for gamma in [0.0, 0.1, 2.5] {
        let params = DetectionLossParams { gamma, huber_delta: 1.0 };
        let l = detection_loss(&votes, &props, &model, &params).unwrap();
        assert!((l.l_det - (l.l_offset + l.l_conf + gamma * l.l_centers)).abs() < 1e-12);
        let conf = props.iter().map(|p| cross_entropy(p.confidence, p.gt_assignment.is_some())).sum::<f64>()
            / props.len() as f64;
        assert!((l.l_conf - conf).abs() < 1e-12);
        assert!(!l.no_positives);
        if gamma == 0.0 {
            assert_eq!(l.l_det, l.l_offset + l.l_conf);
        }
    }
    // Votes that reproduce the ground-truth offsets have zero offset loss.
    let seeds: Vec<usize> = votes.iter().map(|v| v.seed_index).collect();
    let offsets = ground_truth_offsets(&model, &seeds).unwrap();
    let perfect: Vec<Vote> = seeds
        .iter()
        .zip(&offsets)
        .map(|(&s, o)| Vote::new(s, model.cloud.get(s), *o))
        .collect();
    let l = detection_loss(&perfect, &[], &model, &DetectionLossParams::default()).unwrap();
    assert_eq!(l.l_offset, 0.0);
    assert!(l.no_positives);
    assert_eq!(l.l_centers, 0.0);
    let d: Vec<Point3> = votes.iter().map(|v| v.displacement).collect();
    let l = detection_loss(&votes, &props, &model, &DetectionLossParams::default()).unwrap();
    assert!((l.l_offset - huber_l1_points(&d, &offsets, 1.0).unwrap()).abs() < 1e-12);
}

#[test]
fn hungarian_rejects_non_finite_costs() {
    for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        let cost = CostMatrix::new(2, 2, vec![1.0, bad, 0.5, 2.0]).unwrap();
        assert!(hungarian_assign(&cost).is_err());
    }
}

proptest! {
    #[test]
    fn metrics_are_bounded(
        pred in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..20),
        gt in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..20),
    ) {
        let pred: Vec<Point3> = pred.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
        let gt: Vec<Point3> = gt.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
        let m = detection_metrics(&pred, &gt, 0.3).unwrap();
        prop_assert!((0.0..=100.0).contains(&m.accuracy));
        prop_assert!((0.0..=100.0).contains(&m.recall));
        prop_assert!(m.chamfer >= 0.0);
        prop_assert!(m.true_positives <= pred.len().min(gt.len()));
    }

    #[test]
    fn nms_never_exceeds_budget(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0), 0..40),
        max_k in 1usize..30,
    ) {
        let props: Vec<Proposal> = pts.iter().map(|&(x, y, c)| proposal(Point3::new(x, y, 0.0), c)).collect();
        let kept = nms(&props, 0.2, max_k).unwrap();
        prop_assert!(kept.len() <= max_k);
        let mut s = kept.clone();
        s.sort_unstable();
        s.dedup();
        prop_assert_eq!(s.len(), kept.len());
    }
}
