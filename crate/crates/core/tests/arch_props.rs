use archseg_core::arch::{
    arch_mse, build_target_arch, fit_bezier, loss_arch, loss_ctr, refine_arch, ArchPolyline, BezierCurve,
    RefineParams, ARCH_POINTS,
};
use archseg_core::synth::Vote;
use archseg_core::Point3;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_curve(rng: &mut ChaCha8Rng) -> BezierCurve {
    let mut p = || Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    BezierCurve::new([p(), p(), p(), p()]).unwrap()
}

fn max_deviation(a: &BezierCurve, b: &BezierCurve) -> f64 {
    (0..=400)
        .map(|k| {
            let t = k as f64 / 400.0;
            a.eval(t).unwrap().distance(b.eval(t).unwrap())
        })
        .fold(0.0, f64::max)
}

#[test]
fn fit_recovers_random_curves_from_exact_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let truth = random_curve(&mut rng);
        let samples: Vec<Point3> = (0..16).map(|k| truth.eval(k as f64 / 15.0).unwrap()).collect();
        let fit = fit_bezier(&samples, 5000, 1e-16).unwrap();
        worst = worst.max(max_deviation(&fit.curve, &truth));
    }
    assert!(worst < 1e-6, "worst deviation {worst}");
}

#[test]
fn fit_history_is_monotone_on_noisy_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..30 {
        let truth = random_curve(&mut rng);
        let targets: Vec<Point3> = (0..24)
            .map(|k| {
                truth.eval(k as f64 / 23.0).unwrap()
                    + Point3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0)
            })
            .collect();
        let fit = fit_bezier(&targets, 200, 0.0).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0], "{:?}", fit.history);
        }
        assert!(fit.residual <= fit.history[0]);
    }
}

#[test]
fn fit_rejects_too_few_targets() {
    let p = Point3::new(1.0, 0.0, 0.0);
    assert!(fit_bezier(&[Point3::ZERO, p], 10, 1e-9).is_err());
}

/// Centroid-like points on a jittered U, in shuffled order.
fn jaw_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    let mut pts: Vec<Point3> = (0..n)
        .map(|i| {
            let a = std::f64::consts::PI * (0.1 + 0.8 * i as f64 / (n - 1).max(1) as f64);
            Point3::new(
                -a.cos() + rng.random_range(-0.02..0.02),
                a.sin() * 0.8 + rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            )
        })
        .collect();
    pts.shuffle(rng);
    pts
}

#[test]
fn target_arch_passes_through_centroids() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..200 {
        let n = rng.random_range(2..=20);
        let c = jaw_points(&mut rng, n);
        let arch = build_target_arch(&c).unwrap();
        assert_eq!(arch.points().len(), ARCH_POINTS);
        for p in &c {
            assert!(arch.distance_to(*p) < 1e-9);
            // Centroids are vertices, not just points on segments.
            assert!(arch.points().iter().any(|q| q == p));
        }
        let pts = arch.points();
        assert!(pts[0].x <= pts[ARCH_POINTS - 1].x);
        let leftmost = c.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let rightmost = c.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(pts[0].x, leftmost);
        assert_eq!(pts[ARCH_POINTS - 1].x, rightmost);
    }
}

#[test]
fn target_arch_spacing_tracks_arc_length() {
    // Evenly spaced collinear centroids give an evenly spaced arch.
    let c: Vec<Point3> = (0..32).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
    let arch = build_target_arch(&c).unwrap();
    assert_eq!(arch.points(), &c[..]);
    let c: Vec<Point3> = (0..4).map(|i| Point3::new(i as f64 * 31.0 / 3.0, 0.0, 0.0)).collect();
    let arch = build_target_arch(&c).unwrap();
    for (i, p) in arch.points().iter().enumerate() {
        assert!((p.x - i as f64).abs() < 0.5 + 1e-9, "{i} {}", p.x);
    }
}

fn votes_near(arch: &ArchPolyline, rng: &mut ChaCha8Rng) -> Vec<Vote> {
    let mut out = Vec::new();
    for (i, p) in arch.points().iter().enumerate() {
        for _ in 0..6 {
            let seed = *p + Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), -0.05);
            let pos = *p + Point3::new(rng.random_range(-0.02..0.02), 0.03, rng.random_range(-0.02..0.02));
            out.push(Vote::to_position(i, seed, pos));
        }
    }
    out
}

fn jaw_arch(rng: &mut ChaCha8Rng) -> ArchPolyline {
    let n = rng.random_range(8..=16);
    build_target_arch(&jaw_points(rng, n)).unwrap()
}

#[test]
fn refine_zero_step_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..20 {
        let arch = jaw_arch(&mut rng);
        let votes = votes_near(&arch, &mut rng);
        let p = RefineParams { step_size: 0.0, ..RefineParams::default() };
        assert_eq!(refine_arch(&arch, &votes, &p).unwrap(), arch);
    }
}

#[test]
fn refine_ignores_vote_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..20 {
        let arch = jaw_arch(&mut rng);
        let mut votes = votes_near(&arch, &mut rng);
        let a = refine_arch(&arch, &votes, &RefineParams::default()).unwrap();
        votes.shuffle(&mut rng);
        let b = refine_arch(&arch, &votes, &RefineParams::default()).unwrap();
        assert_eq!(a, b);
        let fixed = RefineParams { requery: false, ..RefineParams::default() };
        let c = refine_arch(&arch, &votes, &fixed).unwrap();
        votes.reverse();
        assert_eq!(c, refine_arch(&arch, &votes, &fixed).unwrap());
    }
}

#[test]
fn refine_pulls_arch_toward_offset_votes() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..10 {
        let arch = jaw_arch(&mut rng);
        let votes = votes_near(&arch, &mut rng);
        let shifted = ArchPolyline::new(arch.points().iter().map(|p| *p + Point3::new(0.0, 0.03, 0.0)).collect()).unwrap();
        let out = refine_arch(&arch, &votes, &RefineParams::default()).unwrap();
        assert!(arch_mse(&out, &shifted) < arch_mse(&arch, &shifted));
    }
}

fn point() -> impl Strategy<Value = Point3> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bezier_stays_in_control_hull(c in [point(), point(), point(), point()], t in 0.0..=1.0f64, u in point()) {
        prop_assume!(u.norm() > 1e-6);
        let curve = BezierCurve::new(c).unwrap();
        let p = curve.eval(t).unwrap();
        let support = c.iter().map(|q| q.dot(u)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p.dot(u) <= support + 1e-9 * (1.0 + support.abs()));
    }

    #[test]
    fn bezier_eval_is_defined_on_unit_interval_only(c in [point(), point(), point(), point()], t in 1.0001..10.0f64) {
        let curve = BezierCurve::new(c).unwrap();
        prop_assert!(curve.eval(t).is_err());
        prop_assert!(curve.eval(-t).is_err());
        prop_assert_eq!(curve.eval(0.0).unwrap(), c[0]);
        prop_assert_eq!(curve.eval(1.0).unwrap(), c[3]);
    }

    #[test]
    fn arch_losses_are_nonnegative(
        a in prop::collection::vec(point(), 32),
        b in prop::collection::vec(point(), 32),
        delta in 0.01..3.0f64,
    ) {
        let (Ok(pa), Ok(pb)) = (ArchPolyline::new(a.clone()), ArchPolyline::new(b.clone())) else {
            return Ok(());
        };
        prop_assert!(loss_arch(&pa, &pb, delta) >= 0.0);
        prop_assert!(arch_mse(&pa, &pb) >= 0.0);
        let ca = BezierCurve::new([a[0], a[1], a[2], a[3]]).unwrap();
        let cb = BezierCurve::new([b[0], b[1], b[2], b[3]]).unwrap();
        prop_assert!(loss_ctr(&ca, &cb, delta) >= 0.0);
        prop_assert_eq!(loss_ctr(&ca, &ca, delta), 0.0);
    }
}
