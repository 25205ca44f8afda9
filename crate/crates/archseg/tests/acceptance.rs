//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Set `ARCHSEG_UPDATE_GOLDEN=1` to rewrite the golden benchmark report
//! instead of comparing against it.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use archseg::commands::open_dataset;
use archseg::dataset::Dataset;
use archseg::report::{map_runs, run_suite};
use archseg::{ExperimentConfig, MetricsReport};
use archseg_core::arch::{fit_bezier, BezierCurve};
use archseg_core::assignment::{hungarian_assign, CostMatrix};
use archseg_core::detect::{arch_aware_sampling, detection_metrics, SamplingMethod, SamplingParams};
use archseg_core::geometry::chamfer_distance;
use archseg_core::pipeline::{segment_model, ArchMode};
use archseg_core::sampling::farthest_point_sampling;
use archseg_core::synth::{Vote, VoteNoiseModel};
use archseg_core::{KdTree, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn golden_path() -> PathBuf {
    crate_dir().join("tests/golden/benchmark_report.json")
}

struct Bench {
    cfg: ExperimentConfig,
    data: Dataset,
    aps: MetricsReport,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let cfg = ExperimentConfig::load(&crate_dir().join("configs/benchmark.json")).expect("benchmark config");
        let data = open_dataset(&cfg, None).expect("benchmark dataset");
        let aps = run_suite(&data, &cfg, None).expect("benchmark run");
        Bench { cfg, data, aps }
    })
}

fn variant(f: impl FnOnce(&mut ExperimentConfig)) -> Result<MetricsReport, String> {
    let b = bench();
    let mut cfg = b.cfg.clone();
    f(&mut cfg);
    let report = run_suite(&b.data, &cfg, None).map_err(|e| e.to_string())?;
    match report.failure() {
        Some(e) => Err(e.to_string()),
        None => Ok(report),
    }
}

fn rp(rng: &mut ChaCha8Rng, s: f64) -> Point3 {
    Point3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
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

/// Smallest row-ordered sum over injective row -> column maps.
fn brute_assignment(cost: &CostMatrix) -> f64 {
    let (n, m) = (cost.rows(), cost.cols());
    let mut best = f64::INFINITY;
    for perm in permutations(m) {
        let total = (0..n).fold(0.0, |s, r| s + cost.get(r, perm[r]));
        best = best.min(total);
    }
    best
}

fn c1_hungarian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for case in 0..400 {
        let (n, m) = if case < 200 {
            let n = rng.random_range(1..=7);
            (n, n)
        } else {
            let n = rng.random_range(1..=5);
            (n, rng.random_range(n..=8))
        };
        let integer = case % 2 == 0;
        let cost = CostMatrix::from_fn(n, m, |_, _| {
            if integer {
                rng.random_range(0..20) as f64
            } else {
                rng.random_range(0.0..10.0)
            }
        });
        let got = hungarian_assign(&cost).map_err(|e| e.to_string())?;
        let want = brute_assignment(&cost);
        if got.total_cost != want {
            return Err(format!("case {case} ({n}x{m}): {} vs {want}", got.total_cost));
        }
        checked += 1;
    }
    Ok(format!("{checked} matrices exact"))
}

fn c2_bezier() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let truth = BezierCurve::new([rp(&mut rng, 1.0), rp(&mut rng, 1.0), rp(&mut rng, 1.0), rp(&mut rng, 1.0)])
            .map_err(|e| e.to_string())?;
        let samples: Vec<Point3> = (0..16).map(|k| truth.eval(k as f64 / 15.0).unwrap()).collect();
        let fit = fit_bezier(&samples, 5000, 1e-16).map_err(|e| e.to_string())?;
        for k in 0..=400 {
            let t = k as f64 / 400.0;
            worst = worst.max(fit.curve.eval(t).unwrap().distance(truth.eval(t).unwrap()));
        }
    }
    if worst < 1e-6 {
        Ok(format!("max deviation {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e}"))
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn c3_spatial() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.random_range(1..=1000);
        let pts: Vec<Point3> = (0..n).map(|_| rp(&mut rng, 1.0)).collect();
        let other: Vec<Point3> = (0..rng.random_range(1..=1000)).map(|_| rp(&mut rng, 1.0)).collect();

        let tree = KdTree::new(&pts);
        let q = rp(&mut rng, 1.2);
        let k = rng.random_range(1..=n.min(50));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| pts[a].distance_squared(q).total_cmp(&pts[b].distance_squared(q)).then(a.cmp(&b)));
        let got = tree.k_nearest(q, k).map_err(|e| e.to_string())?;
        for (g, &w) in got.iter().zip(&order) {
            if g.index != w || !rel_close(g.distance, pts[w].distance(q)) {
                return Err(format!("k_nearest case {case}"));
            }
        }

        let m = rng.random_range(1..=n.min(64));
        let mut want = vec![0usize];
        let mut d: Vec<f64> = pts.iter().map(|p| p.distance_squared(pts[0])).collect();
        while want.len() < m {
            let mut best = 0;
            for i in 1..n {
                if d[i] > d[best] {
                    best = i;
                }
            }
            want.push(best);
            for i in 0..n {
                d[i] = d[i].min(pts[i].distance_squared(pts[best]));
            }
        }
        if farthest_point_sampling(&pts, m, 0).map_err(|e| e.to_string())? != want {
            return Err(format!("farthest_point_sampling case {case}"));
        }

        let nn = |a: &[Point3], b: &[Point3]| {
            a.iter()
                .map(|p| b.iter().map(|q| p.distance_squared(*q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
        };
        let brute = nn(&pts, &other) + nn(&other, &pts);
        if !rel_close(chamfer_distance(&pts, &other).map_err(|e| e.to_string())?, brute) {
            return Err(format!("chamfer_distance case {case}"));
        }
    }
    Ok("100 instances match".into())
}

fn c4_aps_vs_fps() -> Outcome {
    let b = bench();
    let fps = variant(|c| {
        c.sampling.method = SamplingMethod::Fps;
        c.detection.max_centroids = 20;
    })?;
    let aps = variant(|c| {
        c.sampling.method = SamplingMethod::Aps;
        c.detection.max_centroids = 20;
    })?;
    let acc = |r: &MetricsReport| r.aggregate.accuracy;
    let wins = aps
        .models
        .iter()
        .zip(&fps.models)
        .filter(|(a, f)| a.metrics.as_ref().unwrap().accuracy > f.metrics.as_ref().unwrap().accuracy)
        .count();
    let n = b.data.models.len();
    let msg = format!("APS {:.2} vs FPS {:.2}, APS wins {wins}/{n}", acc(&aps), acc(&fps));
    if acc(&aps) - acc(&fps) >= 5.0 && wins as f64 >= 0.9 * n as f64 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_refinement() -> Outcome {
    let coarse = variant(|c| c.arch_mode = ArchMode::Coarse)?;
    let fine = variant(|c| c.arch_mode = ArchMode::CoarseFine)?;
    let mse = |r: &MetricsReport| r.aggregate.arch_mse * 1e4;
    let better = fine
        .models
        .iter()
        .zip(&coarse.models)
        .filter(|(f, c)| f.metrics.as_ref().unwrap().arch_mse <= c.metrics.as_ref().unwrap().arch_mse)
        .count();
    let n = fine.models.len();
    let msg = format!("MSE(1e-4) coarse {:.3} -> fine {:.3}, improved {better}/{n}", mse(&coarse), mse(&fine));
    if mse(&fine) <= mse(&coarse) && better as f64 >= 0.95 * n as f64 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_ideal() -> Outcome {
    let ideal = variant(|c| c.votes = VoteNoiseModel { seed: c.votes.seed, ..VoteNoiseModel::ideal() })?;
    for row in &ideal.models {
        let m = row.metrics.as_ref().unwrap();
        if m.accuracy != 100.0 || m.recall != 100.0 || m.chamfer.is_nan() || m.chamfer >= 1e-9 {
            return Err(format!("{}: acc {} recall {} chamfer {:e}", row.name, m.accuracy, m.recall, m.chamfer));
        }
    }
    Ok(format!("{} models at 100/100", ideal.models.len()))
}

fn c7_oracle_segmentation() -> Outcome {
    let b = bench();
    let mut iou = 0.0;
    let mut dice = 0.0;
    for model in &b.data.models {
        let tree = KdTree::new(model.cloud.points());
        let seg = segment_model(model, &tree, &model.centroids, &b.cfg.segmentation).map_err(|e| e.to_string())?;
        iou += seg.metrics.mean_iou;
        dice += seg.metrics.mean_dice;
    }
    let n = b.data.models.len() as f64;
    let msg = format!("IoU {:.2}, Dice {:.2}", iou / n, dice / n);
    if iou / n >= 90.0 && dice / n >= 94.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_metric_identities() -> Outcome {
    let b = bench();
    let mut count = 0;
    for row in &b.aps.models {
        for s in &row.metrics.as_ref().unwrap().instances {
            if s.pred_id.is_none() {
                continue;
            }
            let i = s.iou / 100.0;
            if (s.dice / 100.0 - 2.0 * i / (1.0 + i)).abs() > 1e-9 {
                return Err(format!("{} tooth {}: IoU {} Dice {}", row.name, s.gt_id, s.iou, s.dice));
            }
            count += 1;
        }
    }
    let gt: Vec<Point3> = (0..14).map(|i| Point3::new(i as f64 * 0.15, 0.0, 0.0)).collect();
    let m = detection_metrics(&gt, &gt, 0.3).map_err(|e| e.to_string())?;
    if (m.accuracy, m.recall, m.chamfer) != (100.0, 100.0, 0.0) {
        return Err(format!("pred = gt gave {m:?}"));
    }
    let mut extra = gt.clone();
    extra.push(Point3::new(0.0, 5.0, 0.0));
    let m = detection_metrics(&extra, &gt, 0.3).map_err(|e| e.to_string())?;
    if m.recall != 100.0 || m.accuracy != 100.0 * 14.0 / 15.0 {
        return Err(format!("spurious prediction gave {m:?}"));
    }
    Ok(format!("{count} matched instances, hand cases exact"))
}

fn c9_invariants() -> Outcome {
    let b = bench();
    let cfg = b.cfg.pipeline();
    let radius = cfg.detection.nms_radius;
    let bad = map_runs(&b.data, &cfg, |i, _, run, _| -> Option<String> {
        let run = match run {
            Ok(r) => r,
            Err(e) => return Some(format!("model {i}: {e}")),
        };
        let mut sel = run.detection.selected.clone();
        sel.dedup();
        if sel.len() != run.detection.selected.len() || sel.len() != cfg.sampling.n_samples {
            return Some(format!("model {i}: sampled indices not distinct"));
        }
        let c = run.detection.centroids();
        for a in 0..c.len() {
            for d in a + 1..c.len() {
                if c[a].distance(c[d]) < radius {
                    return Some(format!("model {i}: retained centroids closer than the NMS radius"));
                }
            }
        }
        None
    });
    if let Some(e) = bad.into_iter().flatten().next() {
        return Err(e);
    }
    let fps = variant(|c| c.sampling.method = SamplingMethod::Fps)?;
    for row in fps.models.iter().chain(&b.aps.models) {
        let c = &row.metrics.as_ref().unwrap().centroids;
        for a in 0..c.len() {
            for d in a + 1..c.len() {
                if c[a].distance(c[d]) < radius {
                    return Err(format!("{}: NMS radius violated", row.name));
                }
            }
        }
    }
    // Constructed instances: a huge β picks the smallest displacements.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let arch = b.data.models[0].gt_arch.clone();
    for case in 0..20 {
        let votes: Vec<Vote> = (0..150).map(|i| Vote::new(i, rp(&mut rng, 1.0), rp(&mut rng, 0.3))).collect();
        let params = SamplingParams {
            alpha: 1.0,
            beta: 1e6,
            n_samples: 40,
        };
        let got = arch_aware_sampling(&votes, &arch, &params).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..votes.len()).collect();
        order.sort_by(|&a, &b| votes[a].displacement_norm.total_cmp(&votes[b].displacement_norm));
        let mut want = order[..40].to_vec();
        want.sort_unstable();
        if got != want {
            return Err(format!("large-beta case {case}"));
        }
    }
    Ok("NMS spacing, distinct APS picks and large-beta limit hold".into())
}

/// Largest absolute difference between numbers at matching positions, or an
/// error describing the first structural difference.
fn json_diff(a: &serde_json::Value, b: &serde_json::Value, path: &str) -> Result<f64, String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            Ok(if x == y { 0.0 } else { (x - y).abs() })
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: length {} vs {}", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .try_fold(0.0f64, |m, (i, (p, q))| Ok(m.max(json_diff(p, q, &format!("{path}[{i}]"))?)))
        }
        (Value::Object(x), Value::Object(y)) => {
            if x.len() != y.len() || x.keys().any(|k| !y.contains_key(k)) {
                return Err(format!("{path}: different keys"));
            }
            x.iter()
                .try_fold(0.0f64, |m, (k, v)| Ok(m.max(json_diff(v, &y[k], &format!("{path}.{k}"))?)))
        }
        _ if a == b => Ok(0.0),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

fn c10_golden() -> Outcome {
    let b = bench();
    let current = b.aps.deterministic_json();
    let path = golden_path();
    if std::env::var_os("ARCHSEG_UPDATE_GOLDEN").is_some() {
        let mut text = serde_json::to_string_pretty(&current).unwrap();
        text.push('\n');
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
        return Ok(format!("golden rewritten at {}", path.display()));
    }
    let golden: serde_json::Value = read_golden(&path)?;
    // A second run must match the first exactly.
    let again = run_suite(&b.data, &b.cfg, None).map_err(|e| e.to_string())?.deterministic_json();
    if again != current {
        return Err("rerun differs from the first run".into());
    }
    let diff = json_diff(&current, &golden, "report")?;
    if diff == 0.0 {
        Ok("bit-identical to golden".into())
    } else if diff <= 1e-9 {
        Ok(format!("matches golden within {diff:.1e}"))
    } else {
        Err(format!("differs from golden by {diff:.3e}"))
    }
}

fn read_golden(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Hungarian optimality", c1_hungarian, Some(Duration::from_secs(10))),
        ("Bezier round-trip", c2_bezier, Some(Duration::from_secs(5))),
        ("Chamfer/k-NN/FPS oracles", c3_spatial, Some(Duration::from_secs(30))),
        ("APS > FPS trend", c4_aps_vs_fps, Some(Duration::from_secs(120))),
        ("Refinement trend", c5_refinement, Some(Duration::from_secs(60))),
        ("Ideal-input ceiling", c6_ideal, None),
        ("Oracle segmentation bound", c7_oracle_segmentation, Some(Duration::from_secs(120))),
        ("Metric identities", c8_metric_identities, None),
        ("NMS and sampling invariants", c9_invariants, None),
        ("Determinism regression", c10_golden, None),
    ];
    let t = Instant::now();
    bench();
    println!("benchmark prepared in {:.1}s", t.elapsed().as_secs_f64());
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let took = t.elapsed();
        let slow = limit.is_some_and(|l| took > l);
        let (status, detail) = match (&outcome, slow) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {:?} limit", limit.unwrap())),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} criterion {} {name} ({:.2}s): {detail}", i + 1, took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
