//! The CLI subcommands as library functions.

use std::path::{Path, PathBuf};

use archseg_core::arch::arch_mse;
use archseg_core::detect::{detection_metrics, SamplingMethod};
use archseg_core::pipeline::{estimate_arch, ArchMode};
use archseg_core::segment::iou_dice;
use archseg_core::synth::simulate_votes;

use crate::artifacts::{ArchFile, DetectionFile, VotesFile, ARCH_FILE, DETECTION_FILE, SEGMENTATION_PLY};
use crate::config::ExperimentConfig;
use crate::dataset::{load_model_at, Dataset};
use crate::error::{HarnessError, Result};
use crate::io::{read_json, read_ply, write_file, write_json};
use crate::report::{run_suite, Aggregate, MetricsReport, ModelMetrics, ModelRow, Timings};
use crate::table::Table;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

pub const SAMPLING_COLUMNS: [&str; 5] = ["Acc.", "Recall", "C. Dist.", "IoU", "Dice"];
pub const ARCH_COLUMNS: [&str; 3] = ["Acc.", "Recall", "MSE(1e-4)"];

/// Writes the dataset of `cfg` to `out` and returns the manifest path.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    Dataset::generate(&cfg.dataset)?.save(out)
}

/// The dataset at `dir`, or the one `cfg` describes when `dir` is `None`.
pub fn open_dataset(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Dataset> {
    match dir {
        Some(d) => Dataset::load(d),
        None => Dataset::generate(&cfg.dataset),
    }
}

fn mse_e4(v: f64) -> f64 {
    v * 1e4
}

/// One line per model plus a `mean` line.
pub fn report_table(report: &MetricsReport) -> Table {
    let mut t = Table::new("Model", &["Acc.", "Recall", "C. Dist.", "IoU", "Dice", "MSE(1e-4)"]);
    for row in &report.models {
        if let Some(m) = &row.metrics {
            t.push(
                &row.name,
                vec![m.accuracy, m.recall, m.chamfer, m.mean_iou, m.mean_dice, mse_e4(m.arch_mse)],
            );
        }
    }
    let a = &report.aggregate;
    t.push(
        "mean",
        vec![a.accuracy, a.recall, a.chamfer, a.mean_iou, a.mean_dice, mse_e4(a.arch_mse)],
    );
    t
}

fn write_report(report: &MetricsReport, out: &Path) -> Result<()> {
    write_json(&out.join(REPORT_JSON), report)?;
    write_file(&out.join(REPORT_CSV), report_table(report).to_csv().as_bytes())
}

/// Full pipeline over the dataset; with `out`, per-model artifacts and the
/// report are written there.
pub fn cmd_run(cfg: &ExperimentConfig, dataset: &Dataset, out: Option<&Path>) -> Result<MetricsReport> {
    let report = run_suite(dataset, cfg, out)?;
    if let Some(out) = out {
        write_report(&report, out)?;
    }
    Ok(report)
}

fn complete(report: MetricsReport) -> Result<MetricsReport> {
    match report.failure() {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// FPS and APS at 20 and 30 retained centroids.
pub fn cmd_ablate_sampling(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Table> {
    let mut table = Table::new("Method", &SAMPLING_COLUMNS);
    for method in [SamplingMethod::Fps, SamplingMethod::Aps] {
        for k in [20, 30] {
            let mut c = cfg.clone();
            c.sampling.method = method;
            c.detection.max_centroids = k;
            let a = complete(run_suite(dataset, &c, None)?)?.aggregate;
            let label = format!("{}-{k}", method.name().to_uppercase());
            table.push(&label, vec![a.accuracy, a.recall, a.chamfer, a.mean_iou, a.mean_dice]);
        }
    }
    Ok(table)
}

pub const ARCH_ROWS: [(&str, ArchMode); 3] = [
    ("Direct", ArchMode::DirectFit),
    ("Coarse", ArchMode::Coarse),
    ("Coarse + Fine", ArchMode::CoarseFine),
];

/// Direct polyline, Bézier only, and Bézier plus refinement.
pub fn cmd_ablate_arch(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Table> {
    let mut table = Table::new("Arch", &ARCH_COLUMNS);
    for (label, mode) in ARCH_ROWS {
        let mut c = cfg.clone();
        c.arch_mode = mode;
        let a = complete(run_suite(dataset, &c, None)?)?.aggregate;
        table.push(label, vec![a.accuracy, a.recall, mse_e4(a.arch_mse)]);
    }
    Ok(table)
}

/// Writes `table` as `<stem>.csv` and `<stem>.txt` under `out`.
pub fn write_table(table: &Table, out: &Path, stem: &str) -> Result<()> {
    write_file(&out.join(format!("{stem}.csv")), table.to_csv().as_bytes())?;
    write_file(&out.join(format!("{stem}.txt")), table.to_text().as_bytes())
}

/// Scores the artifacts of an earlier run found under `predictions`.
pub fn cmd_eval(cfg: &ExperimentConfig, dataset: &Dataset, predictions: &Path) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(dataset.models.len());
    for (i, (entry, model)) in dataset.manifest.models.iter().zip(&dataset.models).enumerate() {
        let dir = predictions.join("models").join(&entry.name);
        let det: DetectionFile = read_json(&dir.join(DETECTION_FILE))?;
        let arch: ArchFile = read_json(&dir.join(ARCH_FILE))?;
        let seg_path = dir.join(SEGMENTATION_PLY);
        let labels = read_ply(&seg_path)?
            .labels
            .ok_or_else(|| HarnessError::format(&seg_path, "no `instance` property"))?;
        let scored = detection_metrics(&det.centroids, &model.centroids, cfg.detection.match_threshold)
            .and_then(|d| iou_dice(&labels, &model.labels).map(|s| (d, s)));
        let mut row = ModelRow {
            index: i,
            name: entry.name.clone(),
            split: entry.split,
            metrics: None,
            error: None,
        };
        match scored {
            Ok((d, s)) => {
                row.metrics = Some(ModelMetrics {
                    accuracy: d.accuracy,
                    recall: d.recall,
                    chamfer: d.chamfer,
                    mean_iou: s.mean_iou,
                    mean_dice: s.mean_dice,
                    arch_mse: arch_mse(&arch.polyline, &model.gt_arch),
                    centroids: det.centroids,
                    instances: s.per_instance,
                    loss: None,
                })
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(MetricsReport::new(cfg.clone(), rows, Timings::default()))
}

/// Aligned-text rendering of a table CSV or a report JSON.
pub fn cmd_report(path: &Path) -> Result<String> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let report: MetricsReport = read_json(path)?;
        let Aggregate { n_models, n_failed, .. } = report.aggregate;
        let mut text = report_table(&report).to_text();
        text.push_str(&format!("{n_models} models, {n_failed} failed\n"));
        Ok(text)
    } else {
        Ok(Table::from_csv(path)?.to_text())
    }
}

/// Arch from a votes file, optionally scored against the model at `model`.
pub fn cmd_fit_arch(cfg: &ExperimentConfig, votes: &Path, model: Option<&Path>) -> Result<(ArchFile, Option<f64>)> {
    let file: VotesFile = read_json(votes)?;
    let est = estimate_arch(
        &file.votes,
        cfg.arch_mode,
        cfg.detection.grouping_radius,
        cfg.anchor_min_fraction,
        &cfg.refine,
    )?;
    let mse = match model {
        Some(p) => Some(arch_mse(&est.arch, &load_model_at(p)?.gt_arch)),
        None => None,
    };
    Ok((
        ArchFile {
            bezier_control: est.bezier,
            polyline: est.arch,
        },
        mse,
    ))
}

/// Simulated votes for the model at `model` under the configured noise.
pub fn cmd_simulate_votes(cfg: &ExperimentConfig, model: &Path) -> Result<VotesFile> {
    let m = load_model_at(model)?;
    let votes = simulate_votes(&m, cfg.vote_subsample.min(m.cloud.len()), &cfg.votes)?;
    Ok(VotesFile { noise: cfg.votes, votes })
}
