//! Running the pipeline over a dataset and collecting a [`MetricsReport`].

use std::path::Path;
use std::time::Instant;

use archseg_core::pipeline::{mask_loss, run_model, ModelRun, PipelineConfig};
use archseg_core::segment::InstanceScore;
use archseg_core::synth::DentalModel;
use archseg_core::{KdTree, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{Dataset, ManifestEntry, Split};
use crate::error::{HarnessError, Result};
use crate::artifacts::write_artifacts;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l_offset: f64,
    pub l_conf: f64,
    pub l_centers: f64,
    pub l_det: f64,
    pub no_positives: bool,
    /// Mask cross-entropy over every tooth.
    pub mask_full: Option<f64>,
    /// Mask cross-entropy over the annotated teeth only.
    pub mask_weak: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub chamfer: f64,
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub arch_mse: f64,
    pub centroids: Vec<Point3>,
    pub instances: Vec<InstanceScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossTerms>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub index: usize,
    pub name: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ModelMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Means over the models that ran; all zero when none did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_models: usize,
    pub n_failed: usize,
    pub accuracy: f64,
    pub recall: f64,
    pub chamfer: f64,
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub arch_mse: f64,
}

impl Aggregate {
    pub fn of(rows: &[ModelRow]) -> Self {
        let ok: Vec<&ModelMetrics> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let mean = |f: fn(&ModelMetrics) -> f64| {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
            }
        };
        Aggregate {
            n_models: rows.len(),
            n_failed: rows.len() - ok.len(),
            accuracy: mean(|m| m.accuracy),
            recall: mean(|m| m.recall),
            chamfer: mean(|m| m.chamfer),
            mean_iou: mean(|m| m.mean_iou),
            mean_dice: mean(|m| m.mean_dice),
            arch_mse: mean(|m| m.arch_mse),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub per_model_seconds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub models: Vec<ModelRow>,
    pub aggregate: Aggregate,
    pub timings: Timings,
}

impl MetricsReport {
    pub fn new(config: ExperimentConfig, models: Vec<ModelRow>, timings: Timings) -> Self {
        let aggregate = Aggregate::of(&models);
        MetricsReport {
            config,
            models,
            aggregate,
            timings,
        }
    }

    /// Everything except wall-clock timings, as JSON.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        v
    }

    pub fn failure(&self) -> Option<HarnessError> {
        (self.aggregate.n_failed > 0).then_some(HarnessError::ModelsFailed {
            failed: self.aggregate.n_failed,
            total: self.aggregate.n_models,
        })
    }
}

/// Runs `f` on a pool of `jobs` threads, or rayon's global pool for `None`.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Applies `f` to the pipeline output of every model, in parallel, returning
/// results in model order. `f` also gets the pipeline's wall time in seconds.
pub fn map_runs<T: Send>(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    f: impl Fn(usize, &DentalModel, archseg_core::Result<ModelRun>, f64) -> T + Sync,
) -> Vec<T> {
    dataset
        .models
        .par_iter()
        .enumerate()
        .map(|(i, model)| {
            let t0 = Instant::now();
            let index = KdTree::new(model.cloud.points());
            let run = run_model(model, &index, cfg);
            f(i, model, run, t0.elapsed().as_secs_f64())
        })
        .collect()
}

pub fn metrics_of(model: &DentalModel, entry: &ManifestEntry, run: &ModelRun) -> ModelMetrics {
    let all: Vec<u32> = (1..=model.n_teeth() as u32).collect();
    ModelMetrics {
        accuracy: run.metrics.accuracy,
        recall: run.metrics.recall,
        chamfer: run.metrics.chamfer,
        mean_iou: run.segmentation.metrics.mean_iou,
        mean_dice: run.segmentation.metrics.mean_dice,
        arch_mse: run.arch_mse,
        centroids: run.detection.centroids(),
        instances: run.segmentation.metrics.per_instance.clone(),
        loss: Some(LossTerms {
            l_offset: run.loss.l_offset,
            l_conf: run.loss.l_conf,
            l_centers: run.loss.l_centers,
            l_det: run.loss.l_det,
            no_positives: run.loss.no_positives,
            mask_full: mask_loss(model, &run.segmentation, &all),
            mask_weak: mask_loss(model, &run.segmentation, &entry.annotated_teeth),
        }),
    }
}

/// The full pipeline over `dataset`. Per-model failures are recorded in the
/// rows; artifact write failures abort.
pub fn run_suite(dataset: &Dataset, cfg: &ExperimentConfig, artifacts: Option<&Path>) -> Result<MetricsReport> {
    cfg.validate()?;
    let pipeline = cfg.pipeline();
    let start = Instant::now();
    let rows = map_runs(dataset, &pipeline, |i, model, run, seconds| -> Result<(ModelRow, f64)> {
        let entry = &dataset.manifest.models[i];
        let mut row = ModelRow {
            index: i,
            name: entry.name.clone(),
            split: entry.split,
            metrics: None,
            error: None,
        };
        match run {
            Ok(run) => {
                if let Some(dir) = artifacts {
                    write_artifacts(&dir.join("models").join(&entry.name), model, &run, &pipeline)?;
                }
                row.metrics = Some(metrics_of(model, entry, &run));
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        Ok((row, seconds))
    });
    let mut models = Vec::with_capacity(rows.len());
    let mut per_model_seconds = Vec::with_capacity(rows.len());
    for r in rows {
        let (row, t) = r?;
        models.push(row);
        per_model_seconds.push(t);
    }
    let timings = Timings {
        total_seconds: start.elapsed().as_secs_f64(),
        per_model_seconds,
    };
    Ok(MetricsReport::new(cfg.clone(), models, timings))
}
