//! Per-model output files of a run.

use std::path::Path;

use archseg_core::arch::{ArchPolyline, BezierCurve};
use archseg_core::detect::{DetectionParams, SamplingMethod, SamplingParams};
use archseg_core::pipeline::{ArchMode, ModelRun, PipelineConfig};
use archseg_core::synth::{DentalModel, Vote, VoteNoiseModel};
use archseg_core::Point3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{write_json, write_ply};

/// `arch.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchFile {
    /// Absent for the direct polyline fit.
    pub bezier_control: Option<BezierCurve>,
    pub polyline: ArchPolyline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionFileParams {
    pub sampling: SamplingParams,
    pub detection: DetectionParams,
    pub arch_mode: ArchMode,
}

/// `detection.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub centroids: Vec<Point3>,
    pub confidences: Vec<f64>,
    pub sampling: SamplingMethod,
    pub params: DetectionFileParams,
}

/// Votes written by `simulate-votes` and read by `fit-arch`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotesFile {
    pub noise: VoteNoiseModel,
    pub votes: Vec<Vote>,
}

pub const ARCH_FILE: &str = "arch.json";
pub const DETECTION_FILE: &str = "detection.json";
pub const SEGMENTATION_PLY: &str = "segmentation.ply";
pub const SEGMENTATION_JSON: &str = "segmentation.json";

/// Per-model files under `dir`: arch, detection, fused segmentation.
pub fn write_artifacts(dir: &Path, model: &DentalModel, run: &ModelRun, cfg: &PipelineConfig) -> Result<()> {
    write_json(
        &dir.join(ARCH_FILE),
        &ArchFile {
            bezier_control: run.arch.bezier,
            polyline: run.arch.arch.clone(),
        },
    )?;
    write_json(
        &dir.join(DETECTION_FILE),
        &DetectionFile {
            centroids: run.detection.centroids(),
            confidences: run.detection.confidences(),
            sampling: cfg.method,
            params: DetectionFileParams {
                sampling: cfg.sampling,
                detection: cfg.detection,
                arch_mode: cfg.arch_mode,
            },
        },
    )?;
    write_ply(
        &dir.join(SEGMENTATION_PLY),
        model.cloud.points(),
        Some(&run.segmentation.fused.labels),
    )?;
    write_json(&dir.join(SEGMENTATION_JSON), &run.segmentation.metrics)
}
