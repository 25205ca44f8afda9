//! Experiment configuration as read from `--config`.

use std::path::Path;

use archseg_core::detect::{DetectionLossParams, DetectionParams, SamplingMethod, SamplingParams};
use archseg_core::arch::RefineParams;
use archseg_core::pipeline::{ArchMode, PipelineConfig};
use archseg_core::segment::SegParams;
use archseg_core::synth::{ScanConfig, VoteNoiseModel};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_models: usize,
    /// Template for every model; its seed is replaced per model.
    pub scan: ScanConfig,
    pub seed: u64,
    /// Fraction of models tagged `test` in the manifest.
    pub test_fraction: f64,
    /// Fraction of teeth per model whose labels count as annotated.
    pub weak_ratio: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_models: 50,
            scan: ScanConfig::default(),
            seed: 0,
            test_fraction: 0.2,
            weak_ratio: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(HarnessError::Config("dataset.n_models must be at least 1".into()));
        }
        for (name, v) in [("test_fraction", self.test_fraction), ("weak_ratio", self.weak_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(HarnessError::Config(format!("dataset.{name} must be in [0, 1]")));
            }
        }
        self.scan.validate().map_err(|e| HarnessError::Config(format!("dataset.scan: {e}")))
    }

    /// Generator settings of model `index`.
    pub fn model_config(&self, index: usize) -> ScanConfig {
        ScanConfig {
            seed: self.seed.wrapping_add(index as u64),
            ..self.scan.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub method: SamplingMethod,
    pub alpha: f64,
    pub beta: f64,
    pub n_samples: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let p = SamplingParams::default();
        SamplingConfig {
            method: SamplingMethod::Aps,
            alpha: p.alpha,
            beta: p.beta,
            n_samples: p.n_samples,
        }
    }
}

impl SamplingConfig {
    pub fn params(&self) -> SamplingParams {
        SamplingParams {
            alpha: self.alpha,
            beta: self.beta,
            n_samples: self.n_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub votes: VoteNoiseModel,
    pub vote_subsample: usize,
    pub sampling: SamplingConfig,
    pub detection: DetectionParams,
    pub refine: RefineParams,
    pub segmentation: SegParams,
    pub arch_mode: ArchMode,
    pub loss: DetectionLossParams,
    pub anchor_min_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            votes: p.votes,
            vote_subsample: p.vote_subsample,
            sampling: SamplingConfig::default(),
            detection: p.detection,
            refine: p.refine,
            segmentation: p.segmentation,
            arch_mode: p.arch_mode,
            loss: p.loss,
            anchor_min_fraction: p.anchor_min_fraction,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.pipeline()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            votes: self.votes,
            vote_subsample: self.vote_subsample,
            method: self.sampling.method,
            sampling: self.sampling.params(),
            detection: self.detection,
            refine: self.refine,
            segmentation: self.segmentation,
            arch_mode: self.arch_mode,
            loss: self.loss,
            anchor_min_fraction: self.anchor_min_fraction,
        }
    }
}
