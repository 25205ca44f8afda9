//! Synthetic datasets on disk: one PLY and one JSON sidecar per model, plus
//! a manifest.

use std::path::{Path, PathBuf};

use archseg_core::arch::{ArchPolyline, BezierCurve};
use archseg_core::synth::{generate_model, DentalModel, ScanConfig};
use archseg_core::{Point3, PointCloud, Transform};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::error::{HarnessError, Result};
use crate::io::{read_json, read_ply, write_json, write_ply};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub cloud: String,
    pub sidecar: String,
    pub split: Split,
    /// Tooth ids whose labels are visible to loss evaluation.
    pub annotated_teeth: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub weak_ratio: f64,
    pub models: Vec<ManifestEntry>,
}

/// Per-model JSON written next to the PLY.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub centroids: Vec<Point3>,
    pub arch: ArchPolyline,
    pub bezier_control: BezierCurve,
    pub config: ScanConfig,
    pub normalization: Transform,
}

impl Sidecar {
    pub fn of(model: &DentalModel) -> Self {
        Sidecar {
            centroids: model.centroids.clone(),
            arch: model.gt_arch.clone(),
            bezier_control: model.gt_bezier,
            config: model.config.clone(),
            normalization: model.normalization,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub models: Vec<DentalModel>,
}

fn annotated_teeth(n_teeth: usize, ratio: f64, seed: u64) -> Vec<u32> {
    let keep = ((ratio * n_teeth as f64).ceil() as usize).min(n_teeth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11A_7ED0);
    let mut ids: Vec<u32> = sample(&mut rng, n_teeth, keep).into_iter().map(|i| i as u32 + 1).collect();
    ids.sort_unstable();
    ids
}

fn test_split(n: usize, fraction: f64, seed: u64) -> Vec<Split> {
    let n_test = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E11_7000);
    let mut split = vec![Split::Train; n];
    for i in sample(&mut rng, n, n_test.min(n)) {
        split[i] = Split::Test;
    }
    split
}

impl Dataset {
    /// Generates every model of `cfg` in memory.
    pub fn generate(cfg: &DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let models: Vec<DentalModel> = (0..cfg.n_models)
            .into_par_iter()
            .map(|i| generate_model(&cfg.model_config(i)))
            .collect::<archseg_core::Result<_>>()?;
        let split = test_split(cfg.n_models, cfg.test_fraction, cfg.seed);
        let entries = models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let name = format!("model_{i:04}");
                ManifestEntry {
                    cloud: format!("{name}.ply"),
                    sidecar: format!("{name}.json"),
                    name,
                    split: split[i],
                    annotated_teeth: annotated_teeth(m.n_teeth(), cfg.weak_ratio, m.config.seed),
                }
            })
            .collect();
        Ok(Dataset {
            manifest: Manifest {
                seed: cfg.seed,
                weak_ratio: cfg.weak_ratio,
                models: entries,
            },
            models,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        for (entry, model) in self.manifest.models.iter().zip(&self.models) {
            write_ply(&dir.join(&entry.cloud), model.cloud.points(), Some(&model.labels))?;
            write_json(&dir.join(&entry.sidecar), &Sidecar::of(model))?;
        }
        let path = dir.join(MANIFEST);
        write_json(&path, &self.manifest)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
        let models = manifest
            .models
            .par_iter()
            .map(|e| load_model(&dir.join(&e.cloud), &dir.join(&e.sidecar)))
            .collect::<Result<_>>()?;
        Ok(Dataset { manifest, models })
    }
}

/// Rebuilds a model from its PLY and sidecar, checking that the sidecar
/// agrees with the labels.
pub fn load_model(cloud_path: &Path, sidecar_path: &Path) -> Result<DentalModel> {
    let cloud = read_ply(cloud_path)?;
    let labels = cloud
        .labels
        .ok_or_else(|| HarnessError::format(cloud_path, "no `instance` property"))?;
    let sidecar: Sidecar = read_json(sidecar_path)?;
    let mut model = DentalModel::from_labeled(PointCloud::new(cloud.points)?, labels, sidecar.config)?;
    model.normalization = sidecar.normalization;
    let agrees = model.centroids.len() == sidecar.centroids.len()
        && model
            .centroids
            .iter()
            .zip(&sidecar.centroids)
            .all(|(a, b)| a.distance(*b) <= 1e-9);
    if !agrees {
        return Err(HarnessError::format(sidecar_path, "centroids do not match the labeled cloud"));
    }
    Ok(model)
}

/// Model at `path` (a PLY), with the sidecar at the same stem.
pub fn load_model_at(path: &Path) -> Result<DentalModel> {
    load_model(path, &path.with_extension("json"))
}
