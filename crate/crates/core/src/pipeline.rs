//! One model through the whole detect-and-segment chain.

use alloc::format;
use alloc::vec::Vec;

use crate::arch::{
    arch_mse, build_target_arch, fit_bezier, order_along_arch, refine_arch, ArchPolyline, BezierCurve, RefineParams,
};
use crate::detect::{
    assign_gt_confidence, detection_loss, detection_metrics, group_votes, make_proposals, nms, pregroup_votes,
    sample_votes, DetectionLoss, DetectionLossParams, DetectionMetrics, DetectionParams, Proposal, SamplingMethod,
    SamplingParams,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{cross_entropy, Point3};
use crate::segment::{crop_patch, fuse_patches, iou_dice, segment_patch, InstanceSegmentation, Patch, PatchMask, SegMetrics, SegParams};
use crate::spatial::KdTree;
use crate::synth::{simulate_votes, DentalModel, Vote, VoteNoiseModel};

/// How the arch used by arch-aware sampling is obtained from votes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ArchMode {
    /// Polyline straight through the vote cluster centers.
    DirectFit,
    /// Cubic Bézier fitted to the cluster centers.
    Coarse,
    /// Bézier followed by vote-driven refinement.
    CoarseFine,
}

impl ArchMode {
    pub fn name(self) -> &'static str {
        match self {
            ArchMode::DirectFit => "direct_fit",
            ArchMode::Coarse => "coarse",
            ArchMode::CoarseFine => "coarse_fine",
        }
    }
}

impl core::str::FromStr for ArchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct_fit" => Ok(ArchMode::DirectFit),
            "coarse" => Ok(ArchMode::Coarse),
            "coarse_fine" => Ok(ArchMode::CoarseFine),
            other => Err(invalid(format!("unknown arch mode `{other}`"))),
        }
    }
}

/// Everything that controls a per-model run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PipelineConfig {
    pub votes: VoteNoiseModel,
    /// Number of FPS seeds that cast votes.
    pub vote_subsample: usize,
    pub method: SamplingMethod,
    pub sampling: SamplingParams,
    pub detection: DetectionParams,
    pub refine: RefineParams,
    pub segmentation: SegParams,
    pub arch_mode: ArchMode,
    pub loss: DetectionLossParams,
    /// Vote clusters smaller than this fraction of the largest one are not
    /// used as arch anchors.
    pub anchor_min_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            votes: VoteNoiseModel::default(),
            vote_subsample: 2048,
            method: SamplingMethod::Aps,
            sampling: SamplingParams::default(),
            detection: DetectionParams::default(),
            refine: RefineParams::default(),
            segmentation: SegParams::default(),
            arch_mode: ArchMode::CoarseFine,
            loss: DetectionLossParams::default(),
            anchor_min_fraction: 0.3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.votes.validate()?;
        self.sampling.validate()?;
        self.detection.validate()?;
        self.refine.validate()?;
        self.segmentation.validate()?;
        if self.vote_subsample == 0 {
            return Err(invalid("vote_subsample must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.anchor_min_fraction) {
            return Err(invalid("anchor_min_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchEstimate {
    pub arch: ArchPolyline,
    pub bezier: Option<BezierCurve>,
    /// Cluster centers the arch was fitted to, in arch order.
    pub anchors: Vec<Point3>,
}

/// Arch from vote cluster centers, per `mode`.
pub fn estimate_arch(
    votes: &[Vote],
    mode: ArchMode,
    grouping_radius: f64,
    anchor_min_fraction: f64,
    refine: &RefineParams,
) -> Result<ArchEstimate> {
    let mut clusters = pregroup_votes(votes, grouping_radius, anchor_min_fraction)?;
    if clusters.len() < 4 {
        clusters = pregroup_votes(votes, grouping_radius, 0.0)?;
        clusters.sort_by_key(|c| core::cmp::Reverse(c.1));
        clusters.truncate(4);
    }
    if clusters.len() < 4 {
        return Err(Error::Degenerate("fewer than 4 vote clusters for the arch fit"));
    }
    let centers: Vec<Point3> = clusters.iter().map(|c| c.0).collect();
    let anchors: Vec<Point3> = order_along_arch(&centers).into_iter().map(|i| centers[i]).collect();
    if mode == ArchMode::DirectFit {
        return Ok(ArchEstimate {
            arch: build_target_arch(&anchors)?,
            bezier: None,
            anchors,
        });
    }
    let fit = fit_bezier(&anchors, 100, 1e-10)?;
    let coarse = ArchPolyline::from_bezier(&fit.curve)?;
    let arch = match mode {
        ArchMode::CoarseFine => refine_arch(&coarse, votes, refine)?,
        _ => coarse,
    };
    Ok(ArchEstimate {
        arch,
        bezier: Some(fit.curve),
        anchors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub selected: Vec<usize>,
    pub proposals: Vec<Proposal>,
    /// Proposal indices kept by NMS, best first.
    pub retained: Vec<usize>,
    pub gt_labels: Vec<bool>,
}

impl Detection {
    pub fn centroids(&self) -> Vec<Point3> {
        self.retained.iter().map(|&i| self.proposals[i].position).collect()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.retained.iter().map(|&i| self.proposals[i].confidence).collect()
    }
}

/// Sampling, grouping, proposals, ground-truth labeling and NMS.
pub fn detect(
    votes: &[Vote],
    arch: Option<&ArchPolyline>,
    gt_centroids: &[Point3],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Detection> {
    let d = &cfg.detection;
    let selected = sample_votes(votes, cfg.method, arch, &cfg.sampling, seed)?;
    let clusters = group_votes(&selected, votes, d.grouping_radius)?;
    let mut proposals = make_proposals(&clusters, votes, d.grouping_radius)?;
    let gt_labels = assign_gt_confidence(&mut proposals, gt_centroids, d.conf_gt_threshold);
    let retained = nms(&proposals, d.nms_radius, d.max_centroids)?;
    Ok(Detection {
        selected,
        proposals,
        retained,
        gt_labels,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub patches: Vec<Patch>,
    pub masks: Vec<PatchMask>,
    pub fused: InstanceSegmentation,
    pub metrics: SegMetrics,
}

/// Patch per center, masks, fusion and scoring against the model labels.
pub fn segment_model(model: &DentalModel, index: &KdTree, centers: &[Point3], params: &SegParams) -> Result<Segmentation> {
    let patches: Vec<Patch> = centers
        .iter()
        .map(|&c| crop_patch(index, c, params))
        .collect::<Result<_>>()?;
    let masks: Vec<PatchMask> = patches
        .iter()
        .map(|p| segment_patch(p, params))
        .collect::<Result<_>>()?;
    let fused = fuse_patches(model.cloud.len(), &patches, &masks, params)?;
    let metrics = iou_dice(&fused.labels, &model.labels)?;
    Ok(Segmentation {
        patches,
        masks,
        fused,
        metrics,
    })
}

/// Mean per-point cross-entropy of patch masks against the tooth under each
/// patch seed, restricted to patches whose tooth is in `visible`. `None`
/// when no patch qualifies.
pub fn mask_loss(model: &DentalModel, seg: &Segmentation, visible: &[u32]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (patch, mask) in seg.patches.iter().zip(&seg.masks) {
        let tooth = model.labels[patch.point_indices[0]];
        if tooth == 0 || !visible.contains(&tooth) {
            continue;
        }
        for (&i, &p) in patch.point_indices.iter().zip(&mask.probabilities) {
            total += cross_entropy(p, model.labels[i] == tooth);
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRun {
    pub votes: Vec<Vote>,
    pub arch: ArchEstimate,
    pub arch_mse: f64,
    pub detection: Detection,
    pub metrics: DetectionMetrics,
    pub loss: DetectionLoss,
    pub segmentation: Segmentation,
}

/// Random seed for the votes and sampler of one model.
pub fn model_seed(cfg: &PipelineConfig, model: &DentalModel) -> u64 {
    cfg.votes.seed.wrapping_add(model.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Votes, arch, detection, metrics and segmentation for one model.
pub fn run_model(model: &DentalModel, index: &KdTree, cfg: &PipelineConfig) -> Result<ModelRun> {
    cfg.validate()?;
    let seed = model_seed(cfg, model);
    let noise = VoteNoiseModel { seed, ..cfg.votes };
    let votes = simulate_votes(model, cfg.vote_subsample.min(model.cloud.len()), &noise)?;
    let arch = estimate_arch(
        &votes,
        cfg.arch_mode,
        cfg.detection.grouping_radius,
        cfg.anchor_min_fraction,
        &cfg.refine,
    )?;
    let mse = arch_mse(&arch.arch, &model.gt_arch);
    let detection = detect(&votes, Some(&arch.arch), &model.centroids, cfg, seed)?;
    let centroids = detection.centroids();
    let metrics = detection_metrics(&centroids, &model.centroids, cfg.detection.match_threshold)?;
    let loss = detection_loss(&votes, &detection.proposals, model, &cfg.loss)?;
    let segmentation = segment_model(model, index, &centroids, &cfg.segmentation)?;
    Ok(ModelRun {
        votes,
        arch,
        arch_mse: mse,
        detection,
        metrics,
        loss,
        segmentation,
    })
}
