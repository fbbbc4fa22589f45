//! The stages of an experiment wired together in memory.
//!
//! Campaign segments with a crowd majority form the training pool; every other
//! segment of the scene with region-of-interest pixels is scored against its
//! pixel-majority truth.

use serde::{Deserialize, Serialize};

use crate::crowd::{
    self, AggregateOptions, CampaignDesign, Class, CrowdModel, HorRecord, SegmentLabel, VoteRecord,
};
use crate::curriculum::{self, LearningCurve, Sample, Strategy, StrategyKind};
use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::raster::{self, BandId, CompositeImage, GroundTruthMask, MultibandRaster};
use crate::segmentation::{self, SegmentMap};
use crate::texture::{self, FeatureRow, TextureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub k: usize,
    pub compactness: f64,
    pub iterations: usize,
    /// Restrict seeding and clustering to non-ignored pixels.
    pub masked: bool,
    pub bands: [BandId; 3],
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            k: 600,
            compactness: 10.0,
            iterations: segmentation::DEFAULT_ITERATIONS,
            masked: true,
            bands: raster::DEFAULT_TRIPLE,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if !(self.compactness.is_finite() && self.compactness >= 0.0) {
            return Err(Error::param(
                "compactness",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub strategies: Vec<StrategyKind>,
    pub random_repetitions: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            strategies: StrategyKind::ALL.to_vec(),
            random_repetitions: Strategy::RANDOM_REPETITIONS,
            seed: 0,
            epsilon: curriculum::DEFAULT_EPSILON,
        }
    }
}

impl CurriculumConfig {
    pub fn strategy(&self, kind: StrategyKind) -> Strategy {
        match kind {
            StrategyKind::Random => Strategy {
                kind,
                repetitions: self.random_repetitions,
            },
            _ => Strategy::standard(kind),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return Err(Error::param("strategies", "lists a strategy twice"));
        }
        if self.strategies.is_empty() {
            return Err(Error::param("strategies", "need at least one strategy"));
        }
        if self.random_repetitions == 0 {
            return Err(Error::param("random_repetitions", "must be at least 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be non-negative"));
        }
        Ok(())
    }
}

/// Everything the pipeline needs besides the input scene.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub segmentation: SegmentationConfig,
    pub campaign: CampaignDesign,
    pub crowd: CrowdModel,
    pub aggregate: AggregateOptions,
    pub texture: TextureConfig,
    pub learner: TrainConfig,
    pub curriculum: CurriculumConfig,
}

/// Composite of the configured band triple and its superpixels.
pub fn segment_scene(
    raster: &MultibandRaster,
    mask: &GroundTruthMask,
    config: &SegmentationConfig,
) -> Result<(CompositeImage, SegmentMap)> {
    let composite = raster::compose(raster, config.bands)?;
    if (mask.width(), mask.height()) != (raster.width(), raster.height()) {
        return Err(Error::DimensionMismatch {
            expected: (raster.width(), raster.height()),
            found: (mask.width(), mask.height()),
            context: "mask vs raster".into(),
        });
    }
    let lab = raster::to_cielab(&composite);
    let map = if config.masked {
        segmentation::mask_slic(&lab, mask, config.k, config.compactness, config.iterations)?
    } else {
        segmentation::slic(&lab, config.k, config.compactness, config.iterations)?
    };
    Ok((composite, map))
}

/// HoR of every segment holding at least one forest or non-forest pixel, by
/// ascending id.
pub fn segment_hors(map: &SegmentMap, mask: &GroundTruthMask) -> Result<Vec<HorRecord>> {
    let mut out = Vec::with_capacity(map.segment_count());
    for (id, pixels) in map.segment_pixels().iter().enumerate() {
        match crowd::hor(id as u32, pixels, mask) {
            Ok(r) => out.push(r),
            Err(Error::UnlabeledSegment(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    /// Campaign segments, ascending id.
    pub tasks: Vec<HorRecord>,
    pub votes: Vec<VoteRecord>,
    pub labels: Vec<SegmentLabel>,
}

/// Picks the campaign, simulates its votes and aggregates them.
pub fn run_campaign(hors: &[HorRecord], params: &PipelineParams) -> Result<Campaign> {
    params.campaign.validate()?;
    let ids = crowd::design_campaign(hors, &params.campaign);
    let tasks: Vec<HorRecord> = hors
        .iter()
        .filter(|r| ids.binary_search(&r.segment_id).is_ok())
        .copied()
        .collect();
    let truth: Vec<Class> = tasks.iter().map(HorRecord::majority).collect();
    let votes = crowd::simulate_campaign(&tasks, &truth, &params.crowd)?;
    let labels = crowd::aggregate(&votes, params.aggregate);
    Ok(Campaign {
        tasks,
        votes,
        labels,
    })
}

/// One feature row per segment in `hors`, carrying its crowd label when it
/// was part of the campaign.
pub fn feature_table(
    composite: &CompositeImage,
    map: &SegmentMap,
    hors: &[HorRecord],
    labels: &[SegmentLabel],
    config: &TextureConfig,
) -> Result<Vec<FeatureRow>> {
    let features = texture::extract_features(&composite.luminance(), map, config)?;
    hors.iter()
        .map(|r| {
            let label = labels
                .binary_search_by_key(&r.segment_id, |l| l.segment_id)
                .ok()
                .map(|i| &labels[i]);
            let features = features
                .get(r.segment_id as usize)
                .ok_or(Error::UnlabeledSegment(r.segment_id))?
                .clone();
            Ok(FeatureRow {
                segment_id: r.segment_id,
                class: label
                    .map_or("unlabeled", |l| l.majority.as_str())
                    .to_string(),
                entropy: label.and_then(|l| l.entropy),
                truth: r.majority(),
                features,
            })
        })
        .collect()
}

/// Training pool: crowd-labelled rows with a non-tie majority and an entropy.
pub fn training_pool(rows: &[FeatureRow]) -> Vec<Sample> {
    rows.iter()
        .filter_map(|r| {
            Some(Sample {
                segment_id: r.segment_id,
                class: r.crowd_class()?,
                entropy: r.entropy?,
                features: r.features.0.clone(),
            })
        })
        .collect()
}

/// Test set: rows outside the campaign, labelled by ground truth.
pub fn test_set(rows: &[FeatureRow]) -> Vec<Sample> {
    rows.iter()
        .filter(|r| r.class == "unlabeled")
        .map(|r| Sample {
            segment_id: r.segment_id,
            class: r.truth,
            entropy: 0.0,
            features: r.features.0.clone(),
        })
        .collect()
}

pub fn run_curves(
    pool: &[Sample],
    test: &[Sample],
    params: &PipelineParams,
) -> Result<Vec<LearningCurve>> {
    params.curriculum.validate()?;
    params
        .curriculum
        .strategies
        .iter()
        .map(|&kind| {
            curriculum::run_curve(
                pool,
                test,
                params.curriculum.strategy(kind),
                &params.learner,
                params.curriculum.seed,
            )
        })
        .collect()
}

/// All intermediate products of one run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub map: SegmentMap,
    pub hors: Vec<HorRecord>,
    pub campaign: Campaign,
    pub rows: Vec<FeatureRow>,
    pub curves: Vec<LearningCurve>,
}

pub fn run_experiment(
    raster: &MultibandRaster,
    mask: &GroundTruthMask,
    params: &PipelineParams,
) -> Result<Experiment> {
    let (composite, map) = segment_scene(raster, mask, &params.segmentation)?;
    let hors = segment_hors(&map, mask)?;
    let campaign = run_campaign(&hors, params)?;
    let rows = feature_table(&composite, &map, &hors, &campaign.labels, &params.texture)?;
    let curves = run_curves(&training_pool(&rows), &test_set(&rows), params)?;
    Ok(Experiment {
        map,
        hors,
        campaign,
        rows,
        curves,
    })
}
