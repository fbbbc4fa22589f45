use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use forestcurve_core::crowd::{AggregateOptions, CampaignDesign, CrowdModel};
use forestcurve_core::learner::TrainConfig;
use forestcurve_core::pipeline::{CurriculumConfig, PipelineParams, SegmentationConfig};
use forestcurve_core::synth::SceneSpec;
use forestcurve_core::texture::TextureConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

/// Documented defaults, shown by `--help`. A test keeps this in sync with
/// `PipelineConfig::default()`.
pub const DEFAULT_CONFIG: &str = r#"# Relative paths are resolved against the config file's directory.
[paths]
workdir = "work"            # stage outputs; --workdir overrides
# raster = "scene/manifest.toml"   # default: <workdir>/scene/manifest.toml (from `synth`)
# mask = "scene/mask.png"          # default: <workdir>/scene/mask.png

[synth]
width = 384
height = 384
nonforest_fraction = 0.3    # share of pixels grown as non-forest blobs
blob_count = 30
grain = 4                   # correlation length of the smooth noise, pixels
ignore_fraction = 0.05      # upper bound for strips marked ignore
scale = 10000.0             # count that maps to reflectance 1.0
seed = 7

[synth.forest]              # band order: B1 B2 B3 B4 B8 B11 B12
mean = [250.0, 220.0, 450.0, 260.0, 3000.0, 1400.0, 600.0]
std = [40.0, 40.0, 70.0, 50.0, 400.0, 200.0, 100.0]
roughness = 0.95            # share of noise variance that is per-pixel

[synth.nonforest]
mean = [400.0, 450.0, 700.0, 800.0, 2400.0, 2600.0, 1800.0]
std = [40.0, 40.0, 70.0, 50.0, 400.0, 200.0, 100.0]
roughness = 0.05

[segmentation]
k = 600                     # requested superpixels
compactness = 10.0          # m
iterations = 10
masked = true               # MaskSLIC on non-ignored pixels
bands = ["B4", "B3", "B2"]  # composite triple

[campaign]
pure = 90                   # segments with HoR = 1, split evenly by class
mixed = 90                  # segments with HoR in [mixed_low, mixed_high]
mixed_low = 0.7
mixed_high = 0.8
seed = 42

[crowd]
votes_per_task = 15
volunteers = 100
alpha = 5.0                 # reliability ~ Beta(alpha, beta)
beta = 2.0
undefined_rate = 0.1        # P(undefined) = 2 * undefined_rate * (1 - HoR)
seed = 42
include_undefined = false   # count undefined answers in the entropy
# votes = "votes.csv"       # use recorded votes instead of simulating

[texture]
gray_levels = 32
distance = 1
append_aggregates = false   # append per-descriptor mean and range (78 values)

[learner]
c = 1.0
tolerance = 0.0001
max_epochs = 1000
seed = 0                    # coordinate order
bias_scale = 1.0

[curriculum]
strategies = ["increasing", "decreasing", "edges", "random"]
random_repetitions = 10
seed = 0                    # repetition r of the random baseline uses seed + r
epsilon = 0.01              # convergence tolerance
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub workdir: PathBuf,
    pub raster: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("work"),
            raster: None,
            mask: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdSection {
    pub votes_per_task: usize,
    pub volunteers: usize,
    pub alpha: f64,
    pub beta: f64,
    pub undefined_rate: f64,
    pub seed: u64,
    pub include_undefined: bool,
    pub votes: Option<PathBuf>,
}

impl Default for CrowdSection {
    fn default() -> Self {
        let m = CrowdModel::default();
        Self {
            votes_per_task: m.votes_per_task,
            volunteers: m.volunteers,
            alpha: m.alpha,
            beta: m.beta,
            undefined_rate: m.undefined_rate,
            seed: m.seed,
            include_undefined: false,
            votes: None,
        }
    }
}

impl CrowdSection {
    pub fn model(&self) -> CrowdModel {
        CrowdModel {
            votes_per_task: self.votes_per_task,
            volunteers: self.volunteers,
            alpha: self.alpha,
            beta: self.beta,
            undefined_rate: self.undefined_rate,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synth: SceneSpec,
    pub segmentation: SegmentationConfig,
    pub campaign: CampaignDesign,
    pub crowd: CrowdSection,
    pub texture: TextureConfig,
    pub learner: TrainConfig,
    pub curriculum: CurriculumConfig,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Validation(format!("config: {e}")))
    }

    /// Reads `path`, resolving relative paths inside it against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Failure::Validation(format!("config file {} not found", path.display()))
            }
            _ => Failure::Internal(format!("reading {}: {e}", path.display())),
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        anchor(&mut config.paths.workdir);
        config.paths.raster.as_mut().map(anchor);
        config.paths.mask.as_mut().map(anchor);
        config.crowd.votes.as_mut().map(anchor);
        Ok(config)
    }

    /// Replaces every stage seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.campaign.seed = seed;
        self.crowd.seed = seed;
        self.learner.seed = seed;
        self.curriculum.seed = seed;
    }

    /// Checks every section, naming the offending field.
    pub fn validate(&self) -> Result<(), Failure> {
        let field = |section: &str, e: forestcurve_core::Error| match e {
            forestcurve_core::Error::InvalidParameter { name, reason } => {
                Failure::Validation(format!("{section}.{name}: {reason}"))
            }
            other => Failure::Validation(format!("{section}: {other}")),
        };
        self.synth.validate().map_err(|e| field("synth", e))?;
        self.segmentation
            .validate()
            .map_err(|e| field("segmentation", e))?;
        self.campaign.validate().map_err(|e| field("campaign", e))?;
        self.crowd
            .model()
            .validate()
            .map_err(|e| field("crowd", e))?;
        self.texture.validate().map_err(|e| field("texture", e))?;
        self.learner.validate().map_err(|e| field("learner", e))?;
        self.curriculum
            .validate()
            .map_err(|e| field("curriculum", e))?;
        Ok(())
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            segmentation: self.segmentation,
            campaign: self.campaign,
            crowd: self.crowd.model(),
            aggregate: AggregateOptions {
                include_undefined: self.crowd.include_undefined,
            },
            texture: self.texture,
            learner: self.learner,
            curriculum: self.curriculum.clone(),
        }
    }

    /// SHA-256 of the effective settings. The work directory is left out so
    /// the same experiment run in two places yields identical files.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths.workdir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        let mut hex = String::with_capacity(64);
        for b in Sha256::digest(text.as_bytes()) {
            write!(hex, "{b:02x}").expect("writing to a String");
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults_match_code() {
        assert_eq!(
            PipelineConfig::parse(DEFAULT_CONFIG).unwrap(),
            PipelineConfig::default()
        );
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = PipelineConfig::parse("[crowd]\nalpah = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
    }

    #[test]
    fn validation_names_section_and_field() {
        let mut c = PipelineConfig::default();
        c.learner.c = -1.0;
        assert_eq!(
            c.validate().unwrap_err().to_string(),
            "learner.c: must be positive"
        );
        let mut c = PipelineConfig::default();
        c.crowd.volunteers = 3;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .starts_with("crowd.volunteers"));
    }

    #[test]
    fn digest_ignores_workdir_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.workdir = PathBuf::from("/elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.override_seed(9);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "[paths]\nworkdir = \"out\"\nmask = \"m.png\"\n").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.workdir, dir.path().join("out"));
        assert_eq!(c.paths.mask, Some(dir.path().join("m.png")));
    }
}
