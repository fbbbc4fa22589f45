use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use forestcurve_core::crowd::{self, HorRecord, SegmentLabel};
use forestcurve_core::curriculum::{self, LearningCurve};
use forestcurve_core::fsio::write_atomic;
use forestcurve_core::learner::{self, ModelFile};
use forestcurve_core::pipeline::{self, PipelineParams};
use forestcurve_core::raster::{self, GroundTruthMask, MultibandRaster};
use forestcurve_core::segmentation::{self, SegmentMap};
use forestcurve_core::synth;
use forestcurve_core::texture::{self, FeatureRow};

use crate::config::PipelineConfig;
use crate::failure::Failure;
use crate::svg;

/// Artifact names inside the work directory.
pub mod artifact {
    pub const SCENE_DIR: &str = "scene";
    pub const MANIFEST: &str = "scene/manifest.toml";
    pub const MASK: &str = "scene/mask.png";
    pub const SEGMENTS_PNG: &str = "segments.png";
    pub const SEGMENTS_TOML: &str = "segments.toml";
    pub const CAMPAIGN: &str = "campaign.csv";
    pub const VOTES: &str = "votes.csv";
    pub const LABELS: &str = "labels.csv";
    pub const FEATURES: &str = "features.csv";
    pub const CURVES: &str = "curves.csv";
    pub const SUMMARY: &str = "summary.csv";
    pub const MODEL: &str = "model.toml";
    pub const REPORT_DIR: &str = "report";
    pub const HOR_SVG: &str = "report/hor_entropy.svg";
    pub const CURVES_SVG: &str = "report/learning_curves.svg";
    pub const LOCK: &str = ".forestcurve.lock";
}

/// Exclusive claim on a work directory, released on drop.
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(workdir)
            .map_err(|e| Failure::Internal(format!("creating {}: {e}", workdir.display())))?;
        let path = workdir.join(artifact::LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Failure::Validation(format!(
                "{} exists: another forestcurve run is using this work directory (remove the file if that run died)",
                path.display()
            ))),
            Err(e) => Err(Failure::Internal(format!("creating {}: {e}", path.display()))),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A configured run bound to one work directory.
pub struct Stages {
    config: PipelineConfig,
    params: PipelineParams,
    header: String,
}

impl Stages {
    pub fn new(config: PipelineConfig) -> Result<Self, Failure> {
        config.validate()?;
        let header = format!(
            "forestcurve {} config={}",
            env!("CARGO_PKG_VERSION"),
            config.digest()
        );
        Ok(Self {
            params: config.params(),
            config,
            header,
        })
    }

    pub fn workdir(&self) -> &Path {
        &self.config.paths.workdir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.workdir().join(name)
    }

    fn comment(&self) -> Option<&str> {
        Some(&self.header)
    }

    /// The path of `name`, or a failure naming the stage that writes it.
    fn input(&self, name: &str, producer: &'static str) -> Result<PathBuf, Failure> {
        require(self.path(name), Some(producer))
    }

    fn raster_path(&self) -> Result<PathBuf, Failure> {
        match &self.config.paths.raster {
            Some(p) => require(p.clone(), None),
            None => self.input(artifact::MANIFEST, "synth"),
        }
    }

    fn mask_path(&self) -> Result<PathBuf, Failure> {
        match &self.config.paths.mask {
            Some(p) => require(p.clone(), None),
            None => self.input(artifact::MASK, "synth"),
        }
    }

    fn load_scene(&self) -> Result<(MultibandRaster, GroundTruthMask), Failure> {
        let raster = raster::load_raster(&self.raster_path()?)?;
        let mask = raster::load_mask(&self.mask_path()?)?;
        Ok((raster, mask))
    }

    fn load_segments(&self) -> Result<SegmentMap, Failure> {
        let png = self.input(artifact::SEGMENTS_PNG, "segment")?;
        let sidecar = self.input(artifact::SEGMENTS_TOML, "segment")?;
        Ok(segmentation::read_segment_map(&png, &sidecar)?)
    }

    pub fn synth(&self) -> Result<String, Failure> {
        let (raster, mask) = synth::generate_scene(&self.config.synth)?;
        let dir = self.path(artifact::SCENE_DIR);
        synth::write_scene(&raster, &mask, &dir, self.comment())?;
        Ok(format!(
            "synth: {}x{} scene, {} bands -> {}",
            raster.width(),
            raster.height(),
            raster.band_count(),
            dir.display()
        ))
    }

    pub fn segment(&self) -> Result<String, Failure> {
        let (raster, mask) = self.load_scene()?;
        let (_, map) = pipeline::segment_scene(&raster, &mask, &self.params.segmentation)?;
        let png = self.path(artifact::SEGMENTS_PNG);
        segmentation::write_segment_map(
            &map,
            &png,
            &self.path(artifact::SEGMENTS_TOML),
            self.comment(),
        )?;
        Ok(format!(
            "segment: {} segments -> {}",
            map.segment_count(),
            png.display()
        ))
    }

    pub fn crowd(&self) -> Result<String, Failure> {
        let mask = raster::load_mask(&self.mask_path()?)?;
        let map = self.load_segments()?;
        let hors = pipeline::segment_hors(&map, &mask)?;
        let (tasks, votes) = match &self.config.crowd.votes {
            Some(path) => {
                let votes = crowd::read_votes(open(&require(path.clone(), None)?)?)?;
                let ids: BTreeSet<u32> = votes.iter().map(|v| v.segment_id).collect();
                if let Some(bad) = ids
                    .iter()
                    .find(|id| hors.binary_search_by_key(id, |r| &r.segment_id).is_err())
                {
                    return Err(Failure::Validation(format!(
                        "{}: segment {bad} is not a labelled segment of {}",
                        path.display(),
                        artifact::SEGMENTS_PNG
                    )));
                }
                (ids.into_iter().collect::<Vec<u32>>(), votes)
            }
            None => {
                let campaign = pipeline::run_campaign(&hors, &self.params)?;
                (
                    campaign.tasks.iter().map(|t| t.segment_id).collect(),
                    campaign.votes,
                )
            }
        };
        let labels = crowd::aggregate(&votes, self.params.aggregate);
        let c = self.comment();
        write_atomic(&self.path(artifact::CAMPAIGN), |w| {
            crowd::write_campaign(w, &hors, &tasks, c)
        })?;
        write_atomic(&self.path(artifact::VOTES), |w| {
            crowd::write_votes(w, &votes, c)
        })?;
        write_atomic(&self.path(artifact::LABELS), |w| {
            crowd::write_labels(w, &labels, c)
        })?;
        let ties = labels.iter().filter(|l| l.class().is_none()).count();
        Ok(format!(
            "crowd: {} tasks, {} votes, {} ties -> {}",
            tasks.len(),
            votes.len(),
            ties,
            self.path(artifact::LABELS).display()
        ))
    }

    fn load_campaign(&self) -> Result<(Vec<HorRecord>, Vec<SegmentLabel>), Failure> {
        let (hors, _) = crowd::read_campaign(open(&self.input(artifact::CAMPAIGN, "crowd")?)?)?;
        let labels = crowd::read_labels(open(&self.input(artifact::LABELS, "crowd")?)?)?;
        Ok((hors, labels))
    }

    pub fn features(&self) -> Result<String, Failure> {
        let raster = raster::load_raster(&self.raster_path()?)?;
        let map = self.load_segments()?;
        let (hors, labels) = self.load_campaign()?;
        let composite = raster::compose(&raster, self.params.segmentation.bands)?;
        let rows = pipeline::feature_table(&composite, &map, &hors, &labels, &self.params.texture)?;
        let path = self.path(artifact::FEATURES);
        write_atomic(&path, |w| texture::write_features(w, &rows, self.comment()))?;
        Ok(format!(
            "features: {} rows x {} values -> {}",
            rows.len(),
            self.params.texture.feature_len(),
            path.display()
        ))
    }

    fn load_features(&self) -> Result<Vec<FeatureRow>, Failure> {
        Ok(texture::read_features(open(
            &self.input(artifact::FEATURES, "features")?,
        )?)?)
    }

    pub fn curve(&self) -> Result<String, Failure> {
        let rows = self.load_features()?;
        let pool = pipeline::training_pool(&rows);
        let test = pipeline::test_set(&rows);
        let curves = pipeline::run_curves(&pool, &test, &self.params)?;
        let eps = self.params.curriculum.epsilon;
        let c = self.comment();
        write_atomic(&self.path(artifact::CURVES), |w| {
            curriculum::write_curves(w, &curves, c)
        })?;
        write_atomic(&self.path(artifact::SUMMARY), |w| {
            curriculum::write_summary(w, &curves, eps, c)
        })?;

        let x: Vec<Vec<f64>> = pool.iter().map(|s| s.features.clone()).collect();
        let y: Vec<_> = pool.iter().map(|s| s.class).collect();
        let ids: Vec<u32> = pool.iter().map(|s| s.segment_id).collect();
        let standardizer = learner::fit_standardizer(&x)?;
        let model = learner::train(&standardizer.apply(&x)?, &y, &self.params.learner)?;
        let file = ModelFile::new(&model, &standardizer, &ids);
        write_atomic(&self.path(artifact::MODEL), |w| file.write(w, c))?;

        let mut out = format!("curve: pool {}, test {}\n", pool.len(), test.len());
        out.push_str(&summary_table(&curves, eps));
        Ok(out)
    }

    pub fn report(&self) -> Result<String, Failure> {
        let (hors, labels) = self.load_campaign()?;
        let rows = curriculum::read_curve_rows(open(&self.input(artifact::CURVES, "curve")?)?)?;
        let curves = curriculum::curves_from_rows(&rows);
        fs::create_dir_all(self.path(artifact::REPORT_DIR))
            .map_err(|e| Failure::Internal(format!("creating report directory: {e}")))?;
        let scatter = svg::hor_entropy(&hors, &labels, &self.header);
        let lines = svg::learning_curves(&curves, &self.header);
        for (name, body) in [(artifact::HOR_SVG, scatter), (artifact::CURVES_SVG, lines)] {
            write_atomic(&self.path(name), |w| Ok(w.write_all(body.as_bytes())?))?;
        }
        Ok(format!(
            "report: -> {}",
            self.path(artifact::REPORT_DIR).display()
        ))
    }

    /// Every stage in order. The scene is synthesized only when no raster
    /// path is configured.
    pub fn run(&self) -> Result<String, Failure> {
        let mut log = Vec::new();
        if self.config.paths.raster.is_none() {
            log.push(self.synth()?);
        }
        log.push(self.segment()?);
        log.push(self.crowd()?);
        log.push(self.features()?);
        log.push(self.curve()?);
        log.push(self.report()?);
        Ok(log.join("\n"))
    }
}

fn require(path: PathBuf, producer: Option<&'static str>) -> Result<PathBuf, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::Missing { path, producer })
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Failure::Missing {
                path: path.to_path_buf(),
                producer: None,
            },
            _ => Failure::Internal(format!("opening {}: {e}", path.display())),
        })
}

fn summary_table(curves: &[LearningCurve], eps: f64) -> String {
    let mut out = format!(
        "{:<12} {:>12} {:>10}\n",
        "strategy", "converges@", "BA(1.0)"
    );
    for curve in curves {
        let conv = curve
            .convergence_fraction(eps)
            .map_or_else(|| "-".to_string(), |f| f.to_string());
        let last = curve
            .final_accuracy()
            .map_or_else(|| "-".to_string(), |b| format!("{b:.4}"));
        out.push_str(&format!(
            "{:<12} {conv:>12} {last:>10}\n",
            curve.strategy.kind.as_str()
        ));
    }
    out.pop();
    out
}
