//! Synthetic multi-band scenes with a ground-truth mask.
//!
//! Non-forest regions grow from random seed blobs until the requested share of
//! the image is covered; ignored pixels are carved as random horizontal and
//! vertical strips. Every band is the class mean plus a spatially correlated
//! field and per-pixel noise, mixed per class by `roughness`: forest is rough
//! (mostly per-pixel noise), non-forest smooth (mostly correlated noise).
//! The band statistics are heuristic, loosely shaped after red/NIR behaviour.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::{self, BandId, GroundTruthMask, MaskClass, MultibandRaster};

/// Bands every synthetic scene carries.
pub const SCENE_BANDS: [BandId; 7] = [
    BandId::B1,
    BandId::B2,
    BandId::B3,
    BandId::B4,
    BandId::B8,
    BandId::B11,
    BandId::B12,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassStats {
    /// Mean count per band, in [`SCENE_BANDS`] order.
    pub mean: [f64; 7],
    /// Total noise deviation per band.
    pub std: [f64; 7],
    /// Share of the noise variance that is per-pixel rather than correlated.
    pub roughness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub nonforest_fraction: f64,
    pub blob_count: usize,
    pub forest: ClassStats,
    pub nonforest: ClassStats,
    /// Correlation length of the smooth noise field, in pixels.
    pub grain: usize,
    pub ignore_fraction: f64,
    pub scale: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 384,
            height: 384,
            nonforest_fraction: 0.3,
            blob_count: 30,
            forest: ClassStats {
                mean: [250.0, 220.0, 450.0, 260.0, 3000.0, 1400.0, 600.0],
                std: [40.0, 40.0, 70.0, 50.0, 400.0, 200.0, 100.0],
                roughness: 0.95,
            },
            nonforest: ClassStats {
                mean: [400.0, 450.0, 700.0, 800.0, 2400.0, 2600.0, 1800.0],
                std: [40.0, 40.0, 70.0, 50.0, 400.0, 200.0, 100.0],
                roughness: 0.05,
            },
            grain: 4,
            ignore_fraction: 0.05,
            scale: raster::DEFAULT_SCALE,
            seed: 7,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("width/height", "must be positive"));
        }
        if !(self.nonforest_fraction > 0.0 && self.nonforest_fraction < 1.0) {
            return Err(Error::param("nonforest_fraction", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.ignore_fraction) {
            return Err(Error::param("ignore_fraction", "must lie in [0, 1)"));
        }
        if self.nonforest_fraction + self.ignore_fraction >= 1.0 {
            return Err(Error::param(
                "nonforest_fraction",
                "together with ignore_fraction it leaves no forest",
            ));
        }
        if self.blob_count == 0 {
            return Err(Error::param("blob_count", "must be at least 1"));
        }
        for (name, stats) in [("forest", &self.forest), ("nonforest", &self.nonforest)] {
            if stats.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::param(
                    "std",
                    format!("{name} deviations must be positive"),
                ));
            }
            if !(0.0..=1.0).contains(&stats.roughness) {
                return Err(Error::param(
                    "roughness",
                    format!("{name} roughness must lie in [0, 1]"),
                ));
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::param("scale", "must be positive"));
        }
        Ok(())
    }
}

/// Deterministic scene for `spec`: a raster carrying [`SCENE_BANDS`] and its mask.
pub fn generate_scene(spec: &SceneSpec) -> Result<(MultibandRaster, GroundTruthMask)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut classes = Grid::filled(w, h, MaskClass::Forest);
    carve_strips(&mut classes, spec.ignore_fraction, &mut rng);
    let available = classes.as_slice().iter().filter(|c| c.in_roi()).count();
    let target = (spec.nonforest_fraction * n as f64).round() as usize;
    if target > available {
        return Err(Error::param(
            "nonforest_fraction",
            format!("needs {target} pixels, only {available} outside ignored strips"),
        ));
    }
    grow_blobs(&mut classes, target, spec.blob_count, &mut rng);

    let smooth = correlated_field(w, h, spec.grain, &mut rng);
    let mut raster = MultibandRaster::new(w, h, spec.scale)?;
    for (b, &band) in SCENE_BANDS.iter().enumerate() {
        let mut data = Vec::with_capacity(n);
        for (i, class) in classes.as_slice().iter().enumerate() {
            let value = match class {
                MaskClass::Ignore => {
                    // open water: dark everywhere, faint noise
                    let base = spec.forest.mean[b].min(spec.nonforest.mean[b]) * 0.3;
                    base + 0.2 * spec.forest.std[b] * normal(&mut rng)
                }
                MaskClass::Forest | MaskClass::NonForest => {
                    let stats = if *class == MaskClass::Forest {
                        &spec.forest
                    } else {
                        &spec.nonforest
                    };
                    let rough = stats.roughness.sqrt();
                    let calm = (1.0 - stats.roughness).sqrt();
                    stats.mean[b]
                        + stats.std[b] * (calm * smooth.as_slice()[i] + rough * normal(&mut rng))
                }
            };
            data.push(value.round().clamp(0.0, u16::MAX as f64) as u16);
        }
        raster.insert_band(band, Grid::from_vec(w, h, data).expect("sized"))?;
    }
    Ok((raster, GroundTruthMask::new(classes)))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Adds full-length strips (2-6 px wide) while the ignored share stays within
/// `fraction`.
fn carve_strips(classes: &mut Grid<MaskClass>, fraction: f64, rng: &mut ChaCha8Rng) {
    let (w, h) = classes.dims();
    let budget = (fraction * (w * h) as f64).floor() as usize;
    let mut used = 0;
    for _ in 0..64 {
        let horizontal = rng.random_bool(0.5);
        let thickness = rng.random_range(2..=6usize);
        let span = if horizontal { h } else { w };
        if thickness >= span {
            continue;
        }
        let start = rng.random_range(0..=span - thickness);
        let mut fresh = Vec::new();
        for t in start..start + thickness {
            for u in 0..(if horizontal { w } else { h }) {
                let (x, y) = if horizontal { (u, t) } else { (t, u) };
                if *classes.get(x, y) != MaskClass::Ignore {
                    fresh.push((x, y));
                }
            }
        }
        if used + fresh.len() > budget {
            continue;
        }
        used += fresh.len();
        for (x, y) in fresh {
            *classes.get_mut(x, y) = MaskClass::Ignore;
        }
    }
}

/// Random region growth from `blobs` seeds until `target` forest pixels have
/// turned non-forest.
fn grow_blobs(classes: &mut Grid<MaskClass>, target: usize, blobs: usize, rng: &mut ChaCha8Rng) {
    let n = classes.len();
    let mut frontier: Vec<usize> = Vec::new();
    let mut queued = vec![false; n];
    let mut grown = 0;
    let forest: Vec<usize> = (0..n)
        .filter(|&i| classes.as_slice()[i] == MaskClass::Forest)
        .collect();
    for _ in 0..blobs.min(forest.len()) {
        let i = forest[rng.random_range(0..forest.len())];
        if !queued[i] {
            queued[i] = true;
            frontier.push(i);
        }
    }
    while grown < target {
        if frontier.is_empty() {
            // every blob is enclosed by ignored strips; reseed
            let Some(i) =
                (0..n).find(|&i| classes.as_slice()[i] == MaskClass::Forest && !queued[i])
            else {
                break;
            };
            queued[i] = true;
            frontier.push(i);
        }
        let pick = rng.random_range(0..frontier.len());
        let i = frontier.swap_remove(pick);
        classes.as_mut_slice()[i] = MaskClass::NonForest;
        grown += 1;
        let neighbours: Vec<usize> = classes.neighbours4(i).collect();
        for j in neighbours {
            if !queued[j] && classes.as_slice()[j] == MaskClass::Forest {
                queued[j] = true;
                frontier.push(j);
            }
        }
    }
}

/// Unit-variance noise smoothed by two passes of a separable box blur of
/// radius `grain`.
fn correlated_field(w: usize, h: usize, grain: usize, rng: &mut ChaCha8Rng) -> Grid<f64> {
    let mut field: Vec<f64> = (0..w * h).map(|_| normal(rng)).collect();
    if grain > 0 {
        for _ in 0..2 {
            field = box_blur(&field, w, h, grain, true);
            field = box_blur(&field, w, h, grain, false);
        }
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    Grid::from_vec(w, h, field.into_iter().map(|v| (v - mean) / sd).collect()).expect("sized")
}

fn box_blur(src: &[f64], w: usize, h: usize, r: usize, horizontal: bool) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let (outer, inner) = if horizontal { (h, w) } else { (w, h) };
    let at = |o: usize, i: usize| if horizontal { o * w + i } else { i * w + o };
    for o in 0..outer {
        for i in 0..inner {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(inner - 1);
            let sum: f64 = (lo..=hi).map(|k| src[at(o, k)]).sum();
            out[at(o, i)] = sum / (hi - lo + 1) as f64;
        }
    }
    out
}

/// Writes the raster manifest, band PNGs and `mask.png` into `dir`.
pub fn write_scene(
    raster: &MultibandRaster,
    mask: &GroundTruthMask,
    dir: &Path,
    comment: Option<&str>,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = raster::write_raster(raster, dir, comment)?;
    raster::write_mask(mask, &dir.join("mask.png"), comment)?;
    Ok(manifest)
}
