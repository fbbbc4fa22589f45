//! Per-segment gray-level co-occurrence matrices and 13 Haralick descriptors.
//!
//! A segment's texture channel is min-max stretched inside the segment and
//! quantized to `G` levels. For each of the four directions a symmetric GLCM
//! at distance 1 is accumulated over pixel pairs whose both ends lie in the
//! segment, and the descriptors below are computed from it. The feature
//! vector is direction-major: `[0°: f1..f13, 45°: f1..f13, 90°: .., 135°: ..]`.
//!
//! Levels are indexed from 0, so the sum distribution `p_{x+y}` runs over
//! `0..=2G-2`. Entropies are in bits with `0 log 0 = 0`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crowd::Class;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::segmentation::SegmentMap;

pub const DESCRIPTORS: usize = 13;
pub const DIRECTIONS: usize = 4;
pub const FEATURE_LEN: usize = DESCRIPTORS * DIRECTIONS;

pub const DESCRIPTOR_NAMES: [&str; DESCRIPTORS] = [
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "information_correlation_1",
    "information_correlation_2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Direction {
    pub const ALL: [Direction; DIRECTIONS] = [
        Direction::Deg0,
        Direction::Deg45,
        Direction::Deg90,
        Direction::Deg135,
    ];

    /// Unit `(dx, dy)` offset with `y` growing downwards.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::Deg0 => (1, 0),
            Direction::Deg45 => (1, -1),
            Direction::Deg90 => (0, -1),
            Direction::Deg135 => (-1, -1),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            Direction::Deg0 => 0,
            Direction::Deg45 => 45,
            Direction::Deg90 => 90,
            Direction::Deg135 => 135,
        }
    }
}

const NO_LEVEL: u16 = u16::MAX;

/// Quantized levels over a segment's bounding box; cells outside the segment
/// carry no level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPatch {
    levels: Grid<u16>,
    gray_levels: usize,
}

impl QuantizedPatch {
    /// Builds a patch directly from per-cell levels, `None` marking cells that
    /// are not part of the segment.
    pub fn from_levels(levels: Grid<Option<u16>>, gray_levels: usize) -> Result<Self> {
        check_levels(gray_levels)?;
        if levels
            .as_slice()
            .iter()
            .any(|l| l.is_some_and(|v| v as usize >= gray_levels))
        {
            return Err(Error::param("levels", "level exceeds gray-level count"));
        }
        Ok(Self {
            levels: levels.map(|l| l.unwrap_or(NO_LEVEL)),
            gray_levels,
        })
    }

    pub fn gray_levels(&self) -> usize {
        self.gray_levels
    }

    pub fn width(&self) -> usize {
        self.levels.width()
    }

    pub fn height(&self) -> usize {
        self.levels.height()
    }

    pub fn level(&self, x: usize, y: usize) -> Option<u16> {
        let v = *self.levels.get(x, y);
        (v != NO_LEVEL).then_some(v)
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.gray_levels];
        for &v in self.levels.as_slice() {
            if v != NO_LEVEL {
                h[v as usize] += 1;
            }
        }
        h
    }
}

fn check_levels(gray_levels: usize) -> Result<()> {
    if !(2..NO_LEVEL as usize).contains(&gray_levels) {
        return Err(Error::param(
            "gray_levels",
            format!("must lie in [2, {NO_LEVEL}), got {gray_levels}"),
        ));
    }
    Ok(())
}

/// Quantizes the segment's pixels (indices into `channel`) to `gray_levels`
/// after a min-max stretch within the segment. A constant segment maps to
/// level 0.
pub fn quantize(
    channel: &Grid<f64>,
    pixels: &[usize],
    gray_levels: usize,
) -> Result<QuantizedPatch> {
    check_levels(gray_levels)?;
    if pixels.is_empty() {
        return Err(Error::EmptySegment);
    }
    let w = channel.width();
    let values = channel.as_slice();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in pixels {
        let (x, y) = (i % w, i / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
        lo = lo.min(values[i]);
        hi = hi.max(values[i]);
    }
    let range = hi - lo;
    let g = gray_levels as f64;
    let mut levels = Grid::filled(x1 - x0 + 1, y1 - y0 + 1, NO_LEVEL);
    for &i in pixels {
        let level = if range > 0.0 {
            (((values[i] - lo) / range * g).floor() as usize).min(gray_levels - 1)
        } else {
            0
        };
        *levels.get_mut(i % w - x0, i / w - y0) = level as u16;
    }
    Ok(QuantizedPatch {
        levels,
        gray_levels,
    })
}

/// Symmetric co-occurrence matrix. `counts` holds raw symmetric increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    direction: Direction,
    distance: usize,
    counts: Vec<u64>,
    total: u64,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    /// No pixel pair existed in this direction.
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Normalized matrix, row-major; all zeros when empty.
    pub fn probabilities(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

pub fn glcm(patch: &QuantizedPatch, direction: Direction, distance: usize) -> Result<Glcm> {
    if distance == 0 {
        return Err(Error::param("distance", "must be at least 1"));
    }
    let g = patch.gray_levels;
    let (w, h) = (patch.width() as isize, patch.height() as isize);
    let (dx, dy) = direction.offset();
    let (dx, dy) = (dx * distance as isize, dy * distance as isize);
    let mut counts = vec![0u64; g * g];
    let mut total = 0;
    for y in 0..h {
        for x in 0..w {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let a = *patch.levels.get(x as usize, y as usize);
            let b = *patch.levels.get(nx as usize, ny as usize);
            if a == NO_LEVEL || b == NO_LEVEL {
                continue;
            }
            let (a, b) = (a as usize, b as usize);
            counts[a * g + b] += 1;
            counts[b * g + a] += 1;
            total += 2;
        }
    }
    Ok(Glcm {
        levels: g,
        direction,
        distance,
        counts,
        total,
    })
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// The 13 Haralick descriptors, in [`DESCRIPTOR_NAMES`] order. An empty GLCM
/// yields all zeros.
pub fn haralick13(glcm: &Glcm) -> [f64; DESCRIPTORS] {
    if glcm.is_empty() {
        return [0.0; DESCRIPTORS];
    }
    let g = glcm.levels;
    let p = glcm.probabilities();

    let mut px = vec![0.0; g];
    let mut py = vec![0.0; g];
    let mut p_sum = vec![0.0; 2 * g - 1];
    let mut p_diff = vec![0.0; g];
    let mut asm = 0.0;
    let mut idm = 0.0;
    let mut hxy = 0.0;
    let mut sum_ij = 0.0;
    for i in 0..g {
        for j in 0..g {
            let v = p[i * g + j];
            if v == 0.0 {
                continue;
            }
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            p_diff[i.abs_diff(j)] += v;
            asm += v * v;
            idm += v / (1.0 + ((i as f64) - (j as f64)).powi(2));
            hxy -= plogp(v);
            sum_ij += (i * j) as f64 * v;
        }
    }

    let mu_x: f64 = px.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
    let mu_y: f64 = py.iter().enumerate().map(|(j, v)| j as f64 * v).sum();
    let var_x: f64 = px
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 - mu_x).powi(2) * v)
        .sum();
    let var_y: f64 = py
        .iter()
        .enumerate()
        .map(|(j, v)| (j as f64 - mu_y).powi(2) * v)
        .sum();
    let sd = (var_x * var_y).sqrt();
    let correlation = if sd > 0.0 {
        (sum_ij - mu_x * mu_y) / sd
    } else {
        0.0
    };

    let contrast: f64 = p_diff
        .iter()
        .enumerate()
        .map(|(n, v)| (n * n) as f64 * v)
        .sum();
    let sum_average: f64 = p_sum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let sum_variance: f64 = p_sum
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - sum_average).powi(2) * v)
        .sum();
    let sum_entropy: f64 = -p_sum.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_mean: f64 = p_diff.iter().enumerate().map(|(n, v)| n as f64 * v).sum();
    let diff_variance: f64 = p_diff
        .iter()
        .enumerate()
        .map(|(n, v)| (n as f64 - diff_mean).powi(2) * v)
        .sum();
    let diff_entropy: f64 = -p_diff.iter().map(|&v| plogp(v)).sum::<f64>();

    let hx: f64 = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..g {
        if px[i] == 0.0 {
            continue;
        }
        for j in 0..g {
            if py[j] == 0.0 {
                continue;
            }
            let q = px[i] * py[j];
            let lq = q.log2();
            hxy1 -= p[i * g + j] * lq;
            hxy2 -= q * lq;
        }
    }
    let h_max = hx.max(hy);
    let imc1 = if h_max > 0.0 {
        (hxy - hxy1) / h_max
    } else {
        0.0
    };
    // 2^(-2 dH) in bits equals exp(-2 dH) in nats.
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp2())
        .max(0.0)
        .sqrt();

    [
        asm,
        contrast,
        correlation,
        var_x,
        idm,
        sum_average,
        sum_variance,
        sum_entropy,
        hxy,
        diff_variance,
        diff_entropy,
        imc1,
        imc2,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    pub gray_levels: usize,
    pub distance: usize,
    /// Append, per descriptor, the mean and the range across the four
    /// directions after the directional block.
    pub append_aggregates: bool,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            gray_levels: 32,
            distance: 1,
            append_aggregates: false,
        }
    }
}

impl TextureConfig {
    pub fn feature_len(&self) -> usize {
        if self.append_aggregates {
            FEATURE_LEN + 2 * DESCRIPTORS
        } else {
            FEATURE_LEN
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_levels(self.gray_levels)?;
        if self.distance == 0 {
            return Err(Error::param("distance", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The 13 descriptors of one direction.
    pub fn block(&self, direction: Direction) -> &[f64] {
        let d = Direction::ALL.iter().position(|&x| x == direction).unwrap();
        &self.0[d * DESCRIPTORS..(d + 1) * DESCRIPTORS]
    }
}

pub fn features_for_segment(
    channel: &Grid<f64>,
    pixels: &[usize],
    gray_levels: usize,
) -> Result<FeatureVector> {
    features_with(
        channel,
        pixels,
        &TextureConfig {
            gray_levels,
            ..Default::default()
        },
    )
}

pub fn features_with(
    channel: &Grid<f64>,
    pixels: &[usize],
    config: &TextureConfig,
) -> Result<FeatureVector> {
    config.validate()?;
    let patch = quantize(channel, pixels, config.gray_levels)?;
    let mut values = Vec::with_capacity(config.feature_len());
    for direction in Direction::ALL {
        let m = glcm(&patch, direction, config.distance)?;
        values.extend_from_slice(&haralick13(&m));
    }
    if config.append_aggregates {
        let block = |d: usize, f: usize| values[d * DESCRIPTORS + f];
        let mut extra = Vec::with_capacity(2 * DESCRIPTORS);
        for f in 0..DESCRIPTORS {
            let vals: Vec<f64> = (0..DIRECTIONS).map(|d| block(d, f)).collect();
            extra.push(vals.iter().sum::<f64>() / DIRECTIONS as f64);
        }
        for f in 0..DESCRIPTORS {
            let vals: Vec<f64> = (0..DIRECTIONS).map(|d| block(d, f)).collect();
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            extra.push(max - min);
        }
        values.extend(extra);
    }
    Ok(FeatureVector(values))
}

/// Feature vectors for every segment of `map`, indexed by segment id.
/// Segments are processed in parallel with no shared accumulators.
pub fn extract_features(
    channel: &Grid<f64>,
    map: &SegmentMap,
    config: &TextureConfig,
) -> Result<Vec<FeatureVector>> {
    if channel.dims() != map.labels().dims() {
        return Err(Error::DimensionMismatch {
            expected: map.labels().dims(),
            found: channel.dims(),
            context: "texture channel vs segment map".into(),
        });
    }
    map.segment_pixels()
        .par_iter()
        .map(|pixels| features_with(channel, pixels, config))
        .collect()
}

/// One row of the features file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub segment_id: u32,
    /// Crowd label: `forest`, `nonforest`, `tie`, or `unlabeled` for segments
    /// outside the campaign.
    pub class: String,
    pub entropy: Option<f64>,
    /// Pixel-majority class from the ground-truth mask.
    pub truth: Class,
    pub features: FeatureVector,
}

impl FeatureRow {
    /// Crowd class when the row is usable for training.
    pub fn crowd_class(&self) -> Option<Class> {
        self.class.parse().ok()
    }
}

pub fn feature_column(i: usize) -> String {
    format!("f_{:04}", i + 1)
}

pub fn write_features(
    sink: &mut dyn Write,
    rows: &[FeatureRow],
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(sink, "# {c}")?;
    }
    let width = rows.first().map_or(FEATURE_LEN, |r| r.features.len());
    let mut header = String::from("segment_id,class,entropy,truth");
    for i in 0..width {
        header.push(',');
        header.push_str(&feature_column(i));
    }
    writeln!(sink, "{header}")?;
    for r in rows {
        if r.features.len() != width {
            return Err(Error::FeatureDimension {
                expected: width,
                found: r.features.len(),
            });
        }
        let mut line = format!(
            "{},{},{},{}",
            r.segment_id,
            r.class,
            r.entropy.map(|e| e.to_string()).unwrap_or_default(),
            r.truth
        );
        for v in r.features.values() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

pub fn read_features<R: Read>(source: R) -> Result<Vec<FeatureRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let fixed = ["segment_id", "class", "entropy", "truth"];
    if header.len() < fixed.len() || header.iter().take(4).ne(fixed.iter().copied()) {
        return Err(Error::Csv(format!(
            "features header must start with {}",
            fixed.join(",")
        )));
    }
    for (i, name) in header.iter().skip(4).enumerate() {
        if name != feature_column(i) {
            return Err(Error::Csv(format!("unexpected feature column `{name}`")));
        }
    }
    let width = header.len() - 4;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Csv(format!("line {line}: bad {what}"));
        let segment_id = record[0].parse().map_err(|_| bad("segment_id"))?;
        let entropy = match &record[2] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("entropy"))?),
        };
        let truth = record[3].parse()?;
        let features = (0..width)
            .map(|i| {
                record[4 + i]
                    .parse::<f64>()
                    .map_err(|_| bad("feature value"))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            segment_id,
            class: record[1].to_string(),
            entropy,
            truth,
            features: FeatureVector(features),
        });
    }
    Ok(rows)
}
