//! Multi-band rasters, ground-truth masks, three-band composites and CIELAB.
//!
//! A raster is described on disk by a TOML manifest that maps band ids to
//! single-band grayscale PNGs (8- or 16-bit) relative to the manifest, plus the
//! divisor that turns stored counts into reflectance:
//!
//! ```toml
//! scale = 10000
//!
//! [bands]
//! B2 = "B2.png"
//! B3 = "B3.png"
//! B4 = "B4.png"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::grid::Grid;
use crate::png_io;

/// Default divisor from stored counts to surface reflectance.
pub const DEFAULT_SCALE: f64 = 10_000.0;

/// The composition used for segmentation: red, green, blue.
pub const DEFAULT_TRIPLE: [BandId; 3] = [BandId::B4, BandId::B3, BandId::B2];

/// Sentinel-2 MSI band identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B8A,
    B9,
    B10,
    B11,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 13] = [
        BandId::B1,
        BandId::B2,
        BandId::B3,
        BandId::B4,
        BandId::B5,
        BandId::B6,
        BandId::B7,
        BandId::B8,
        BandId::B8A,
        BandId::B9,
        BandId::B10,
        BandId::B11,
        BandId::B12,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BandId::B1 => "B1",
            BandId::B2 => "B2",
            BandId::B3 => "B3",
            BandId::B4 => "B4",
            BandId::B5 => "B5",
            BandId::B6 => "B6",
            BandId::B7 => "B7",
            BandId::B8 => "B8",
            BandId::B8A => "B8A",
            BandId::B9 => "B9",
            BandId::B10 => "B10",
            BandId::B11 => "B11",
            BandId::B12 => "B12",
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BandId::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownBand(s.to_string()))
    }
}

/// Named 16-bit bands over a common pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultibandRaster {
    width: usize,
    height: usize,
    bands: BTreeMap<BandId, Grid<u16>>,
    scale: f64,
}

impl MultibandRaster {
    pub fn new(width: usize, height: usize, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param(
                "scale",
                format!("must be positive, got {scale}"),
            ));
        }
        Ok(Self {
            width,
            height,
            bands: BTreeMap::new(),
            scale,
        })
    }

    /// Adds or replaces a band. Fails when its dimensions differ from the raster's.
    pub fn insert_band(&mut self, id: BandId, grid: Grid<u16>) -> Result<()> {
        if grid.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found: grid.dims(),
                context: format!("band {id}"),
            });
        }
        self.bands.insert(id, grid);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn band(&self, id: BandId) -> Option<&Grid<u16>> {
        self.bands.get(&id)
    }

    pub fn band_ids(&self) -> impl Iterator<Item = BandId> + '_ {
        self.bands.keys().copied()
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    #[serde(default = "default_scale")]
    scale: f64,
    bands: BTreeMap<String, String>,
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}

/// Loads every band listed in the manifest at `manifest_path`.
pub fn load_raster(manifest_path: &Path) -> Result<MultibandRaster> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.bands.is_empty() {
        return Err(Error::Manifest(format!(
            "{}: no bands listed",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut loaded = Vec::with_capacity(manifest.bands.len());
    for (name, rel) in &manifest.bands {
        let id: BandId = name.parse()?;
        let png = png_io::read_gray(&base.join(rel))?;
        loaded.push((id, png.grid));
    }
    let (w, h) = loaded[0].1.dims();
    let mut raster = MultibandRaster::new(w, h, manifest.scale)?;
    for (id, grid) in loaded {
        raster.insert_band(id, grid)?;
    }
    Ok(raster)
}

/// Writes one 16-bit PNG per band plus `manifest.toml` into `dir`.
/// Returns the manifest path.
pub fn write_raster(
    raster: &MultibandRaster,
    dir: &Path,
    comment: Option<&str>,
) -> Result<std::path::PathBuf> {
    let mut bands = BTreeMap::new();
    for (id, grid) in &raster.bands {
        let file = format!("{id}.png");
        write_atomic(&dir.join(&file), |w| {
            png_io::encode_gray16(w, grid, comment)
        })?;
        bands.insert(id.to_string(), file);
    }
    let manifest = Manifest {
        scale: raster.scale,
        bands,
    };
    let body = toml::to_string(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    let path = dir.join("manifest.toml");
    write_atomic(&path, |w| {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        w.write_all(body.as_bytes())?;
        Ok(())
    })?;
    Ok(path)
}

/// Per-pixel ground-truth class. `Ignore` pixels lie outside the region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskClass {
    Ignore,
    Forest,
    NonForest,
}

impl MaskClass {
    pub fn code(self) -> u8 {
        match self {
            MaskClass::Ignore => 0,
            MaskClass::Forest => 1,
            MaskClass::NonForest => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MaskClass::Ignore),
            1 => Some(MaskClass::Forest),
            2 => Some(MaskClass::NonForest),
            _ => None,
        }
    }

    #[inline]
    pub fn in_roi(self) -> bool {
        self != MaskClass::Ignore
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    grid: Grid<MaskClass>,
}

impl GroundTruthMask {
    pub fn new(grid: Grid<MaskClass>) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &Grid<MaskClass> {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn class_at(&self, idx: usize) -> MaskClass {
        self.grid.as_slice()[idx]
    }

    pub fn roi(&self) -> Grid<bool> {
        self.grid.map(|c| c.in_roi())
    }

    pub fn roi_pixel_count(&self) -> usize {
        self.grid.as_slice().iter().filter(|c| c.in_roi()).count()
    }

    pub fn count(&self, class: MaskClass) -> usize {
        self.grid.as_slice().iter().filter(|&&c| c == class).count()
    }
}

/// Reads an 8-bit mask PNG with codes 0 (ignore), 1 (forest), 2 (non-forest).
pub fn load_mask(path: &Path) -> Result<GroundTruthMask> {
    let png = png_io::read_gray(path)?;
    if png.bit_depth != 8 {
        return Err(Error::UnsupportedImage(format!(
            "{}: mask must be 8-bit",
            path.display()
        )));
    }
    let w = png.grid.width();
    let mut classes = Vec::with_capacity(png.grid.len());
    for (i, &v) in png.grid.as_slice().iter().enumerate() {
        let code = v as u8;
        let class = MaskClass::from_code(code).ok_or(Error::UnknownMaskCode {
            code,
            x: i % w,
            y: i / w,
        })?;
        classes.push(class);
    }
    let grid = Grid::from_vec(w, png.grid.height(), classes).expect("dimensions preserved");
    Ok(GroundTruthMask::new(grid))
}

pub fn write_mask(mask: &GroundTruthMask, path: &Path, comment: Option<&str>) -> Result<()> {
    let codes = mask.grid.map(|c| c.code());
    write_atomic(path, |w| png_io::encode_gray8(w, &codes, comment))
}

/// Three reflectance channels in `[0, 1]` taken from an ordered band triple.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeImage {
    pixels: Grid<[f64; 3]>,
    bands: [BandId; 3],
}

impl CompositeImage {
    pub fn new(pixels: Grid<[f64; 3]>, bands: [BandId; 3]) -> Self {
        let pixels = pixels.map(|p| p.map(|c| c.clamp(0.0, 1.0)));
        Self { pixels, bands }
    }

    pub fn pixels(&self) -> &Grid<[f64; 3]> {
        &self.pixels
    }

    pub fn bands(&self) -> [BandId; 3] {
        self.bands
    }

    /// Mean of the three channels per pixel.
    pub fn luminance(&self) -> Grid<f64> {
        self.pixels.map(|p| (p[0] + p[1] + p[2]) / 3.0)
    }
}

pub fn compose(raster: &MultibandRaster, triple: [BandId; 3]) -> Result<CompositeImage> {
    let channels = triple.map(|id| raster.band(id).ok_or(Error::UnknownBand(id.to_string())));
    let [r, g, b] = channels;
    let (r, g, b) = (r?, g?, b?);
    let inv = 1.0 / raster.scale;
    let pixels: Vec<[f64; 3]> = r
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .zip(b.as_slice())
        .map(|((&r, &g), &b)| [r as f64 * inv, g as f64 * inv, b as f64 * inv])
        .collect();
    let grid = Grid::from_vec(raster.width, raster.height, pixels).expect("bands share dimensions");
    Ok(CompositeImage::new(grid, triple))
}

/// Per-pixel `[L, a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pixels: Grid<[f64; 3]>,
}

impl LabImage {
    pub fn new(pixels: Grid<[f64; 3]>) -> Self {
        Self { pixels }
    }

    pub fn pixels(&self) -> &Grid<[f64; 3]> {
        &self.pixels
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }
}

// Linear sRGB -> XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB pixel with channels in `[0, 1]` to CIELAB.
///
/// The reference white is the image of `(1, 1, 1)` under the matrix, so gray
/// inputs land exactly on the neutral axis.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let mut xyz = [0.0; 3];
    for (out, row) in xyz.iter_mut().zip(RGB_TO_XYZ.iter()) {
        let white: f64 = row.iter().sum();
        *out = (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]) / white;
    }
    let [fx, fy, fz] = xyz.map(lab_f);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn to_cielab(image: &CompositeImage) -> LabImage {
    LabImage::new(image.pixels.map(|&p| srgb_to_lab(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn raster_with(bands: &[(BandId, u16)], w: usize, h: usize, scale: f64) -> MultibandRaster {
        let mut r = MultibandRaster::new(w, h, scale).unwrap();
        for &(id, v) in bands {
            r.insert_band(id, Grid::filled(w, h, v)).unwrap();
        }
        r
    }

    #[test]
    fn compose_full_scale_and_zero() {
        let r = raster_with(
            &[(BandId::B4, 65535), (BandId::B3, 0), (BandId::B2, 32768)],
            2,
            2,
            65535.0,
        );
        let c = compose(&r, DEFAULT_TRIPLE).unwrap();
        let p = c.pixels().get(1, 1);
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
        assert_abs_diff_eq!(p[2], 32768.0 / 65535.0);
        assert_eq!(c.bands(), DEFAULT_TRIPLE);
    }

    #[test]
    fn compose_clamps_above_scale() {
        let r = raster_with(
            &[(BandId::B4, 20000), (BandId::B3, 5000), (BandId::B2, 0)],
            1,
            1,
            DEFAULT_SCALE,
        );
        let c = compose(&r, DEFAULT_TRIPLE).unwrap();
        assert_eq!(*c.pixels().get(0, 0), [1.0, 0.5, 0.0]);
    }

    #[test]
    fn compose_missing_band_is_error() {
        let r = raster_with(&[(BandId::B4, 1), (BandId::B3, 1)], 1, 1, 1.0);
        assert!(matches!(compose(&r, DEFAULT_TRIPLE), Err(Error::UnknownBand(b)) if b == "B2"));
    }

    #[test]
    fn insert_band_rejects_mismatch() {
        let mut r = MultibandRaster::new(4, 4, 1.0).unwrap();
        let err = r
            .insert_band(BandId::B3, Grid::filled(2, 2, 0))
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn band_id_parsing() {
        assert_eq!("b8a".parse::<BandId>().unwrap(), BandId::B8A);
        assert!(matches!(
            "B13".parse::<BandId>(),
            Err(Error::UnknownBand(_))
        ));
    }

    #[test]
    fn lab_black_and_white() {
        assert_eq!(srgb_to_lab([0.0; 3]), [0.0, 0.0, 0.0]);
        let w = srgb_to_lab([1.0; 3]);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn lab_reference_triple() {
        // Evaluated independently with numpy from the textbook formulas;
        // scikit-image's rgb2lab agrees to 1e-3.
        let lab = srgb_to_lab([0.5, 0.2, 0.1]);
        assert_abs_diff_eq!(lab[0], 31.788_482_408_690_03, epsilon = 1e-9);
        assert_abs_diff_eq!(lab[1], 31.565_631_757_973_083, epsilon = 1e-9);
        assert_abs_diff_eq!(lab[2], 31.816_911_468_281_36, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn gray_is_neutral(v in 0.0f64..=1.0) {
            let lab = srgb_to_lab([v, v, v]);
            prop_assert!(lab[1].abs() <= 1e-6 && lab[2].abs() <= 1e-6);
            prop_assert!((0.0..=100.0).contains(&lab[0]));
        }

        #[test]
        fn lightness_in_range(r in -0.5f64..1.5, g in -0.5f64..1.5, b in -0.5f64..1.5) {
            let lab = srgb_to_lab([r, g, b]);
            prop_assert!((0.0..=100.0).contains(&lab[0]));
        }
    }

    #[test]
    fn mask_code_mapping() {
        assert_eq!(MaskClass::from_code(0), Some(MaskClass::Ignore));
        assert_eq!(MaskClass::from_code(1), Some(MaskClass::Forest));
        assert_eq!(MaskClass::from_code(2), Some(MaskClass::NonForest));
        assert_eq!(MaskClass::from_code(3), None);
    }
}
