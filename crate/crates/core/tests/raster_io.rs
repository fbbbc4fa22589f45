use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use forestcurve_core::grid::Grid;
use forestcurve_core::raster::{self, BandId, MaskClass};
use forestcurve_core::synth::{self, SceneSpec};
use forestcurve_core::Error;

fn write_png(path: &Path, w: u32, h: u32, depth: png::BitDepth, data: &[u8]) {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path).unwrap()), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    enc.write_header().unwrap().write_image_data(data).unwrap();
}

fn small_scene() -> (
    forestcurve_core::MultibandRaster,
    forestcurve_core::GroundTruthMask,
) {
    synth::generate_scene(&SceneSpec {
        width: 32,
        height: 24,
        seed: 5,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn seven_band_scene_round_trips() {
    let (raster, mask) = small_scene();
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth::write_scene(&raster, &mask, dir.path(), Some("test")).unwrap();
    let back = raster::load_raster(&manifest).unwrap();
    assert_eq!(back, raster);
    assert_eq!(back.band_count(), 7);
    assert_eq!((back.width(), back.height()), (32, 24));
    assert_eq!(
        raster::load_mask(&dir.path().join("mask.png")).unwrap(),
        mask
    );
}

#[test]
fn band_of_wrong_size_is_rejected() {
    let (raster, mask) = small_scene();
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth::write_scene(&raster, &mask, dir.path(), None).unwrap();
    write_png(
        &dir.path().join("B8.png"),
        10,
        10,
        png::BitDepth::Sixteen,
        &[0u8; 200],
    );
    assert!(matches!(
        raster::load_raster(&manifest),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn missing_band_file_is_reported() {
    let (raster, mask) = small_scene();
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth::write_scene(&raster, &mask, dir.path(), None).unwrap();
    std::fs::remove_file(dir.path().join("B11.png")).unwrap();
    match raster::load_raster(&manifest) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with("B11.png")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_mask_code_names_the_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.png");
    let mut codes = vec![1u8; 12];
    codes[7] = 3;
    write_png(&path, 4, 3, png::BitDepth::Eight, &codes);
    match raster::load_mask(&path) {
        Err(Error::UnknownMaskCode {
            code: 3,
            x: 3,
            y: 1,
        }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_band_name_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.toml");
    std::fs::write(&path, "scale = 10000.0\n[bands]\nB13 = \"x.png\"\n").unwrap();
    assert!(matches!(
        raster::load_raster(&path),
        Err(Error::UnknownBand(_))
    ));
}

#[test]
fn composite_scales_and_clamps() {
    let mut r = forestcurve_core::MultibandRaster::new(2, 1, 10000.0).unwrap();
    r.insert_band(BandId::B4, Grid::from_vec(2, 1, vec![5000, 20000]).unwrap())
        .unwrap();
    r.insert_band(BandId::B3, Grid::from_vec(2, 1, vec![2000, 0]).unwrap())
        .unwrap();
    r.insert_band(BandId::B2, Grid::from_vec(2, 1, vec![1000, 10000]).unwrap())
        .unwrap();
    let c = raster::compose(&r, raster::DEFAULT_TRIPLE).unwrap();
    assert_eq!(*c.pixels().get(0, 0), [0.5, 0.2, 0.1]);
    assert_eq!(*c.pixels().get(1, 0), [1.0, 0.0, 1.0]);
    let lab = raster::to_cielab(&c);
    let [l, a, b] = *lab.pixels().get(0, 0);
    assert!((l - 31.78848240869003).abs() < 1e-9);
    assert!((a - 31.565631757973083).abs() < 1e-9);
    assert!((b - 31.81691146828136).abs() < 1e-9);
    assert!(raster::compose(&r, [BandId::B8, BandId::B3, BandId::B2]).is_err());
}

#[test]
fn ignore_pixels_stay_out_of_roi() {
    let (_, mask) = small_scene();
    let roi = mask.roi();
    for (i, &inside) in roi.as_slice().iter().enumerate() {
        assert_eq!(inside, mask.class_at(i) != MaskClass::Ignore);
    }
    assert_eq!(
        mask.roi_pixel_count(),
        roi.as_slice().iter().filter(|&&v| v).count()
    );
}
