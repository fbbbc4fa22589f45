use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use forestcurve_core::crowd::Class;
use forestcurve_core::learner::{self, TrainConfig};
use forestcurve_core::pipeline::{self, SegmentationConfig};
use forestcurve_core::raster;
use forestcurve_core::segmentation;
use forestcurve_core::synth::{self, SceneSpec};
use forestcurve_core::texture::{self, Direction, TextureConfig};

fn scene(
    side: usize,
) -> (
    forestcurve_core::MultibandRaster,
    forestcurve_core::GroundTruthMask,
) {
    let spec = SceneSpec {
        width: side,
        height: side,
        ..Default::default()
    };
    synth::generate_scene(&spec).expect("default scene is valid")
}

fn segmentation(c: &mut Criterion) {
    let mut group = c.benchmark_group("segmentation");
    group.sample_size(10);
    for side in [128, 256] {
        let (raster, mask) = scene(side);
        let lab = raster::to_cielab(&raster::compose(&raster, raster::DEFAULT_TRIPLE).unwrap());
        let k = side * side / 240;
        group.bench_with_input(BenchmarkId::new("slic", side), &lab, |b, lab| {
            b.iter(|| segmentation::slic(black_box(lab), k, 10.0, 10).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mask_slic", side), &lab, |b, lab| {
            b.iter(|| segmentation::mask_slic(black_box(lab), &mask, k, 10.0, 10).unwrap())
        });
    }
    group.finish();
}

fn texture(c: &mut Criterion) {
    let (raster, mask) = scene(192);
    let (composite, map) = pipeline::segment_scene(
        &raster,
        &mask,
        &SegmentationConfig {
            k: 150,
            ..Default::default()
        },
    )
    .unwrap();
    let luminance = composite.luminance();
    let pixels = map.segment_pixels();
    let largest = pixels.iter().max_by_key(|p| p.len()).unwrap();
    let patch = texture::quantize(&luminance, largest, 32).unwrap();

    let mut group = c.benchmark_group("texture");
    group.bench_function("glcm_32_levels", |b| {
        b.iter(|| texture::glcm(black_box(&patch), Direction::Deg45, 1).unwrap())
    });
    let m = texture::glcm(&patch, Direction::Deg45, 1).unwrap();
    group.bench_function("haralick13", |b| {
        b.iter(|| texture::haralick13(black_box(&m)))
    });
    group.sample_size(10);
    group.bench_function("extract_features_150_segments", |b| {
        b.iter(|| {
            texture::extract_features(black_box(&luminance), &map, &TextureConfig::default())
                .unwrap()
        })
    });
    group.finish();
}

fn learner(c: &mut Criterion) {
    // Deterministic two-class data in 52 dimensions, shifted apart on the
    // first few coordinates.
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut group = c.benchmark_group("learner");
    for n in [18, 180] {
        let y: Vec<Class> = (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    Class::Forest
                } else {
                    Class::NonForest
                }
            })
            .collect();
        let x: Vec<Vec<f64>> = y
            .iter()
            .map(|c| {
                (0..52)
                    .map(|j| next() + if j < 4 { 0.3 * c.sign() } else { 0.0 })
                    .collect()
            })
            .collect();
        group.bench_with_input(BenchmarkId::new("train", n), &x, |b, x| {
            b.iter(|| learner::train(black_box(x), &y, &TrainConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, segmentation, texture, learner);
criterion_main!(benches);
