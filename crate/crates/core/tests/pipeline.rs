use forestcurve_core::crowd::CampaignDesign;
use forestcurve_core::curriculum::{self, GridFraction, Sample, Strategy, StrategyKind};
use forestcurve_core::learner::{self, TrainConfig};
use forestcurve_core::pipeline::{self, PipelineParams};
use forestcurve_core::synth::{self, SceneSpec};
use forestcurve_core::Class;

fn scene_rows(
    spec: &SceneSpec,
    params: &PipelineParams,
) -> Vec<forestcurve_core::texture::FeatureRow> {
    let (raster, mask) = synth::generate_scene(spec).unwrap();
    let (composite, map) = pipeline::segment_scene(&raster, &mask, &params.segmentation).unwrap();
    let hors = pipeline::segment_hors(&map, &mask).unwrap();
    pipeline::feature_table(&composite, &map, &hors, &[], &params.texture).unwrap()
}

#[test]
fn true_label_pool_transfers_to_a_held_out_scene() {
    let params = PipelineParams::default();
    let spec = SceneSpec::default();
    let (raster, mask) = synth::generate_scene(&spec).unwrap();
    let (composite, map) = pipeline::segment_scene(&raster, &mask, &params.segmentation).unwrap();
    let hors = pipeline::segment_hors(&map, &mask).unwrap();
    let campaign = pipeline::run_campaign(&hors, &params).unwrap();
    let rows = pipeline::feature_table(&composite, &map, &hors, &[], &params.texture).unwrap();
    let pool: Vec<_> = rows
        .iter()
        .filter(|r| campaign.tasks.iter().any(|t| t.segment_id == r.segment_id))
        .collect();
    assert_eq!(pool.len(), 180);

    let x: Vec<Vec<f64>> = pool.iter().map(|r| r.features.0.clone()).collect();
    let y: Vec<Class> = pool.iter().map(|r| r.truth).collect();
    let scaler = learner::fit_standardizer(&x).unwrap();
    let model = learner::train(&scaler.apply(&x).unwrap(), &y, &TrainConfig::default()).unwrap();

    let held_out = scene_rows(
        &SceneSpec {
            seed: spec.seed + 1000,
            ..spec.clone()
        },
        &params,
    );
    let predictions: Vec<Class> = held_out
        .iter()
        .map(|r| {
            model
                .predict(&scaler.transform(&r.features.0).unwrap())
                .unwrap()
        })
        .collect();
    let truth: Vec<Class> = held_out.iter().map(|r| r.truth).collect();
    let score = curriculum::balanced_accuracy(&predictions, &truth).unwrap();
    println!(
        "held-out balanced accuracy {score:.4} over {} segments",
        truth.len()
    );
    assert!(score >= 0.9, "{score}");
}

fn separable(offset: u32, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let class = if i % 2 == 0 {
                Class::Forest
            } else {
                Class::NonForest
            };
            let s = class.sign();
            let t = i as f64 / n as f64;
            Sample {
                segment_id: offset + i as u32,
                class,
                entropy: t,
                features: vec![3.0 * s + t, -2.0 * s + 0.5 * t, t],
            }
        })
        .collect()
}

#[test]
fn separable_data_scores_perfectly_everywhere() {
    let (pool, test) = (separable(0, 60), separable(1000, 40));
    for kind in StrategyKind::ALL {
        let curve = curriculum::run_curve(
            &pool,
            &test,
            Strategy::standard(kind),
            &TrainConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(curve.points.len(), 20);
        for p in &curve.points {
            assert_eq!(p.balanced_accuracy(), Some(1.0), "{kind} at {}", p.fraction);
        }
    }
}

#[test]
fn overlapping_ids_are_rejected() {
    let pool = separable(0, 20);
    let test = separable(10, 20);
    let r = curriculum::run_curve(
        &pool,
        &test,
        Strategy::standard(StrategyKind::Edges),
        &TrainConfig::default(),
        0,
    );
    assert!(r.is_err());
}

fn small_params() -> PipelineParams {
    let mut p = PipelineParams::default();
    p.segmentation.k = 150;
    p.campaign = CampaignDesign {
        pure: 30,
        mixed: 30,
        ..Default::default()
    };
    p.curriculum.random_repetitions = 3;
    p
}

fn small_spec() -> SceneSpec {
    SceneSpec {
        width: 160,
        height: 160,
        blob_count: 8,
        ..Default::default()
    }
}

#[test]
fn experiment_is_deterministic_and_curves_meet_at_full_pool() {
    let (raster, mask) = synth::generate_scene(&small_spec()).unwrap();
    let params = small_params();
    let a = pipeline::run_experiment(&raster, &mask, &params).unwrap();
    let b = pipeline::run_experiment(&raster, &mask, &params).unwrap();
    assert_eq!(a.curves, b.curves);
    assert_eq!(a.campaign, b.campaign);
    assert_eq!(a.rows, b.rows);

    assert_eq!(a.campaign.tasks.len(), 60);
    let full = GridFraction::new(20).unwrap();
    let finals: Vec<f64> = a
        .curves
        .iter()
        .map(|c| c.point(full).unwrap().balanced_accuracy().unwrap())
        .collect();
    assert!(finals.windows(2).all(|w| w[0] == w[1]), "{finals:?}");
    let pool = pipeline::training_pool(&a.rows);
    for curve in &a.curves {
        for rep in &curve.point(full).unwrap().repetitions {
            assert_eq!(rep.selection.len(), pool.len());
        }
    }
}

#[test]
fn pool_and_test_partition_the_labelled_segments() {
    let (raster, mask) = synth::generate_scene(&small_spec()).unwrap();
    let params = small_params();
    let exp = pipeline::run_experiment(&raster, &mask, &params).unwrap();
    let pool = pipeline::training_pool(&exp.rows);
    let test = pipeline::test_set(&exp.rows);
    let ties = exp
        .campaign
        .labels
        .iter()
        .filter(|l| l.class().is_none())
        .count();
    assert_eq!(pool.len() + ties, exp.campaign.tasks.len());
    assert_eq!(test.len() + exp.campaign.tasks.len(), exp.rows.len());
    assert!(pool
        .iter()
        .all(|s| test.iter().all(|t| t.segment_id != s.segment_id)));
}
