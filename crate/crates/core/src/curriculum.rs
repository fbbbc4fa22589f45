//! Entropy-ordered training subsets and balanced-accuracy learning curves.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crowd::Class;
use crate::error::{Error, Result};
use crate::learner::{self, TrainConfig};
use crate::stats;

/// Number of points on the fraction grid (5% steps).
pub const GRID_POINTS: usize = 20;

/// Default tolerance for [`convergence_fraction`].
pub const DEFAULT_EPSILON: f64 = 0.01;

/// A fraction on the 5% grid, stored as its step `1..=20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridFraction(u8);

impl GridFraction {
    pub fn new(step: usize) -> Result<Self> {
        if (1..=GRID_POINTS).contains(&step) {
            Ok(Self(step as u8))
        } else {
            Err(Error::param(
                "fraction",
                format!("grid step {step} outside 1..={GRID_POINTS}"),
            ))
        }
    }

    /// Accepts values within 1e-9 of a grid point.
    pub fn from_f64(f: f64) -> Result<Self> {
        let step = (f * GRID_POINTS as f64).round();
        if (step / GRID_POINTS as f64 - f).abs() > 1e-9 || step < 1.0 {
            return Err(Error::param(
                "fraction",
                format!("{f} is not on the 5% grid"),
            ));
        }
        Self::new(step as usize)
    }

    pub fn all() -> impl Iterator<Item = GridFraction> {
        (1..=GRID_POINTS as u8).map(GridFraction)
    }

    pub fn step(self) -> usize {
        self.0 as usize
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / GRID_POINTS as f64
    }

    pub fn is_full(self) -> bool {
        self.step() == GRID_POINTS
    }
}

impl fmt::Display for GridFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Increasing,
    Decreasing,
    Edges,
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Increasing,
        StrategyKind::Decreasing,
        StrategyKind::Edges,
        StrategyKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Increasing => "increasing",
            StrategyKind::Decreasing => "decreasing",
            StrategyKind::Edges => "edges",
            StrategyKind::Random => "random",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::param("strategy", format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub repetitions: usize,
}

impl Strategy {
    pub const RANDOM_REPETITIONS: usize = 10;

    /// One run for ordered strategies, ten for the random baseline.
    pub fn standard(kind: StrategyKind) -> Self {
        let repetitions = if kind == StrategyKind::Random {
            Self::RANDOM_REPETITIONS
        } else {
            1
        };
        Self { kind, repetitions }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::param("repetitions", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-class entropy orderings. Ties fall back to ascending segment id in
/// both directions, so the descending order is not simply the reverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRanking {
    ascending: Vec<u32>,
    descending: Vec<u32>,
}

impl ClassRanking {
    pub fn new(entries: &[(u32, f64)]) -> Self {
        let mut asc = entries.to_vec();
        asc.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut desc = entries.to_vec();
        desc.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self {
            ascending: asc.into_iter().map(|e| e.0).collect(),
            descending: desc.into_iter().map(|e| e.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ascending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ascending.is_empty()
    }

    pub fn ascending(&self) -> &[u32] {
        &self.ascending
    }

    pub fn descending(&self) -> &[u32] {
        &self.descending
    }
}

/// Per-class sizes at `fraction`: both classes get `round(f * N / 2)`, capped
/// at the class size with any shortfall moved to the other class.
pub fn class_quotas(
    fraction: GridFraction,
    n_forest: usize,
    n_nonforest: usize,
) -> Result<(usize, usize)> {
    let total = n_forest + n_nonforest;
    // round(step * total / 40) with halves rounded up, in integers
    let q = (2 * fraction.step() * total + 2 * GRID_POINTS) / (4 * GRID_POINTS);
    if 2 * q > total + 1 {
        return Err(Error::param(
            "fraction",
            format!("quota {q} per class exceeds pool of {total}"),
        ));
    }
    let mut qf = q.min(n_forest);
    let mut qn = q.min(n_nonforest);
    let wanted = (2 * q).min(total);
    if qf + qn < wanted {
        let short = wanted - qf - qn;
        if qf < q {
            qn = (qn + short).min(n_nonforest);
        } else {
            qf = (qf + short).min(n_forest);
        }
    }
    Ok((qf, qn))
}

/// The chosen ids for one class and the other.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub forest: Vec<u32>,
    pub nonforest: Vec<u32>,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.forest.len() + self.nonforest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training subset for one grid point. `seed` only matters for
/// [`StrategyKind::Random`], where it fixes a per-class shuffle whose
/// prefixes are taken, so subsets of one seed are nested across fractions.
pub fn select_subset(
    forest: &ClassRanking,
    nonforest: &ClassRanking,
    fraction: GridFraction,
    kind: StrategyKind,
    seed: u64,
) -> Result<Selection> {
    let (qf, qn) = class_quotas(fraction, forest.len(), nonforest.len())?;
    Ok(Selection {
        forest: pick(forest, qf, kind, seed, 0),
        nonforest: pick(nonforest, qn, kind, seed, 1),
    })
}

fn pick(ranking: &ClassRanking, q: usize, kind: StrategyKind, seed: u64, stream: u64) -> Vec<u32> {
    match kind {
        StrategyKind::Increasing => ranking.ascending[..q].to_vec(),
        StrategyKind::Decreasing => ranking.descending[..q].to_vec(),
        StrategyKind::Edges => {
            let low = q.div_ceil(2);
            let mut chosen = ranking.ascending[..low].to_vec();
            let high: Vec<u32> = ranking
                .descending
                .iter()
                .filter(|id| !chosen.contains(id))
                .take(q - low)
                .copied()
                .collect();
            chosen.extend(high);
            chosen
        }
        StrategyKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let mut order = ranking.ascending.clone();
            order.sort_unstable();
            order.shuffle(&mut rng);
            order.truncate(q);
            order
        }
    }
}

/// Mean of the forest recall and the non-forest recall.
pub fn balanced_accuracy(predictions: &[Class], truth: &[Class]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::param(
            "predictions",
            format!(
                "{} predictions for {} truths",
                predictions.len(),
                truth.len()
            ),
        ));
    }
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&p, &t) in predictions.iter().zip(truth) {
        let k = (t == Class::NonForest) as usize;
        total[k] += 1;
        hit[k] += (p == t) as usize;
    }
    if total[0] == 0 {
        return Err(Error::MissingClass("forest"));
    }
    if total[1] == 0 {
        return Err(Error::MissingClass("nonforest"));
    }
    Ok(0.5 * (hit[0] as f64 / total[0] as f64 + hit[1] as f64 / total[1] as f64))
}

/// A labelled feature vector. Pool samples carry the crowd label and entropy;
/// test samples carry the ground-truth class (their entropy is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub segment_id: u32,
    pub class: Class,
    pub entropy: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub index: usize,
    pub selection: Selection,
    /// `None` when the subset held a single class and no model was trained.
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: GridFraction,
    pub repetitions: Vec<Repetition>,
}

impl CurvePoint {
    fn valid_scores(&self) -> Vec<f64> {
        self.repetitions
            .iter()
            .filter_map(|r| r.balanced_accuracy)
            .collect()
    }

    /// Mean over valid repetitions; `None` if none was valid.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        let scores = self.valid_scores();
        (!scores.is_empty()).then(|| stats::mean(&scores))
    }

    /// Sample deviation over valid repetitions, 0 for a single run.
    pub fn std(&self) -> f64 {
        let scores = self.valid_scores();
        if scores.len() < 2 {
            0.0
        } else {
            stats::sample_std(&scores)
        }
    }

    pub fn is_valid(&self) -> bool {
        self.balanced_accuracy().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub strategy: Strategy,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn point(&self, fraction: GridFraction) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.fraction == fraction)
    }

    /// Accuracy on the whole pool.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.fraction.is_full())?
            .balanced_accuracy()
    }

    pub fn convergence_fraction(&self, epsilon: f64) -> Option<GridFraction> {
        convergence_fraction(self, epsilon)
    }
}

/// Smallest grid fraction whose mean accuracy reaches the full-pool accuracy
/// minus `epsilon`. Invalid points are skipped; `None` without a valid final
/// point.
pub fn convergence_fraction(curve: &LearningCurve, epsilon: f64) -> Option<GridFraction> {
    let target = curve.final_accuracy()? - epsilon;
    let mut points: Vec<&CurvePoint> = curve.points.iter().collect();
    points.sort_by_key(|p| p.fraction);
    points
        .into_iter()
        .find(|p| p.balanced_accuracy().is_some_and(|a| a >= target))
        .map(|p| p.fraction)
}

/// Runs every grid point and repetition of `strategy`. Repetition `r` of the
/// random baseline uses seed `seed + r`. Points run in parallel; results are
/// keyed by (fraction, repetition) so scheduling never changes the output.
pub fn run_curve(
    pool: &[Sample],
    test: &[Sample],
    strategy: Strategy,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<LearningCurve> {
    strategy.validate()?;
    train_config.validate()?;
    let (forest, nonforest) = rankings(pool)?;
    let truth: Vec<Class> = test.iter().map(|s| s.class).collect();
    if !truth.contains(&Class::Forest) {
        return Err(Error::MissingClass("forest"));
    }
    if !truth.contains(&Class::NonForest) {
        return Err(Error::MissingClass("nonforest"));
    }
    let mut pool_ids: Vec<u32> = pool.iter().map(|s| s.segment_id).collect();
    pool_ids.sort_unstable();
    if let Some(s) = test
        .iter()
        .find(|s| pool_ids.binary_search(&s.segment_id).is_ok())
    {
        return Err(Error::param(
            "test",
            format!("segment {} appears in both pool and test set", s.segment_id),
        ));
    }
    let by_id: std::collections::HashMap<u32, &Sample> =
        pool.iter().map(|s| (s.segment_id, s)).collect();
    let test_x: Vec<&[f64]> = test.iter().map(|s| s.features.as_slice()).collect();

    let jobs: Vec<(GridFraction, usize)> = GridFraction::all()
        .flat_map(|f| (0..strategy.repetitions).map(move |r| (f, r)))
        .collect();
    let results: Vec<Result<Repetition>> = jobs
        .par_iter()
        .map(|&(fraction, index)| {
            let selection = select_subset(
                &forest,
                &nonforest,
                fraction,
                strategy.kind,
                seed.wrapping_add(index as u64),
            )?;
            let balanced_accuracy = if selection.forest.is_empty() || selection.nonforest.is_empty()
            {
                None
            } else {
                Some(score_subset(
                    &selection,
                    &by_id,
                    &test_x,
                    &truth,
                    train_config,
                )?)
            };
            Ok(Repetition {
                index,
                selection,
                balanced_accuracy,
            })
        })
        .collect();

    let mut points: Vec<CurvePoint> = GridFraction::all()
        .map(|fraction| CurvePoint {
            fraction,
            repetitions: Vec::with_capacity(strategy.repetitions),
        })
        .collect();
    for ((fraction, _), result) in jobs.iter().zip(results) {
        points[fraction.step() - 1].repetitions.push(result?);
    }
    Ok(LearningCurve { strategy, points })
}

fn rankings(pool: &[Sample]) -> Result<(ClassRanking, ClassRanking)> {
    let entries = |class: Class| -> Vec<(u32, f64)> {
        pool.iter()
            .filter(|s| s.class == class)
            .map(|s| (s.segment_id, s.entropy))
            .collect()
    };
    let forest = ClassRanking::new(&entries(Class::Forest));
    let nonforest = ClassRanking::new(&entries(Class::NonForest));
    if forest.is_empty() || nonforest.is_empty() {
        return Err(Error::SingleClass);
    }
    Ok((forest, nonforest))
}

fn score_subset(
    selection: &Selection,
    by_id: &std::collections::HashMap<u32, &Sample>,
    test_x: &[&[f64]],
    truth: &[Class],
    config: &TrainConfig,
) -> Result<f64> {
    let chosen: Vec<&Sample> = selection
        .forest
        .iter()
        .chain(&selection.nonforest)
        .map(|id| by_id[id])
        .collect();
    let x: Vec<Vec<f64>> = chosen.iter().map(|s| s.features.clone()).collect();
    let y: Vec<Class> = chosen.iter().map(|s| s.class).collect();
    let scaler = learner::fit_standardizer(&x)?;
    let model = learner::train(&scaler.apply(&x)?, &y, config)?;
    let predictions = test_x
        .iter()
        .map(|row| model.predict(&scaler.transform(row)?))
        .collect::<Result<Vec<Class>>>()?;
    balanced_accuracy(&predictions, truth)
}

pub const CURVE_HEADER: [&str; 6] = [
    "strategy",
    "fraction",
    "repetition",
    "balanced_accuracy",
    "n_train_forest",
    "n_train_nonforest",
];

pub const SUMMARY_HEADER: [&str; 3] = ["strategy", "convergence_fraction", "final_accuracy"];

/// One line of the curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub strategy: StrategyKind,
    pub fraction: GridFraction,
    pub repetition: usize,
    pub balanced_accuracy: Option<f64>,
    pub n_train_forest: usize,
    pub n_train_nonforest: usize,
}

pub fn curve_rows(curves: &[LearningCurve]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for curve in curves {
        for point in &curve.points {
            for rep in &point.repetitions {
                rows.push(CurveRow {
                    strategy: curve.strategy.kind,
                    fraction: point.fraction,
                    repetition: rep.index,
                    balanced_accuracy: rep.balanced_accuracy,
                    n_train_forest: rep.selection.forest.len(),
                    n_train_nonforest: rep.selection.nonforest.len(),
                });
            }
        }
    }
    rows
}

fn format_real(v: f64) -> String {
    format!("{v:.10}")
}

pub fn write_curves(
    sink: &mut dyn Write,
    curves: &[LearningCurve],
    comment: Option<&str>,
) -> Result<()> {
    let mut out = start_csv(sink, comment)?;
    out.write_record(CURVE_HEADER)?;
    for row in curve_rows(curves) {
        out.write_record([
            row.strategy.as_str().to_string(),
            row.fraction.to_string(),
            row.repetition.to_string(),
            row.balanced_accuracy.map(format_real).unwrap_or_default(),
            row.n_train_forest.to_string(),
            row.n_train_nonforest.to_string(),
        ])?;
    }
    out.flush().map_err(Error::Stream)?;
    Ok(())
}

pub fn read_curve_rows<R: Read>(source: R) -> Result<Vec<CurveRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CURVE_HEADER {
        return Err(Error::Csv(format!(
            "expected header {}",
            CURVE_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |name: &str| Error::Csv(format!("line {line}: bad `{name}`"));
        let field = |i: usize| record.get(i).unwrap_or("");
        let accuracy = match field(3) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("balanced_accuracy"))?),
        };
        rows.push(CurveRow {
            strategy: field(0).parse()?,
            fraction: GridFraction::from_f64(field(1).parse().map_err(|_| bad("fraction"))?)?,
            repetition: field(2).parse().map_err(|_| bad("repetition"))?,
            balanced_accuracy: accuracy,
            n_train_forest: field(4).parse().map_err(|_| bad("n_train_forest"))?,
            n_train_nonforest: field(5).parse().map_err(|_| bad("n_train_nonforest"))?,
        });
    }
    Ok(rows)
}

/// Regroups curve-file rows into curves. Selected ids are not stored in the
/// file, so the rebuilt selections are empty.
pub fn curves_from_rows(rows: &[CurveRow]) -> Vec<LearningCurve> {
    let mut curves: Vec<LearningCurve> = Vec::new();
    for row in rows {
        let curve = match curves
            .iter_mut()
            .position(|c| c.strategy.kind == row.strategy)
        {
            Some(i) => &mut curves[i],
            None => {
                curves.push(LearningCurve {
                    strategy: Strategy {
                        kind: row.strategy,
                        repetitions: 0,
                    },
                    points: Vec::new(),
                });
                curves.last_mut().expect("just pushed")
            }
        };
        let point = match curve.points.iter().position(|p| p.fraction == row.fraction) {
            Some(i) => &mut curve.points[i],
            None => {
                curve.points.push(CurvePoint {
                    fraction: row.fraction,
                    repetitions: Vec::new(),
                });
                curve.points.last_mut().expect("just pushed")
            }
        };
        point.repetitions.push(Repetition {
            index: row.repetition,
            selection: Selection::default(),
            balanced_accuracy: row.balanced_accuracy,
        });
    }
    for curve in &mut curves {
        curve.points.sort_by_key(|p| p.fraction);
        curve.strategy.repetitions = curve
            .points
            .iter()
            .map(|p| p.repetitions.len())
            .max()
            .unwrap_or(0);
    }
    curves
}

pub fn write_summary(
    sink: &mut dyn Write,
    curves: &[LearningCurve],
    epsilon: f64,
    comment: Option<&str>,
) -> Result<()> {
    let mut out = start_csv(sink, comment)?;
    out.write_record(SUMMARY_HEADER)?;
    for curve in curves {
        out.write_record([
            curve.strategy.kind.as_str().to_string(),
            curve
                .convergence_fraction(epsilon)
                .map(|f| f.to_string())
                .unwrap_or_default(),
            curve.final_accuracy().map(format_real).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(Error::Stream)?;
    Ok(())
}

fn start_csv<'a>(
    sink: &'a mut dyn Write,
    comment: Option<&str>,
) -> Result<csv::Writer<&'a mut dyn Write>> {
    if let Some(c) = comment {
        writeln!(sink, "# {c}").map_err(Error::Stream)?;
    }
    Ok(csv::Writer::from_writer(sink))
}
