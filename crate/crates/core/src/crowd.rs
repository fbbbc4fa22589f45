//! Homogeneity rate, vote aggregation, Shannon entropy of crowd responses and
//! a seeded campaign simulator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GroundTruthMask, MaskClass};

/// The two land-cover classes a segment can be trained as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    Forest,
    NonForest,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Forest => "forest",
            Class::NonForest => "nonforest",
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::Forest => Class::NonForest,
            Class::NonForest => Class::Forest,
        }
    }

    /// `+1` for forest, `-1` for non-forest.
    pub fn sign(self) -> f64 {
        match self {
            Class::Forest => 1.0,
            Class::NonForest => -1.0,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forest" => Ok(Class::Forest),
            "nonforest" => Ok(Class::NonForest),
            other => Err(Error::Csv(format!("unknown class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Response {
    Forest,
    NonForest,
    Undefined,
}

impl Response {
    pub fn as_str(self) -> &'static str {
        match self {
            Response::Forest => "forest",
            Response::NonForest => "nonforest",
            Response::Undefined => "undefined",
        }
    }
}

impl From<Class> for Response {
    fn from(c: Class) -> Self {
        match c {
            Class::Forest => Response::Forest,
            Class::NonForest => Response::NonForest,
        }
    }
}

impl FromStr for Response {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forest" => Ok(Response::Forest),
            "nonforest" => Ok(Response::NonForest),
            "undefined" => Ok(Response::Undefined),
            other => Err(Error::Csv(format!("unknown response `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorRecord {
    pub segment_id: u32,
    pub forest_pixels: usize,
    pub nonforest_pixels: usize,
    pub hor: f64,
}

impl HorRecord {
    /// Pixel-majority class; exact halves count as forest.
    pub fn majority(&self) -> Class {
        if self.forest_pixels >= self.nonforest_pixels {
            Class::Forest
        } else {
            Class::NonForest
        }
    }
}

/// `max(NFP, NNP) / (NFP + NNP)`.
pub fn hor_from_counts(
    segment_id: u32,
    forest_pixels: usize,
    nonforest_pixels: usize,
) -> Result<HorRecord> {
    let total = forest_pixels + nonforest_pixels;
    if total == 0 {
        return Err(Error::UnlabeledSegment(segment_id));
    }
    Ok(HorRecord {
        segment_id,
        forest_pixels,
        nonforest_pixels,
        hor: forest_pixels.max(nonforest_pixels) as f64 / total as f64,
    })
}

/// Homogeneity rate of the segment made of `pixels` (indices into `mask`).
/// Ignored pixels do not count.
pub fn hor(segment_id: u32, pixels: &[usize], mask: &GroundTruthMask) -> Result<HorRecord> {
    let (mut forest, mut nonforest) = (0, 0);
    for &i in pixels {
        match mask.class_at(i) {
            MaskClass::Forest => forest += 1,
            MaskClass::NonForest => nonforest += 1,
            MaskClass::Ignore => {}
        }
    }
    hor_from_counts(segment_id, forest, nonforest)
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Binary Shannon entropy, in bits, of a forest/non-forest vote tally.
pub fn entropy(n_forest: usize, n_nonforest: usize) -> Result<f64> {
    entropy_with_denominator(n_forest, n_nonforest, n_forest + n_nonforest)
}

fn entropy_with_denominator(n_forest: usize, n_nonforest: usize, total: usize) -> Result<f64> {
    if n_forest + n_nonforest == 0 || total == 0 {
        return Err(Error::NoVotes);
    }
    let t = total as f64;
    let h = -(plogp(n_forest as f64 / t) + plogp(n_nonforest as f64 / t));
    // -0.0 for unanimous tallies
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub segment_id: u32,
    pub volunteer_id: u32,
    pub response: Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Majority {
    Forest,
    NonForest,
    Tie,
}

impl Majority {
    pub fn as_str(self) -> &'static str {
        match self {
            Majority::Forest => "forest",
            Majority::NonForest => "nonforest",
            Majority::Tie => "tie",
        }
    }

    pub fn class(self) -> Option<Class> {
        match self {
            Majority::Forest => Some(Class::Forest),
            Majority::NonForest => Some(Class::NonForest),
            Majority::Tie => None,
        }
    }
}

impl FromStr for Majority {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forest" => Ok(Majority::Forest),
            "nonforest" => Ok(Majority::NonForest),
            "tie" => Ok(Majority::Tie),
            other => Err(Error::Csv(format!("unknown majority `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub segment_id: u32,
    pub n_forest: usize,
    pub n_nonforest: usize,
    pub n_undefined: usize,
    pub majority: Majority,
    /// `None` when the segment received no class votes.
    pub entropy: Option<f64>,
}

impl SegmentLabel {
    /// The trainable class, if the majority is not a tie.
    pub fn class(&self) -> Option<Class> {
        self.majority.class()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOptions {
    /// Count undefined responses in the entropy denominator.
    pub include_undefined: bool,
}

/// Tallies votes per segment (ascending segment id). Undefined responses never
/// affect the majority; by default they are also left out of the entropy.
pub fn aggregate(votes: &[VoteRecord], options: AggregateOptions) -> Vec<SegmentLabel> {
    let mut tallies: BTreeMap<u32, [usize; 3]> = BTreeMap::new();
    for v in votes {
        let t = tallies.entry(v.segment_id).or_default();
        match v.response {
            Response::Forest => t[0] += 1,
            Response::NonForest => t[1] += 1,
            Response::Undefined => t[2] += 1,
        }
    }
    tallies
        .into_iter()
        .map(|(segment_id, [f, n, u])| {
            let majority = match f.cmp(&n) {
                std::cmp::Ordering::Greater => Majority::Forest,
                std::cmp::Ordering::Less => Majority::NonForest,
                std::cmp::Ordering::Equal => Majority::Tie,
            };
            let denominator = if options.include_undefined {
                f + n + u
            } else {
                f + n
            };
            SegmentLabel {
                segment_id,
                n_forest: f,
                n_nonforest: n,
                n_undefined: u,
                majority,
                entropy: entropy_with_denominator(f, n, denominator).ok(),
            }
        })
        .collect()
}

/// Volunteer behaviour for simulated campaigns.
///
/// Each volunteer has a reliability `r ~ Beta(alpha, beta)`. On a segment with
/// homogeneity `hor` they answer "undefined" with probability
/// `2 * undefined_rate * (1 - hor)`, otherwise pick the segment's majority
/// class with probability `0.5 + (hor - 0.5) * r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdModel {
    pub votes_per_task: usize,
    pub volunteers: usize,
    pub alpha: f64,
    pub beta: f64,
    pub undefined_rate: f64,
    pub seed: u64,
}

impl Default for CrowdModel {
    fn default() -> Self {
        Self {
            votes_per_task: 15,
            volunteers: 100,
            alpha: 5.0,
            beta: 2.0,
            undefined_rate: 0.1,
            seed: 42,
        }
    }
}

impl CrowdModel {
    pub fn validate(&self) -> Result<()> {
        if self.votes_per_task == 0 {
            return Err(Error::param("votes_per_task", "must be at least 1"));
        }
        if self.volunteers < self.votes_per_task {
            return Err(Error::param(
                "volunteers",
                format!("must be at least votes_per_task ({})", self.votes_per_task),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.undefined_rate) {
            return Err(Error::param("undefined_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Reliability of every volunteer in the pool, drawn from its own stream.
    pub fn reliabilities(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let beta =
            Beta::new(self.alpha, self.beta).map_err(|e| Error::param("alpha", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        Ok((0..self.volunteers)
            .map(|_| beta.sample(&mut rng))
            .collect())
    }
}

/// Probability that a volunteer of reliability `r` votes the true class.
pub fn correct_vote_probability(hor: f64, r: f64) -> f64 {
    0.5 + (hor - 0.5) * r
}

pub fn undefined_probability(hor: f64, undefined_rate: f64) -> f64 {
    undefined_rate * (1.0 - hor) * 2.0
}

/// Simulates `votes_per_task` responses for every segment. `truth[i]` is the
/// true class of `hors[i]`. Segment `s` draws from a generator seeded with
/// `seed + s`, so results do not depend on processing order.
pub fn simulate_campaign(
    hors: &[HorRecord],
    truth: &[Class],
    model: &CrowdModel,
) -> Result<Vec<VoteRecord>> {
    if hors.len() != truth.len() {
        return Err(Error::param(
            "truth",
            format!("{} labels for {} segments", truth.len(), hors.len()),
        ));
    }
    let reliability = model.reliabilities()?;
    let mut votes = Vec::with_capacity(hors.len() * model.votes_per_task);
    for (record, &class) in hors.iter().zip(truth) {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed.wrapping_add(record.segment_id as u64));
        let volunteers = rand::seq::index::sample(&mut rng, model.volunteers, model.votes_per_task);
        let p_undefined = undefined_probability(record.hor, model.undefined_rate);
        for v in volunteers.iter() {
            let response = if rng.random::<f64>() < p_undefined {
                Response::Undefined
            } else if rng.random::<f64>() < correct_vote_probability(record.hor, reliability[v]) {
                class.into()
            } else {
                class.other().into()
            };
            votes.push(VoteRecord {
                segment_id: record.segment_id,
                volunteer_id: v as u32,
                response,
            });
        }
    }
    Ok(votes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascending,
    Descending,
}

/// Segment ids ordered by entropy; equal entropies always fall back to
/// ascending segment id. Labels without an entropy are skipped.
pub fn rank_by_entropy(labels: &[SegmentLabel], direction: Direction) -> Vec<u32> {
    let mut ranked: Vec<(f64, u32)> = labels
        .iter()
        .filter_map(|l| l.entropy.map(|e| (e, l.segment_id)))
        .collect();
    ranked.sort_by(|a, b| {
        let by_entropy = match direction {
            Direction::Ascending => a.0.total_cmp(&b.0),
            Direction::Descending => b.0.total_cmp(&a.0),
        };
        by_entropy.then(a.1.cmp(&b.1))
    });
    ranked.into_iter().map(|(_, id)| id).collect()
}

/// Which segments enter a labelling campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignDesign {
    /// Segments with `hor == 1`, split evenly between the two classes.
    pub pure: usize,
    /// Segments with `hor` in `[mixed_low, mixed_high]`.
    pub mixed: usize,
    pub mixed_low: f64,
    pub mixed_high: f64,
    pub seed: u64,
}

impl Default for CampaignDesign {
    fn default() -> Self {
        Self {
            pure: 90,
            mixed: 90,
            mixed_low: 0.7,
            mixed_high: 0.8,
            seed: 42,
        }
    }
}

impl CampaignDesign {
    pub fn validate(&self) -> Result<()> {
        if self.pure + self.mixed == 0 {
            return Err(Error::param("pure", "campaign needs at least one segment"));
        }
        if !(0.5..=1.0).contains(&self.mixed_low) || !(0.5..=1.0).contains(&self.mixed_high) {
            return Err(Error::param(
                "mixed_low",
                "HoR band must lie within [0.5, 1]",
            ));
        }
        if self.mixed_low > self.mixed_high {
            return Err(Error::param("mixed_low", "must not exceed mixed_high"));
        }
        Ok(())
    }
}

/// Picks campaign segments, returned in ascending id order.
///
/// Pure segments are drawn at random per class; a class that runs short is
/// topped up from the other. Mixed segments are drawn at random from the HoR
/// band; if the band holds too few, the remaining impure segments closest to
/// the band centre fill the gap.
pub fn design_campaign(hors: &[HorRecord], design: &CampaignDesign) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    rng.set_stream(2);

    let mut pure_by_class: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    for r in hors.iter().filter(|r| r.hor >= 1.0) {
        pure_by_class[(r.majority() == Class::NonForest) as usize].push(r.segment_id);
    }
    for list in &mut pure_by_class {
        list.sort_unstable();
        list.shuffle(&mut rng);
    }
    let half = design.pure / 2;
    let mut take = [
        half.min(pure_by_class[0].len()),
        (design.pure - half).min(pure_by_class[1].len()),
    ];
    let short = design.pure - take[0] - take[1];
    take[0] = (take[0] + short).min(pure_by_class[0].len());
    let short = design.pure.saturating_sub(take[0] + take[1]);
    take[1] = (take[1] + short).min(pure_by_class[1].len());

    let mut chosen: Vec<u32> = pure_by_class[0][..take[0]]
        .iter()
        .chain(&pure_by_class[1][..take[1]])
        .copied()
        .collect();

    let mut band: Vec<u32> = hors
        .iter()
        .filter(|r| r.hor >= design.mixed_low && r.hor <= design.mixed_high && r.hor < 1.0)
        .map(|r| r.segment_id)
        .collect();
    band.sort_unstable();
    band.shuffle(&mut rng);
    band.truncate(design.mixed);
    if band.len() < design.mixed {
        let centre = 0.5 * (design.mixed_low + design.mixed_high);
        let mut rest: Vec<&HorRecord> = hors
            .iter()
            .filter(|r| r.hor < 1.0 && !band.contains(&r.segment_id))
            .collect();
        rest.sort_by(|a, b| {
            (a.hor - centre)
                .abs()
                .total_cmp(&(b.hor - centre).abs())
                .then(a.segment_id.cmp(&b.segment_id))
        });
        let missing = design.mixed - band.len();
        band.extend(rest.iter().take(missing).map(|r| r.segment_id));
    }
    chosen.extend(band);
    chosen.sort_unstable();
    chosen
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::Csv(format!(
            "expected header {}, found {}",
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    let raw = record
        .get(i)
        .ok_or_else(|| Error::Csv(format!("line {line}: missing `{name}`")))?;
    raw.parse()
        .map_err(|_| Error::Csv(format!("line {line}: bad `{name}` value `{raw}`")))
}

pub const VOTES_HEADER: [&str; 3] = ["segment_id", "volunteer_id", "response"];

pub fn write_votes(
    sink: &mut dyn Write,
    votes: &[VoteRecord],
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(sink, "# {c}")?;
    }
    writeln!(sink, "{}", VOTES_HEADER.join(","))?;
    for v in votes {
        writeln!(
            sink,
            "{},{},{}",
            v.segment_id,
            v.volunteer_id,
            v.response.as_str()
        )?;
    }
    Ok(())
}

pub fn read_votes<R: Read>(source: R) -> Result<Vec<VoteRecord>> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &VOTES_HEADER)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        out.push(VoteRecord {
            segment_id: parse_field(&record, 0, "segment_id")?,
            volunteer_id: parse_field(&record, 1, "volunteer_id")?,
            response: record
                .get(2)
                .ok_or_else(|| Error::Csv("missing `response`".into()))?
                .parse()?,
        });
    }
    Ok(out)
}

pub const LABELS_HEADER: [&str; 6] = [
    "segment_id",
    "n_forest",
    "n_nonforest",
    "n_undefined",
    "majority",
    "entropy",
];

pub fn write_labels(
    sink: &mut dyn Write,
    labels: &[SegmentLabel],
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(sink, "# {c}")?;
    }
    writeln!(sink, "{}", LABELS_HEADER.join(","))?;
    for l in labels {
        let entropy = l.entropy.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            sink,
            "{},{},{},{},{},{}",
            l.segment_id,
            l.n_forest,
            l.n_nonforest,
            l.n_undefined,
            l.majority.as_str(),
            entropy
        )?;
    }
    Ok(())
}

pub fn read_labels<R: Read>(source: R) -> Result<Vec<SegmentLabel>> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &LABELS_HEADER)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let entropy = match record.get(5) {
            Some("") | None => None,
            Some(_) => Some(parse_field(&record, 5, "entropy")?),
        };
        out.push(SegmentLabel {
            segment_id: parse_field(&record, 0, "segment_id")?,
            n_forest: parse_field(&record, 1, "n_forest")?,
            n_nonforest: parse_field(&record, 2, "n_nonforest")?,
            n_undefined: parse_field(&record, 3, "n_undefined")?,
            majority: parse_field(&record, 4, "majority")?,
            entropy,
        });
    }
    Ok(out)
}

pub const CAMPAIGN_HEADER: [&str; 6] = [
    "segment_id",
    "forest_pixels",
    "nonforest_pixels",
    "hor",
    "truth",
    "in_campaign",
];

/// Writes every segment's pixel counts, HoR and truth, flagging the ids in
/// `tasks` (ascending) as campaign members.
pub fn write_campaign(
    sink: &mut dyn Write,
    hors: &[HorRecord],
    tasks: &[u32],
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(sink, "# {c}")?;
    }
    writeln!(sink, "{}", CAMPAIGN_HEADER.join(","))?;
    for r in hors {
        writeln!(
            sink,
            "{},{},{},{},{},{}",
            r.segment_id,
            r.forest_pixels,
            r.nonforest_pixels,
            r.hor,
            r.majority().as_str(),
            tasks.binary_search(&r.segment_id).is_ok() as u8
        )?;
    }
    Ok(())
}

/// Reads a campaign table back; HoR is recomputed from the pixel counts.
/// Returns all records and the ascending campaign ids.
pub fn read_campaign<R: Read>(source: R) -> Result<(Vec<HorRecord>, Vec<u32>)> {
    let mut reader = csv_reader(source);
    check_header(&mut reader, &CAMPAIGN_HEADER)?;
    let mut hors = Vec::new();
    let mut tasks = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id: u32 = parse_field(&record, 0, "segment_id")?;
        let r = hor_from_counts(
            id,
            parse_field(&record, 1, "forest_pixels")?,
            parse_field(&record, 2, "nonforest_pixels")?,
        )?;
        let flag: u8 = parse_field(&record, 5, "in_campaign")?;
        if flag == 1 {
            tasks.push(id);
        }
        hors.push(r);
    }
    tasks.sort_unstable();
    Ok((hors, tasks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn votes(segment: u32, f: usize, n: usize, u: usize) -> Vec<VoteRecord> {
        let mut out = Vec::new();
        let mut vid = 0;
        for (count, response) in [
            (f, Response::Forest),
            (n, Response::NonForest),
            (u, Response::Undefined),
        ] {
            for _ in 0..count {
                out.push(VoteRecord {
                    segment_id: segment,
                    volunteer_id: vid,
                    response,
                });
                vid += 1;
            }
        }
        out
    }

    #[test]
    fn hor_examples() {
        assert_eq!(hor_from_counts(0, 70, 30).unwrap().hor, 0.7);
        assert_eq!(hor_from_counts(0, 100, 0).unwrap().hor, 1.0);
        assert_eq!(hor_from_counts(0, 50, 50).unwrap().hor, 0.5);
        assert!(matches!(
            hor_from_counts(4, 0, 0),
            Err(Error::UnlabeledSegment(4))
        ));
    }

    #[test]
    fn hor_skips_ignored_pixels() {
        use crate::grid::Grid;
        let grid = Grid::from_vec(
            4,
            1,
            vec![
                MaskClass::Forest,
                MaskClass::Ignore,
                MaskClass::NonForest,
                MaskClass::Forest,
            ],
        )
        .unwrap();
        let mask = GroundTruthMask::new(grid);
        let r = hor(3, &[0, 1, 2, 3], &mask).unwrap();
        assert_eq!((r.forest_pixels, r.nonforest_pixels), (2, 1));
        assert!(matches!(
            hor(3, &[1], &mask),
            Err(Error::UnlabeledSegment(3))
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(15, 0).unwrap(), 0.0);
        assert_eq!(entropy(8, 8).unwrap(), 1.0);
        // -(0.8 log2 0.8 + 0.2 log2 0.2)
        assert!((entropy(12, 3).unwrap() - 0.721_928_094_887_362_3).abs() < 1e-12);
        assert!(matches!(entropy(0, 0), Err(Error::NoVotes)));
    }

    #[test]
    fn aggregate_examples() {
        let l = aggregate(&votes(1, 10, 0, 2), AggregateOptions::default());
        assert_eq!(l[0].majority, Majority::Forest);
        assert_eq!(l[0].entropy, Some(0.0));

        let l = aggregate(&votes(1, 6, 6, 0), AggregateOptions::default());
        assert_eq!(l[0].majority, Majority::Tie);

        let l = aggregate(&votes(1, 9, 3, 3), AggregateOptions::default());
        // -(0.75 log2 0.75 + 0.25 log2 0.25)
        assert!((l[0].entropy.unwrap() - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert_eq!(l[0].n_undefined, 3);

        let l = aggregate(&votes(1, 0, 0, 4), AggregateOptions::default());
        assert_eq!(l[0].majority, Majority::Tie);
        assert_eq!(l[0].entropy, None);
    }

    #[test]
    fn aggregate_including_undefined() {
        let opts = AggregateOptions {
            include_undefined: true,
        };
        let l = aggregate(&votes(1, 10, 0, 2), opts);
        let p = 10.0f64 / 12.0;
        assert!((l[0].entropy.unwrap() + p * p.log2()).abs() < 1e-12);
    }

    #[test]
    fn ranking_examples() {
        let label = |id, e| SegmentLabel {
            segment_id: id,
            n_forest: 1,
            n_nonforest: 0,
            n_undefined: 0,
            majority: Majority::Forest,
            entropy: Some(e),
        };
        let labels = [label(2, 0.9), label(1, 0.2), label(3, 0.2)];
        assert_eq!(
            rank_by_entropy(&labels, Direction::Ascending),
            vec![1, 3, 2]
        );
        assert_eq!(
            rank_by_entropy(&labels, Direction::Descending),
            vec![2, 1, 3]
        );
        let flat = [label(5, 0.4), label(2, 0.4), label(9, 0.4)];
        assert_eq!(rank_by_entropy(&flat, Direction::Ascending), vec![2, 5, 9]);
        assert_eq!(rank_by_entropy(&flat, Direction::Descending), vec![2, 5, 9]);
    }

    #[test]
    fn vote_probabilities() {
        assert_eq!(undefined_probability(1.0, 0.2), 0.0);
        for r in [0.0, 0.3, 1.0] {
            assert_eq!(correct_vote_probability(1.0, r), 0.5 + 0.5 * r);
            assert_eq!(correct_vote_probability(0.5, r), 0.5);
        }
    }

    #[test]
    fn model_validation() {
        assert!(CrowdModel::default().validate().is_ok());
        let bad = CrowdModel {
            undefined_rate: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CrowdModel {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CrowdModel {
            votes_per_task: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pure_segments_never_undefined() {
        let model = CrowdModel {
            undefined_rate: 0.9,
            ..Default::default()
        };
        let hors: Vec<HorRecord> = (0..50)
            .map(|i| hor_from_counts(i, 100, 0).unwrap())
            .collect();
        let truth = vec![Class::Forest; 50];
        let votes = simulate_campaign(&hors, &truth, &model).unwrap();
        assert_eq!(votes.len(), 50 * 15);
        assert!(votes.iter().all(|v| v.response != Response::Undefined));
    }

    #[test]
    fn simulation_is_order_independent() {
        let model = CrowdModel::default();
        let hors: Vec<HorRecord> = (0..20)
            .map(|i| hor_from_counts(i, 60 + i as usize, 40).unwrap())
            .collect();
        let truth: Vec<Class> = hors.iter().map(|h| h.majority()).collect();
        let forward = simulate_campaign(&hors, &truth, &model).unwrap();
        let mut rev_h = hors.clone();
        rev_h.reverse();
        let mut rev_t = truth.clone();
        rev_t.reverse();
        let backward = simulate_campaign(&rev_h, &rev_t, &model).unwrap();
        let key = |v: &VoteRecord| (v.segment_id, v.volunteer_id);
        let mut a = forward.clone();
        let mut b = backward;
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a, b);
    }

    #[test]
    fn campaign_design_balances_pure_classes() {
        let mut hors = Vec::new();
        for i in 0..60 {
            hors.push(hor_from_counts(i, 100, 0).unwrap());
        }
        for i in 60..80 {
            hors.push(hor_from_counts(i, 0, 100).unwrap());
        }
        for i in 80..100 {
            hors.push(hor_from_counts(i, 75, 25).unwrap());
        }
        for i in 100..110 {
            hors.push(hor_from_counts(i, 55, 45).unwrap());
        }
        let design = CampaignDesign {
            pure: 50,
            mixed: 25,
            ..Default::default()
        };
        let chosen = design_campaign(&hors, &design);
        assert_eq!(chosen.len(), 75);
        let nonforest_pure = chosen.iter().filter(|&&id| (60..80).contains(&id)).count();
        assert_eq!(nonforest_pure, 20);
        assert_eq!(chosen.iter().filter(|&&id| id < 60).count(), 30);
        assert_eq!(
            chosen.iter().filter(|&&id| (80..100).contains(&id)).count(),
            20
        );
        assert_eq!(chosen.iter().filter(|&&id| id >= 100).count(), 5);
        assert_eq!(chosen, design_campaign(&hors, &design));
    }

    #[test]
    fn csv_round_trip() {
        let v = votes(7, 2, 1, 1);
        let mut buf = Vec::new();
        write_votes(&mut buf, &v, Some("provenance")).unwrap();
        assert_eq!(read_votes(buf.as_slice()).unwrap(), v);

        let labels = aggregate(&v, AggregateOptions::default());
        let mut buf = Vec::new();
        write_labels(&mut buf, &labels, None).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
    }

    #[test]
    fn bad_vote_response_rejected() {
        let text = "segment_id,volunteer_id,response\n1,2,maybe\n";
        assert!(read_votes(text.as_bytes()).is_err());
    }

    #[test]
    fn campaign_table_round_trips() {
        let hors = vec![
            hor_from_counts(0, 30, 10).unwrap(),
            hor_from_counts(1, 0, 12).unwrap(),
            hor_from_counts(4, 5, 5).unwrap(),
        ];
        let mut buf = Vec::new();
        write_campaign(&mut buf, &hors, &[1, 4], Some("x")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\n1,0,12,1,nonforest,1\n"));
        let (back, tasks) = read_campaign(buf.as_slice()).unwrap();
        assert_eq!(back, hors);
        assert_eq!(tasks, vec![1, 4]);
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_symmetry(a in 0usize..200, b in 0usize..200) {
            prop_assume!(a + b > 0);
            let h = entropy(a, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert_eq!(h, entropy(b, a).unwrap());
            prop_assert_eq!(h == 0.0, a == 0 || b == 0);
            prop_assert_eq!(h == 1.0, a == b);
        }

        #[test]
        fn hor_bounds(f in 0usize..10_000, n in 0usize..10_000) {
            prop_assume!(f + n > 0);
            let r = hor_from_counts(0, f, n).unwrap();
            prop_assert!((0.5..=1.0).contains(&r.hor));
            prop_assert_eq!(r.hor == 1.0, f == 0 || n == 0);
        }

        #[test]
        fn aggregate_permutation_invariant(
            raw in prop::collection::vec((0u32..5, 0u8..3), 0..80),
            seed in any::<u64>(),
        ) {
            let mut v: Vec<VoteRecord> = raw
                .iter()
                .enumerate()
                .map(|(i, &(s, r))| VoteRecord {
                    segment_id: s,
                    volunteer_id: i as u32,
                    response: [Response::Forest, Response::NonForest, Response::Undefined][r as usize],
                })
                .collect();
            let before = aggregate(&v, AggregateOptions::default());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            v.shuffle(&mut rng);
            prop_assert_eq!(before, aggregate(&v, AggregateOptions::default()));
        }
    }
}
