//! Rubric ratings: adjudication, level distributions, inter-rater agreement
//! and source comparisons.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fixtures::{read_csv, FixtureError};
use crate::stats::{cohen_kappa, friedman, wilcoxon_signed_rank, StatResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSource {
    System,
    Gpt4,
    Ecp,
}

impl AnswerSource {
    pub const ALL: [AnswerSource; 3] = [AnswerSource::System, AnswerSource::Gpt4, AnswerSource::Ecp];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerSource::System => "system",
            AnswerSource::Gpt4 => "gpt4",
            AnswerSource::Ecp => "ecp",
        }
    }
}

impl fmt::Display for AnswerSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Accuracy,
    Utility,
    Relevance,
    Safety,
    Harmlessness,
}

impl Criterion {
    pub const ALL: [Criterion; 5] =
        [Criterion::Accuracy, Criterion::Utility, Criterion::Relevance, Criterion::Safety, Criterion::Harmlessness];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Accuracy => "accuracy",
            Criterion::Utility => "utility",
            Criterion::Relevance => "relevance",
            Criterion::Safety => "safety",
            Criterion::Harmlessness => "harmlessness",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub question_id: u32,
    pub source: AnswerSource,
    pub criterion: Criterion,
    pub rater_id: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RatingError {
    #[error("rating {0} outside 1..=3")]
    OutOfRange(u8),
    #[error("ratings {0} and {1} disagree and no third rating is available")]
    Unresolved(u8, u8),
    #[error("question {question_id} {answer_source} {criterion}: {reason}")]
    BadGroup { question_id: u32, answer_source: AnswerSource, criterion: Criterion, reason: String },
    #[error("no ratings")]
    Empty,
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

fn check(r: u8) -> Result<u8, RatingError> {
    if (1..=3).contains(&r) {
        Ok(r)
    } else {
        Err(RatingError::OutOfRange(r))
    }
}

/// Two agreeing ratings stand; a disagreement is settled by the third rating.
pub fn adjudicate(r1: u8, r2: u8, r3: Option<u8>) -> Result<u8, RatingError> {
    check(r1)?;
    check(r2)?;
    if r1 == r2 {
        return Ok(r1);
    }
    match r3 {
        Some(r) => check(r),
        None => Err(RatingError::Unresolved(r1, r2)),
    }
}

type Key = (AnswerSource, Criterion, u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicatedRating {
    pub question_id: u32,
    pub source: AnswerSource,
    pub criterion: Criterion,
    pub rating: u8,
    /// The third rater decided.
    pub adjudicated: bool,
}

/// Within each (question, source, criterion) the first two records in input
/// order are the primary raters and an optional third is the adjudicator.
pub fn adjudicate_records(records: &[RatingRecord]) -> Result<Vec<AdjudicatedRating>, RatingError> {
    if records.is_empty() {
        return Err(RatingError::Empty);
    }
    let mut groups: BTreeMap<Key, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.source, r.criterion, r.question_id)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((source, criterion, question_id), rs) in groups {
        let bad = |reason: String| RatingError::BadGroup { question_id, answer_source: source, criterion, reason };
        if !(2..=3).contains(&rs.len()) {
            return Err(bad(format!("expected 2 or 3 ratings, found {}", rs.len())));
        }
        let rating = adjudicate(rs[0].rating, rs[1].rating, rs.get(2).map(|r| r.rating)).map_err(|e| bad(e.to_string()))?;
        out.push(AdjudicatedRating { question_id, source, criterion, rating, adjudicated: rs[0].rating != rs[1].rating });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingDistribution {
    pub source: AnswerSource,
    pub criterion: Criterion,
    pub n: usize,
    /// Counts at levels 1, 2 and 3.
    pub counts: [usize; 3],
    /// Percentages at levels 1, 2 and 3, rounded to 2 decimals.
    pub percent: [f64; 3],
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn rating_summary(ratings: &[AdjudicatedRating]) -> Result<Vec<RatingDistribution>, RatingError> {
    if ratings.is_empty() {
        return Err(RatingError::Empty);
    }
    let mut counts: BTreeMap<(AnswerSource, Criterion), [usize; 3]> = BTreeMap::new();
    for r in ratings {
        counts.entry((r.source, r.criterion)).or_default()[check(r.rating)? as usize - 1] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|((source, criterion), c)| {
            let n: usize = c.iter().sum();
            RatingDistribution { source, criterion, n, counts: c, percent: c.map(|k| round2(100.0 * k as f64 / n as f64)) }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub n: usize,
    pub kappa: f64,
}

/// Cohen's kappa for every pair of raters over the items both rated.
pub fn rater_agreement(records: &[RatingRecord]) -> Vec<RaterAgreement> {
    let mut by_rater: BTreeMap<&str, BTreeMap<Key, u8>> = BTreeMap::new();
    for r in records {
        by_rater.entry(&r.rater_id).or_default().insert((r.source, r.criterion, r.question_id), r.rating);
    }
    let raters: Vec<&str> = by_rater.keys().copied().collect();
    let mut out = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            let (a, b) = (&by_rater[raters[i]], &by_rater[raters[j]]);
            let (xs, ys): (Vec<u8>, Vec<u8>) = a.iter().filter_map(|(k, x)| b.get(k).map(|y| (*x, *y))).unzip();
            if let Ok(kappa) = cohen_kappa(&xs, &ys) {
                out.push(RaterAgreement { rater_a: raters[i].into(), rater_b: raters[j].into(), n: xs.len(), kappa });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceComparison {
    pub criterion: Criterion,
    /// Friedman across all sources, or a pairwise Wilcoxon signed-rank test.
    pub label: String,
    pub result: Result<StatResult, String>,
}

/// Per criterion: a Friedman test across sources over questions rated for all
/// sources, then Wilcoxon signed-rank tests of the system against each other source.
pub fn compare_sources(ratings: &[AdjudicatedRating]) -> Vec<SourceComparison> {
    let mut out = Vec::new();
    for criterion in Criterion::ALL {
        let mut table: BTreeMap<u32, BTreeMap<AnswerSource, f64>> = BTreeMap::new();
        for r in ratings.iter().filter(|r| r.criterion == criterion) {
            table.entry(r.question_id).or_default().insert(r.source, r.rating as f64);
        }
        let sources: Vec<AnswerSource> =
            AnswerSource::ALL.into_iter().filter(|s| table.values().any(|row| row.contains_key(s))).collect();
        if table.is_empty() || sources.len() < 2 {
            continue;
        }
        let complete: Vec<Vec<f64>> = table
            .values()
            .filter(|row| sources.iter().all(|s| row.contains_key(s)))
            .map(|row| sources.iter().map(|s| row[s]).collect())
            .collect();
        let names: Vec<&str> = sources.iter().map(|s| s.as_str()).collect();
        out.push(SourceComparison {
            criterion,
            label: format!("friedman({})", names.join(",")),
            result: friedman(&complete).map_err(|e| e.to_string()),
        });
        if !sources.contains(&AnswerSource::System) {
            continue;
        }
        for other in sources.iter().filter(|s| **s != AnswerSource::System) {
            let diffs: Vec<f64> = table
                .values()
                .filter_map(|row| Some(row.get(&AnswerSource::System)? - row.get(other)?))
                .collect();
            out.push(SourceComparison {
                criterion,
                label: format!("wilcoxon(system-{other})"),
                result: wilcoxon_signed_rank(&diffs).map_err(|e| e.to_string()),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsReport {
    pub adjudicated: Vec<AdjudicatedRating>,
    pub distribution: Vec<RatingDistribution>,
    pub agreement: Vec<RaterAgreement>,
    pub comparisons: Vec<SourceComparison>,
}

pub fn ratings_report(records: &[RatingRecord]) -> Result<RatingsReport, RatingError> {
    let adjudicated = adjudicate_records(records)?;
    let distribution = rating_summary(&adjudicated)?;
    Ok(RatingsReport {
        agreement: rater_agreement(records),
        comparisons: compare_sources(&adjudicated),
        adjudicated,
        distribution,
    })
}

/// Reads `question_id,source,criterion,rater_id,rating`.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>, RatingError> {
    let rows = read_csv::<RatingRecord>(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if r.question_id == 0 {
            return Err(FixtureError::new(path, Some(line), "question_id must be positive").into());
        }
        if !(1..=3).contains(&r.rating) {
            return Err(FixtureError::new(path, Some(line), format!("rating {} outside 1..=3", r.rating)).into());
        }
        if r.rater_id.is_empty() {
            return Err(FixtureError::new(path, Some(line), "empty rater_id").into());
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(RatingError::Empty);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjudication_rule() {
        assert_eq!(adjudicate(2, 2, None), Ok(2));
        assert_eq!(adjudicate(1, 3, Some(2)), Ok(2));
        assert_eq!(adjudicate(3, 1, Some(2)), Ok(2));
        assert_eq!(adjudicate(1, 3, None), Err(RatingError::Unresolved(1, 3)));
        assert_eq!(adjudicate(0, 0, None), Err(RatingError::OutOfRange(0)));
    }

    fn adj(source: AnswerSource, rating: u8, q: u32) -> AdjudicatedRating {
        AdjudicatedRating { question_id: q, source, criterion: Criterion::Accuracy, rating, adjudicated: false }
    }

    #[test]
    fn fifty_eight_of_eighty_five() {
        let v: Vec<_> = (0..85).map(|q| adj(AnswerSource::System, if q < 58 { 3 } else { 2 }, q + 1)).collect();
        let s = rating_summary(&v).unwrap();
        assert_eq!(s[0].percent, [0.0, 31.76, 68.24]);
        assert_eq!(s[0].counts, [0, 27, 58]);
    }

    #[test]
    fn records_are_grouped_and_resolved() {
        let rec = |q, rater: &str, rating| RatingRecord {
            question_id: q,
            source: AnswerSource::Ecp,
            criterion: Criterion::Safety,
            rater_id: rater.into(),
            rating,
        };
        let out = adjudicate_records(&[rec(1, "a", 3), rec(1, "b", 1), rec(1, "c", 2), rec(2, "a", 3), rec(2, "b", 3)]).unwrap();
        assert_eq!(out.iter().map(|r| (r.rating, r.adjudicated)).collect::<Vec<_>>(), vec![(2, true), (3, false)]);
        assert!(adjudicate_records(&[rec(1, "a", 3), rec(1, "b", 1)]).is_err());
        assert!(adjudicate_records(&[rec(1, "a", 3)]).is_err());
    }
}
