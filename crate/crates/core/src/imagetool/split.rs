//! Train/validation/test split that never separates a participant's images
//! and keeps each class close to the target ratios.
//!
//! Each participant is filed under its primary class (most images; ties go to
//! the more severe class). Within a class, participants are taken in
//! descending image count and each goes to the split whose fill fraction
//! `images_in_split / (ratio · class_images)` is lowest. Equal fill fractions
//! are broken by a seeded hash of participant and split.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GradeLabel;
use crate::hashing::fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub image_ref: String,
    pub participant_id: String,
    pub label: GradeLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios([String; 3]),
    #[error("example {0:?} has an empty participant_id")]
    EmptyParticipant(String),
    #[error("no examples to split")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub participants: BTreeMap<String, Split>,
    /// Non-fatal notes, e.g. classes too small to stratify.
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, participant_id: &str) -> Option<Split> {
        self.participants.get(participant_id).copied()
    }

    /// Image counts per class and split for `examples`.
    pub fn summarize(&self, examples: &[LabeledExample]) -> SplitSummary {
        let mut counts = [[0usize; 3]; 5];
        for ex in examples {
            if let Some(s) = self.split_of(&ex.participant_id) {
                counts[ex.label.index()][s as usize] += 1;
            }
        }
        SplitSummary { counts }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSummary {
    /// `counts[class][split]` in images.
    pub counts: [[usize; 3]; 5],
}

impl SplitSummary {
    /// Share of a class's images that landed in `split`, or `None` for an absent class.
    pub fn fraction(&self, class: GradeLabel, split: Split) -> Option<f64> {
        let row = self.counts[class.index()];
        let total: usize = row.iter().sum();
        (total > 0).then(|| row[split as usize] as f64 / total as f64)
    }
}

struct Participant<'a> {
    id: &'a str,
    per_class: [usize; 5],
}

impl Participant<'_> {
    fn total(&self) -> usize {
        self.per_class.iter().sum()
    }

    fn primary_class(&self) -> usize {
        (0..5).max_by_key(|&c| (self.per_class[c], c)).unwrap()
    }
}

pub fn stratified_split(
    examples: &[LabeledExample],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    let r = ratios.as_array();
    if r.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplitError::InvalidRatios(r.map(|x| x.to_string())));
    }
    if examples.is_empty() {
        return Err(SplitError::Empty);
    }

    let mut by_id: BTreeMap<&str, Participant> = BTreeMap::new();
    let mut class_totals = [0usize; 5];
    for ex in examples {
        if ex.participant_id.is_empty() {
            return Err(SplitError::EmptyParticipant(ex.image_ref.clone()));
        }
        let p = by_id
            .entry(ex.participant_id.as_str())
            .or_insert_with(|| Participant { id: &ex.participant_id, per_class: [0; 5] });
        p.per_class[ex.label.index()] += 1;
        class_totals[ex.label.index()] += 1;
    }

    let mut warnings = Vec::new();
    for class in GradeLabel::ALL {
        let n = by_id.values().filter(|p| p.per_class[class.index()] > 0).count();
        if (1..3).contains(&n) {
            warnings.push(format!(
                "class {class} has only {n} participant(s); it cannot appear in all three splits"
            ));
        }
    }

    let mut groups: [Vec<&Participant>; 5] = Default::default();
    for p in by_id.values() {
        groups[p.primary_class()].push(p);
    }

    let mut filled = [[0usize; 3]; 5];
    let mut participants = BTreeMap::new();
    for (class, group) in groups.iter_mut().enumerate() {
        // Stable sort keeps id order among equal counts.
        group.sort_by(|a, b| b.total().cmp(&a.total()));
        let target: Vec<f64> = r.iter().map(|x| x * class_totals[class] as f64).collect();
        for p in group.iter() {
            let fill = |s: usize| filled[class][s] as f64 / target[s];
            let tie_key = |s: usize| fnv1a64(seed, format!("{}\u{1f}{s}", p.id).as_bytes());
            let chosen = (0..3)
                .min_by(|&a, &b| fill(a).total_cmp(&fill(b)).then_with(|| tie_key(a).cmp(&tie_key(b))))
                .unwrap();
            for (c, &n) in p.per_class.iter().enumerate() {
                filled[c][chosen] += n;
            }
            participants.insert(p.id.to_string(), Split::ALL[chosen]);
        }
    }

    Ok(SplitAssignment { participants, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use GradeLabel::*;

    fn ex(pid: &str, i: usize, label: GradeLabel) -> LabeledExample {
        LabeledExample { image_ref: format!("{pid}_{i}.png"), participant_id: pid.into(), label }
    }

    #[test]
    fn divisible_single_class() {
        let examples: Vec<_> = (0..10).map(|i| ex(&format!("p{i}"), 0, C1)).collect();
        let a = stratified_split(&examples, SplitRatios::default(), 7).unwrap();
        let s = a.summarize(&examples);
        assert_eq!(s.counts[1], [8, 1, 1]);
    }

    #[test]
    fn a_participant_never_spans_splits() {
        let mut examples: Vec<_> = (0..6).map(|i| ex("big", i, C4)).collect();
        examples.extend((0..20).map(|i| ex(&format!("p{i}"), 0, C0)));
        let a = stratified_split(&examples, SplitRatios::default(), 1).unwrap();
        let s = a.summarize(&examples);
        assert_eq!(s.counts[4].iter().filter(|&&n| n > 0).count(), 1);
        assert_eq!(a.warnings.len(), 1);
        assert!(a.warnings[0].contains("C4"));
    }

    #[test]
    fn mixed_class_participant_is_assigned_once() {
        let examples = vec![ex("a", 0, C0), ex("a", 1, C3), ex("b", 0, C3)];
        let a = stratified_split(&examples, SplitRatios::default(), 0).unwrap();
        assert_eq!(a.participants.len(), 2);
    }

    #[test]
    fn deterministic_for_seed() {
        let examples: Vec<_> = (0..50).map(|i| ex(&format!("p{i}"), 0, GradeLabel::ALL[i % 5])).collect();
        let a = stratified_split(&examples, SplitRatios::default(), 42).unwrap();
        let b = stratified_split(&examples, SplitRatios::default(), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_inputs() {
        let bad = SplitRatios { train: 0.8, val: 0.1, test: 0.2 };
        assert!(matches!(stratified_split(&[ex("a", 0, C0)], bad, 0), Err(SplitError::InvalidRatios(_))));
        let neg = SplitRatios { train: 1.1, val: -0.1, test: 0.0 };
        assert!(stratified_split(&[ex("a", 0, C0)], neg, 0).is_err());
        assert_eq!(stratified_split(&[], SplitRatios::default(), 0), Err(SplitError::Empty));
        assert!(matches!(
            stratified_split(&[ex("", 0, C0)], SplitRatios::default(), 0),
            Err(SplitError::EmptyParticipant(_))
        ));
    }
}
