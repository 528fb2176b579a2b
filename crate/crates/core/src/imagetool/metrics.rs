//! One-vs-rest classification metrics and their macro aggregation.
//!
//! Any field whose denominator is zero is `None` (undefined) and is left out
//! of the macro mean.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GradeLabel, GradeProbabilities};

pub const METRIC_NAMES: [&str; 7] =
    ["Accuracy", "Sensitivity", "Specificity", "Precision", "AUROC", "AUPRC", "F1 score"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("non-finite score")]
    NonFiniteScore,
}

/// 5×5 counts; cell `(i, j)` is the number of items with truth `i` predicted as `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; 5]; 5]);

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn get(&self, truth: GradeLabel, predicted: GradeLabel) -> u64 {
        self.0[truth.index()][predicted.index()]
    }

    pub fn counts_for(&self, class: GradeLabel) -> BinaryCounts {
        let c = class.index();
        let tp = self.0[c][c];
        let row: u64 = self.0[c].iter().sum();
        let col: u64 = self.0.iter().map(|r| r[c]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        BinaryCounts { tp, fn_, fp, tn: self.total() - tp - fn_ - fp }
    }
}

pub fn confusion(predictions: &[GradeLabel], truths: &[GradeLabel]) -> Result<ConfusionMatrix, MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in predictions.iter().zip(truths) {
        m.0[t.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl BinaryMetrics {
    pub fn from_counts(c: BinaryCounts) -> Self {
        let n = c.tp + c.fn_ + c.fp + c.tn;
        let sensitivity = ratio(c.tp, c.tp + c.fn_);
        let precision = ratio(c.tp, c.tp + c.fp);
        let f1 = match (precision, sensitivity) {
            (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
            _ => None,
        };
        Self {
            accuracy: ratio(c.tp + c.tn, n),
            sensitivity,
            specificity: ratio(c.tn, c.tn + c.fp),
            precision,
            f1,
        }
    }
}

pub fn binary_metrics(matrix: &ConfusionMatrix, class: GradeLabel) -> Result<BinaryMetrics, MetricError> {
    if matrix.total() == 0 {
        return Err(MetricError::Empty);
    }
    Ok(BinaryMetrics::from_counts(matrix.counts_for(class)))
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore);
    }
    Ok(())
}

/// Area under the ROC curve as the Mann-Whitney statistic: the share of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_scores(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined("AUROC needs both positive and negative items"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Mid-ranks are half-integers, so the rank sum is exact in f64.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid_rank * positives as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: Σ (Rᵢ − Rᵢ₋₁)·Pᵢ over descending score thresholds, with
/// tied scores sharing one threshold.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_scores(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(MetricError::Undefined("AUPRC needs at least one positive item"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// One row of the report: the seven metrics for a class or the macro mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricRow {
    /// Fields in report column order.
    pub fn fields(&self) -> [Option<f64>; 7] {
        [self.accuracy, self.sensitivity, self.specificity, self.precision, self.auroc, self.auprc, self.f1]
    }

    pub fn from_fields(f: [Option<f64>; 7]) -> Self {
        Self {
            accuracy: f[0],
            sensitivity: f[1],
            specificity: f[2],
            precision: f[3],
            auroc: f[4],
            auprc: f[5],
            f1: f[6],
        }
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self::from_fields(v.map(Some))
    }
}

/// Unweighted mean of the defined per-class values, field by field.
pub fn macro_overall(rows: &[MetricRow]) -> MetricRow {
    let mut out = [None; 7];
    for (k, slot) in out.iter_mut().enumerate() {
        let defined: Vec<f64> = rows.iter().filter_map(|r| r.fields()[k]).collect();
        if !defined.is_empty() {
            *slot = Some(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    MetricRow::from_fields(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub confusion: ConfusionMatrix,
    pub per_class: [MetricRow; 5],
    pub overall: MetricRow,
}

/// Scores argmax predictions against `truths`; AUROC/AUPRC use each class's
/// probability column one-vs-rest.
pub fn evaluate(truths: &[GradeLabel], probs: &[GradeProbabilities]) -> Result<MetricReport, MetricError> {
    let predictions: Vec<GradeLabel> = probs.iter().map(GradeProbabilities::argmax).collect();
    let matrix = confusion(&predictions, truths)?;
    let mut per_class = [MetricRow::default(); 5];
    for class in GradeLabel::ALL {
        let b = binary_metrics(&matrix, class)?;
        let scores: Vec<f64> = probs.iter().map(|p| p.get(class)).collect();
        let labels: Vec<bool> = truths.iter().map(|&t| t == class).collect();
        per_class[class.index()] = MetricRow {
            accuracy: b.accuracy,
            sensitivity: b.sensitivity,
            specificity: b.specificity,
            precision: b.precision,
            auroc: auroc(&scores, &labels).ok(),
            auprc: auprc(&scores, &labels).ok(),
            f1: b.f1,
        };
    }
    Ok(MetricReport { confusion: matrix, overall: macro_overall(&per_class), per_class })
}

impl MetricReport {
    /// Rows are the five categories then `Overall`; columns the seven metrics.
    /// Undefined cells are written as `NA`.
    pub fn to_csv(&self, decimals: usize) -> String {
        let mut out = String::from("Condition");
        for name in METRIC_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let rows = GradeLabel::ALL
            .iter()
            .map(|g| (g.display_name(), &self.per_class[g.index()]))
            .chain(std::iter::once(("Overall", &self.overall)));
        for (name, row) in rows {
            out.push_str(name);
            for v in row.fields() {
                match v {
                    Some(x) => write!(out, ",{x:.decimals$}").unwrap(),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}
