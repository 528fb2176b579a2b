//! Fundus grading tool: the five-category myopic maculopathy taxonomy, the
//! classifier backend contract, a participant-grouped stratified splitter and
//! the metric engine behind the per-class/macro report.

mod backend;
mod grade;
mod metrics;
mod split;

pub use backend::{
    classify, read_sidecar, ClassifierBackend, ClassifyError, FixtureBackend, FundusImage, HttpClassifier,
    HttpClassifierSettings, ImageFormat, SidecarRow,
};
pub use grade::{grade_report, GradeLabel, GradeProbabilities, GradeSentences, ParseGradeError};
pub use metrics::{
    auprc, auroc, binary_metrics, confusion, evaluate, macro_overall, BinaryCounts, BinaryMetrics,
    ConfusionMatrix, MetricError, MetricReport, MetricRow, METRIC_NAMES,
};
pub use split::{stratified_split, LabeledExample, Split, SplitAssignment, SplitError, SplitRatios, SplitSummary};
