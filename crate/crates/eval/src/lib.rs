//! Measurement harness: exam scoring, rating adjudication and agreement,
//! questionnaire scoring, and the statistical tests used to compare groups.

pub mod exam;
pub mod fixtures;
pub mod questionnaire;
pub mod ratings;
pub mod stats;

pub use fixtures::FixtureError;
pub use stats::{PMode, StatError, StatResult};
