//! Statistical tests. Every test returns a [`StatResult`] with a two-sided
//! p-value in [0, 1] unless stated otherwise.

mod agreement;
mod anova;
pub mod dist;
mod nonparam;
mod power;
mod ranks;

pub use agreement::{chi_square_independence, cohen_kappa};
pub use anova::{lsd_posthoc, mixed_rm_anova, GroupMean, RmAnova};
pub use nonparam::{
    friedman, mann_whitney_u, mann_whitney_u_with, spearman_rho, wilcoxon_signed_rank, wilcoxon_signed_rank_with,
    MANN_WHITNEY_EXACT_MAX_N, WILCOXON_EXACT_MAX_N,
};
pub use power::sample_size_two_means;
pub use ranks::{midranks, tie_sizes};

use serde::{Deserialize, Serialize};

/// How a p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMode {
    Exact,
    Approximate,
}

/// Mode selection for tests that have both an exact and an approximate route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    /// Exact up to the test's size bound, approximate above it.
    Auto,
    Exact,
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub method: String,
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// Denominator degrees of freedom for F tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df2: Option<f64>,
    pub p_value: f64,
    pub mode: PMode,
}

impl StatResult {
    pub(crate) fn new(method: &str, statistic: f64, df: Option<f64>, p_value: f64, mode: PMode) -> Self {
        Self { method: method.to_string(), statistic, df, df2: None, p_value: p_value.clamp(0.0, 1.0), mode }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("statistic undefined: {0}")]
    Undefined(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> StatError {
    StatError::InvalidInput(msg.into())
}

pub(crate) fn check_finite(name: &str, xs: &[f64]) -> Result<(), StatError> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{name} contains a non-finite value")));
    }
    Ok(())
}
