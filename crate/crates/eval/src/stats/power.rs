use super::dist::normal_quantile;
use super::{invalid, StatError};

/// Per-group sample size for a two-sided comparison of two means:
/// n = ⌈2 (z₁₋α/₂ + z_power)² σ² / δ²⌉.
pub fn sample_size_two_means(alpha: f64, power: f64, delta: f64, sigma: f64) -> Result<u64, StatError> {
    if !(alpha > 0.0 && alpha < 1.0) || !(power > 0.0 && power < 1.0) {
        return Err(invalid("alpha and power must lie in (0, 1)"));
    }
    if !(delta.is_finite() && delta != 0.0) || !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("delta must be nonzero and sigma positive"));
    }
    let z = normal_quantile(1.0 - alpha / 2.0) + normal_quantile(power);
    let n = 2.0 * z * z * sigma * sigma / (delta * delta);
    Ok((n.ceil() as u64).max(1))
}
