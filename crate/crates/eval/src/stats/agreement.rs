use std::collections::BTreeMap;

use super::dist::chi2_sf;
use super::{invalid, PMode, StatError, StatResult};

/// Cohen's kappa for two raters. When chance agreement is 1 (both raters used
/// one and the same label) kappa is defined as 1.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, StatError> {
    if a.len() != b.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(invalid("kappa needs at least one rated item"));
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<&T, f64> = BTreeMap::new();
    let mut mb: BTreeMap<&T, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = ma.iter().map(|(k, ca)| ca / n * mb.get(k).copied().unwrap_or(0.0) / n).sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Pearson chi-square test of independence on an r × c table of counts.
pub fn chi_square_independence(table: &[Vec<f64>]) -> Result<StatResult, StatError> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 {
        return Err(invalid("contingency table must be at least 2 x 2"));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(invalid("contingency table rows differ in length"));
    }
    if table.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("counts must be finite and non-negative"));
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let total: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            if !(e > 0.0) {
                return Err(invalid(format!(
                    "expected count in cell ({i}, {j}) is zero; use an exact test for this table"
                )));
            }
            stat += (o - e).powi(2) / e;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    Ok(StatResult::new("Pearson chi-square", stat, Some(df), chi2_sf(stat, df), PMode::Approximate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_reference_points() {
        assert_eq!(cohen_kappa(&[1, 2, 3, 1], &[1, 2, 3, 1]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), -1.0);
        assert_eq!(cohen_kappa(&[2, 2, 2], &[2, 2, 2]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[1, 1], &[2, 2]).unwrap(), 0.0);
        assert!(cohen_kappa::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn chi_square_hand_values() {
        let r = chi_square_independence(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap();
        assert!((r.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.df, Some(1.0));
        let prop = chi_square_independence(&[vec![10.0, 20.0], vec![20.0, 40.0]]).unwrap();
        assert!(prop.statistic.abs() < 1e-12);
        assert!((prop.p_value - 1.0).abs() < 1e-12);
        assert!(chi_square_independence(&[vec![0.0, 0.0], vec![3.0, 4.0]]).is_err());
    }
}
