use super::dist::{chi2_sf, normal_two_sided, t_two_sided};
use super::ranks::{midranks, tie_term};
use super::{check_finite, invalid, ModeChoice, PMode, StatError, StatResult};

/// Largest `n_a + n_b` handled by exact enumeration in auto mode.
pub const MANN_WHITNEY_EXACT_MAX_N: usize = 16;
/// Largest number of nonzero differences handled exactly in auto mode.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Midranks doubled so that every rank is an integer.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    midranks(values).iter().map(|r| (2.0 * r).round() as u64).collect()
}

/// Two-sided Mann-Whitney U test. The reported statistic is min(U_a, U_b).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatResult, StatError> {
    mann_whitney_u_with(a, b, ModeChoice::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], mode: ModeChoice) -> Result<StatResult, StatError> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("Mann-Whitney U needs two non-empty samples"));
    }
    check_finite("sample a", a)?;
    check_finite("sample b", b)?;
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r2 = doubled_ranks(&pooled);
    let rank_sum_a2: u64 = r2[..na].iter().sum();
    let u_a = rank_sum_a2 as f64 / 2.0 - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let statistic = u_a.min(u_b);

    let exact = match mode {
        ModeChoice::Auto => n <= MANN_WHITNEY_EXACT_MAX_N,
        ModeChoice::Exact => true,
        ModeChoice::Approximate => false,
    };
    if exact {
        if n > 30 {
            return Err(invalid(format!("exact Mann-Whitney enumeration is limited to n <= 30, got {n}")));
        }
        // ways[j][s]: subsets of size j whose doubled ranks sum to s.
        let total: u64 = r2.iter().sum();
        let mut ways = vec![vec![0u64; total as usize + 1]; na + 1];
        ways[0][0] = 1;
        for &r in &r2 {
            for j in (1..=na).rev() {
                for s in (r as usize..=total as usize).rev() {
                    ways[j][s] += ways[j - 1][s - r as usize];
                }
            }
        }
        // Mean of the doubled rank sum is na(n+1); compare distances in integers.
        let center = (na * (n + 1)) as i64;
        let observed = (rank_sum_a2 as i64 - center).abs();
        let (mut extreme, mut all) = (0u64, 0u64);
        for (s, &w) in ways[na].iter().enumerate() {
            all += w;
            if (s as i64 - center).abs() >= observed {
                extreme += w;
            }
        }
        let p = extreme as f64 / all as f64;
        return Ok(StatResult::new("Mann-Whitney U", statistic, None, p, PMode::Exact));
    }

    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let dev = (u_a - (na * nb) as f64 / 2.0).abs();
        normal_two_sided(((dev - 0.5).max(0.0)) / var.sqrt())
    };
    Ok(StatResult::new("Mann-Whitney U", statistic, None, p, PMode::Approximate))
}

/// Two-sided Wilcoxon signed-rank test on paired differences. Zero differences
/// are dropped; the statistic is the smaller of the two signed-rank sums.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<StatResult, StatError> {
    wilcoxon_signed_rank_with(diffs, ModeChoice::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], mode: ModeChoice) -> Result<StatResult, StatError> {
    check_finite("differences", diffs)?;
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return Err(invalid("Wilcoxon signed-rank needs at least one nonzero difference"));
    }
    let n = nz.len();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let r2 = doubled_ranks(&abs);
    let total2: u64 = r2.iter().sum();
    let w_plus2: u64 = r2.iter().zip(&nz).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let w_plus = w_plus2 as f64 / 2.0;
    let w_minus = (total2 - w_plus2) as f64 / 2.0;
    let statistic = w_plus.min(w_minus);

    let exact = match mode {
        ModeChoice::Auto => n <= WILCOXON_EXACT_MAX_N,
        ModeChoice::Exact => true,
        ModeChoice::Approximate => false,
    };
    if exact {
        if n > 40 {
            return Err(invalid(format!("exact Wilcoxon enumeration is limited to n <= 40, got {n}")));
        }
        // ways[s]: sign assignments whose positive doubled ranks sum to s.
        let mut ways = vec![0u64; total2 as usize + 1];
        ways[0] = 1;
        for &r in &r2 {
            for s in (r as usize..=total2 as usize).rev() {
                ways[s] += ways[s - r as usize];
            }
        }
        // Null mean of the doubled W+ is total2 / 2; work with 2·W+ to stay integral.
        let observed = (2 * w_plus2 as i64 - total2 as i64).abs();
        let extreme: u64 =
            ways.iter().enumerate().filter(|(s, _)| (2 * *s as i64 - total2 as i64).abs() >= observed).map(|(_, w)| w).sum();
        let p = extreme as f64 / 2f64.powi(n as i32);
        return Ok(StatResult::new("Wilcoxon signed-rank", statistic, None, p, PMode::Exact));
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&abs) / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        normal_two_sided((((w_plus - mean).abs() - 0.5).max(0.0)) / var.sqrt())
    };
    Ok(StatResult::new("Wilcoxon signed-rank", statistic, None, p, PMode::Approximate))
}

/// Friedman test on a block × treatment matrix (rows are blocks). Ranks are
/// taken within each block; the chi-square statistic carries the tie correction.
pub fn friedman(matrix: &[Vec<f64>]) -> Result<StatResult, StatError> {
    let n = matrix.len();
    if n < 2 {
        return Err(invalid("Friedman test needs at least 2 blocks"));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(invalid("Friedman test needs at least 2 treatments"));
    }
    if matrix.iter().any(|row| row.len() != k) {
        return Err(invalid("every block must have a value for every treatment"));
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in matrix {
        check_finite("block", row)?;
        for (j, r) in midranks(row).into_iter().enumerate() {
            rank_sums[j] += r;
        }
        ties += tie_term(row);
    }
    let (nf, kf) = (n as f64, k as f64);
    let df = kf - 1.0;
    let numerator = 12.0 * rank_sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * nf * nf * kf * (kf + 1.0).powi(2);
    let denominator = nf * kf * (kf + 1.0) - ties / (kf - 1.0);
    if denominator <= 1e-12 {
        // Every block is fully tied: no evidence of any difference.
        return Ok(StatResult::new("Friedman", 0.0, Some(df), 1.0, PMode::Approximate));
    }
    let q = (numerator / denominator).max(0.0);
    Ok(StatResult::new("Friedman", q, Some(df), chi2_sf(q, df), PMode::Approximate))
}

/// Spearman rank correlation with a t-distribution p-value on n − 2 df.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<StatResult, StatError> {
    if x.len() != y.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(invalid("Spearman correlation needs at least 3 pairs"));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let rx = midranks(x);
    let ry = midranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatError::Undefined("a variable has zero rank variance".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p = if rho.abs() >= 1.0 { 0.0 } else { t_two_sided(rho * (df / (1.0 - rho * rho)).sqrt(), df) };
    Ok(StatResult::new("Spearman rank correlation", rho, Some(df), p, PMode::Approximate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_separation_four_and_four() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.mode, PMode::Exact);
        assert!((r.p_value - 2.0 / 70.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_sit_at_the_null_center() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.statistic, 12.5);
        assert_eq!(r.p_value, 1.0);
        let big: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_u(&big, &big).unwrap();
        assert_eq!(r.mode, PMode::Approximate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn single_difference_has_p_one() {
        let r = wilcoxon_signed_rank(&[0.0, 2.5, 0.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn symmetric_differences_have_p_one() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0, 3.0, -3.0]).unwrap();
        assert_eq!(r.statistic, 10.5);
        assert_eq!(r.p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn friedman_identical_columns_and_constant_loser() {
        let same = vec![vec![2.0, 2.0, 2.0]; 4];
        let r = friedman(&same).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        // Treatment 3 always last, 1 always first: rank sums 4, 8, 12.
        let m = vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.7, 0.9], vec![10.0, 20.0, 30.0], vec![1.0, 5.0, 9.0]];
        let r = friedman(&m).unwrap();
        let hand = 12.0 / (4.0 * 3.0 * 4.0) * (16.0 + 64.0 + 144.0) - 3.0 * 4.0 * 4.0;
        assert!((r.statistic - hand).abs() < 1e-12);
        assert_eq!(hand, 8.0);
        assert!(friedman(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn spearman_monotone_and_degenerate() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman_rho(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap().statistic, 1.0);
        assert_eq!(spearman_rho(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap().statistic, -1.0);
        assert!(matches!(spearman_rho(&x, &[1.0; 5]), Err(StatError::Undefined(_))));
    }
}
