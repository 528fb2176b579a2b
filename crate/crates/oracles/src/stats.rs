//! Enumeration and textbook-formula oracles for the statistical tests.

use crate::naive_midranks;

/// Exact two-sided Mann-Whitney p by enumerating every assignment of the
/// pooled values to sample a. Returns (min(U_a, U_b), p).
pub fn mann_whitney_enumerated(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    assert!(n <= 24, "enumeration oracle is for small samples");
    let ranks = naive_midranks(&pooled);
    let u_of = |mask: u32| {
        let r: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        r - (na * (na + 1)) as f64 / 2.0
    };
    let center = (na * (n - na)) as f64 / 2.0;
    let observed_u = u_of((1u32 << na) - 1);
    let observed = (observed_u - center).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        if (u_of(mask) - center).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    let u_min = observed_u.min((na * (n - na)) as f64 - observed_u);
    (u_min, extreme as f64 / total as f64)
}

/// Exact two-sided Wilcoxon signed-rank p by walking all 2^n sign patterns
/// in Gray-code order. Zero differences are dropped. Returns (min(W+, W−), p).
pub fn wilcoxon_enumerated(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    assert!((1..=24).contains(&n));
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = naive_midranks(&abs);
    let total: f64 = ranks.iter().sum();
    let center = total / 2.0;
    let w_obs: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let observed = (w_obs - center).abs();
    // Start with every sign negative (W+ = 0) and flip one sign per step.
    let mut w = 0.0;
    let mut positive = vec![false; n];
    let mut extreme = u64::from((w - center).abs() >= observed - 1e-9);
    for step in 1u64..(1u64 << n) {
        let bit = step.trailing_zeros() as usize;
        positive[bit] = !positive[bit];
        w += if positive[bit] { ranks[bit] } else { -ranks[bit] };
        if (w - center).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    (w_obs.min(total - w_obs), extreme as f64 / (1u64 << n) as f64)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..k {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Friedman statistic from rank sums (tie-corrected), by the textbook formula.
pub fn friedman_statistic(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len() as f64;
    let k = matrix[0].len();
    let kf = k as f64;
    let mut sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in matrix {
        for (j, r) in naive_midranks(row).into_iter().enumerate() {
            sums[j] += r;
        }
        let mut seen: Vec<f64> = Vec::new();
        for v in row {
            if !seen.contains(v) {
                seen.push(*v);
                let t = row.iter().filter(|w| *w == v).count() as f64;
                ties += t * t * t - t;
            }
        }
    }
    let mean = n * (kf + 1.0) / 2.0;
    let ss: f64 = sums.iter().map(|s| (s - mean).powi(2)).sum();
    let denom = n * kf * (kf + 1.0) / 12.0 - ties / (12.0 * (kf - 1.0));
    if denom <= 0.0 {
        0.0
    } else {
        ss / denom
    }
}

/// Exact permutation p of the Friedman statistic: every block permuted
/// independently, all (k!)^n arrangements enumerated.
pub fn friedman_permutation_p(matrix: &[Vec<f64>]) -> f64 {
    let k = matrix[0].len();
    let perms = permutations(k);
    let observed = friedman_statistic(matrix);
    let n = matrix.len();
    let mut idx = vec![0usize; n];
    let (mut extreme, mut total) = (0u64, 0u64);
    loop {
        let m: Vec<Vec<f64>> = (0..n).map(|b| perms[idx[b]].iter().map(|&j| matrix[b][j]).collect()).collect();
        total += 1;
        if friedman_statistic(&m) >= observed - 1e-9 {
            extreme += 1;
        }
        let mut b = 0;
        loop {
            if b == n {
                return extreme as f64 / total as f64;
            }
            idx[b] += 1;
            if idx[b] < perms.len() {
                break;
            }
            idx[b] = 0;
            b += 1;
        }
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Spearman rho as Pearson on naive midranks, and its t-based two-sided p.
pub fn spearman(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rho = pearson(&naive_midranks(x), &naive_midranks(y));
    let df = x.len() as f64 - 2.0;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    (rho, crate::distributions::t_two_sided(t, df))
}

/// Pearson chi-square statistic and df.
pub fn chi_square(table: &[Vec<f64>]) -> (f64, f64) {
    let total: f64 = table.iter().flatten().sum();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, o) in row.iter().enumerate() {
            let ri: f64 = table[i].iter().sum();
            let cj: f64 = table.iter().map(|r| r[j]).sum();
            let e = ri * cj / total;
            stat += (o - e) * (o - e) / e;
        }
    }
    (stat, ((table.len() - 1) * (table[0].len() - 1)) as f64)
}

pub fn kappa(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut labels: Vec<u32> = a.iter().chain(b).copied().collect();
    labels.sort();
    labels.dedup();
    let pe: f64 = labels
        .iter()
        .map(|l| a.iter().filter(|x| *x == l).count() as f64 / n * b.iter().filter(|x| *x == l).count() as f64 / n)
        .sum();
    (po - pe) / (1.0 - pe)
}

/// Sums of squares of a mixed (split-plot) design by the raw-total
/// computational formulas: SS = Σ T²/n − G²/N.
#[derive(Debug, Clone, Copy)]
pub struct SplitPlot {
    pub ss_group: f64,
    pub ss_subjects_within: f64,
    pub ss_exam: f64,
    pub ss_interaction: f64,
    pub ss_residual: f64,
    pub f_group: f64,
    pub f_exam: f64,
    pub df: [f64; 5],
}

pub fn split_plot(scores: &[Vec<f64>], groups: &[usize]) -> SplitPlot {
    let n_sub = scores.len();
    let j = scores[0].len();
    let g = groups.iter().max().unwrap() + 1;
    let big_n = (n_sub * j) as f64;
    let grand: f64 = scores.iter().flatten().sum();
    let correction = grand * grand / big_n;
    let raw: f64 = scores.iter().flatten().map(|y| y * y).sum();

    let subj: f64 = scores.iter().map(|r| r.iter().sum::<f64>().powi(2) / j as f64).sum();
    let mut group_term = 0.0;
    let mut cell_term = 0.0;
    for gi in 0..g {
        let members: Vec<&Vec<f64>> = scores.iter().zip(groups).filter(|(_, &gg)| gg == gi).map(|(r, _)| r).collect();
        let t: f64 = members.iter().map(|r| r.iter().sum::<f64>()).sum();
        group_term += t * t / (members.len() * j) as f64;
        for c in 0..j {
            let ct: f64 = members.iter().map(|r| r[c]).sum();
            cell_term += ct * ct / members.len() as f64;
        }
    }
    let exam_term: f64 = (0..j).map(|c| scores.iter().map(|r| r[c]).sum::<f64>().powi(2) / n_sub as f64).sum();

    let ss_group = group_term - correction;
    let ss_subjects_within = subj - group_term;
    let ss_exam = exam_term - correction;
    let ss_interaction = cell_term - group_term - exam_term + correction;
    let ss_residual = raw - subj - cell_term + group_term;
    let df_group = (g - 1) as f64;
    let df_sw = (n_sub - g) as f64;
    let df_exam = (j - 1) as f64;
    let df_int = df_group * df_exam;
    let df_res = df_sw * df_exam;
    SplitPlot {
        ss_group,
        ss_subjects_within,
        ss_exam,
        ss_interaction,
        ss_residual,
        f_group: (ss_group / df_group) / (ss_subjects_within / df_sw),
        f_exam: (ss_exam / df_exam) / (ss_residual / df_res),
        df: [df_group, df_sw, df_exam, df_int, df_res],
    }
}
