use std::collections::BTreeMap;

use super::dist::{f_sf, t_two_sided};
use super::{check_finite, invalid, PMode, StatError, StatResult};

/// Mixed-design repeated-measures ANOVA: one between-subjects factor (group)
/// and one within-subjects factor (exam).
#[derive(Debug, Clone, PartialEq)]
pub struct RmAnova {
    pub group: StatResult,
    pub exam: StatResult,
    pub interaction: StatResult,
    pub ss_group: f64,
    pub ss_between_error: f64,
    pub ss_exam: f64,
    pub ss_interaction: f64,
    pub ss_within_error: f64,
    /// Between-subjects error mean square, used by the LSD post-hoc test.
    pub ms_between_error: f64,
    pub df_between_error: f64,
    pub group_means: Vec<GroupMean>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMean {
    pub group: String,
    /// Mean over the group's subjects and all exams.
    pub mean: f64,
    pub n_subjects: usize,
}

/// `F = (ss_effect / df_effect) / (ss_error / df_error)`. A zero effect gives
/// F = 0, p = 1; a positive effect against zero error gives F = ∞, p = 0.
fn f_test(method: &str, ss_effect: f64, df_effect: f64, ss_error: f64, df_error: f64, scale: f64) -> StatResult {
    let eps = 1e-12 * scale.max(1.0);
    let (f, p) = if ss_effect <= eps {
        (0.0, 1.0)
    } else if ss_error <= eps {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_effect / df_effect) / (ss_error / df_error);
        (f, f_sf(f, df_effect, df_error))
    };
    let mut r = StatResult::new(method, f, Some(df_effect), p, PMode::Approximate);
    r.df2 = Some(df_error);
    r
}

/// `scores[i][j]` is subject i's score on exam j; `groups[i]` names its group.
pub fn mixed_rm_anova(scores: &[Vec<f64>], groups: &[String]) -> Result<RmAnova, StatError> {
    if scores.len() != groups.len() {
        return Err(invalid(format!("{} score rows but {} group labels", scores.len(), groups.len())));
    }
    let n = scores.len();
    let j = scores.first().map_or(0, Vec::len);
    if j < 2 {
        return Err(invalid("at least 2 exams are required"));
    }
    for (i, row) in scores.iter().enumerate() {
        if row.len() != j {
            return Err(invalid(format!("subject {i} has {} scores, expected {j}; missing cells are not imputed", row.len())));
        }
        check_finite("scores", row)?;
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_str()).or_default().push(i);
    }
    let g = members.len();
    if g < 2 {
        return Err(invalid("at least 2 groups are required"));
    }
    if n <= g {
        return Err(invalid("need more subjects than groups to estimate between-subjects error"));
    }

    let jf = j as f64;
    let grand = scores.iter().flatten().sum::<f64>() / (n as f64 * jf);
    let subject_mean: Vec<f64> = scores.iter().map(|r| r.iter().sum::<f64>() / jf).collect();
    let exam_mean: Vec<f64> = (0..j).map(|c| scores.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();

    let ss_total: f64 = scores.iter().flatten().map(|y| (y - grand).powi(2)).sum();
    let ss_subjects: f64 = jf * subject_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_exam: f64 = n as f64 * exam_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();

    let mut ss_group = 0.0;
    let mut ss_interaction = 0.0;
    let mut group_means = Vec::new();
    for (name, idx) in &members {
        let ng = idx.len() as f64;
        let gm = idx.iter().map(|&i| subject_mean[i]).sum::<f64>() / ng;
        ss_group += jf * ng * (gm - grand).powi(2);
        for c in 0..j {
            let cell = idx.iter().map(|&i| scores[i][c]).sum::<f64>() / ng;
            ss_interaction += ng * (cell - gm - exam_mean[c] + grand).powi(2);
        }
        group_means.push(GroupMean { group: name.to_string(), mean: gm, n_subjects: idx.len() });
    }
    let ss_between_error = (ss_subjects - ss_group).max(0.0);
    let ss_within_error = (ss_total - ss_subjects - ss_exam - ss_interaction).max(0.0);

    let gf = g as f64;
    let df_group = gf - 1.0;
    let df_between_error = n as f64 - gf;
    let df_exam = jf - 1.0;
    let df_interaction = df_group * df_exam;
    let df_within_error = df_between_error * df_exam;

    let scale = ss_total;
    Ok(RmAnova {
        group: f_test("RM-ANOVA group", ss_group, df_group, ss_between_error, df_between_error, scale),
        exam: f_test("RM-ANOVA exam", ss_exam, df_exam, ss_within_error, df_within_error, scale),
        interaction: f_test("RM-ANOVA group x exam", ss_interaction, df_interaction, ss_within_error, df_within_error, scale),
        ss_group,
        ss_between_error,
        ss_exam,
        ss_interaction,
        ss_within_error,
        ms_between_error: ss_between_error / df_between_error,
        df_between_error,
        group_means,
    })
}

/// Fisher's least significant difference: unadjusted pairwise t tests using
/// the pooled error mean square `mse` on `df_error` degrees of freedom.
///
/// Each subject's score is a mean over `per_subject_obs` repeated measures, so
/// the standard error of a group mean is √(mse / (per_subject_obs · n)). Pass 1
/// when `mse` already refers to subject means.
pub fn lsd_posthoc(
    means: &[GroupMean],
    mse: f64,
    df_error: f64,
    per_subject_obs: f64,
) -> Result<Vec<(String, String, StatResult)>, StatError> {
    if means.len() < 2 {
        return Err(invalid("LSD needs at least 2 groups"));
    }
    if !(mse >= 0.0) || !(df_error > 0.0) || !(per_subject_obs > 0.0) {
        return Err(invalid("LSD needs mse >= 0, df_error > 0 and per_subject_obs > 0"));
    }
    let mut out = Vec::new();
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let (ma, mb) = (&means[a], &means[b]);
            let diff = ma.mean - mb.mean;
            let se = (mse / per_subject_obs * (1.0 / ma.n_subjects as f64 + 1.0 / mb.n_subjects as f64)).sqrt();
            let (t, p) = if diff == 0.0 {
                (0.0, 1.0)
            } else if se == 0.0 {
                (f64::INFINITY.copysign(diff), 0.0)
            } else {
                let t = diff / se;
                (t, t_two_sided(t, df_error))
            };
            out.push((ma.group.clone(), mb.group.clone(), StatResult::new("LSD t", t, Some(df_error), p, PMode::Approximate)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn all_equal_scores() {
        let r = mixed_rm_anova(&vec![vec![5.0, 5.0]; 4], &labels(&["a", "a", "b", "b"])).unwrap();
        assert_eq!((r.group.statistic, r.group.p_value), (0.0, 1.0));
        assert_eq!((r.exam.statistic, r.exam.p_value), (0.0, 1.0));
    }

    #[test]
    fn pure_group_offset() {
        let scores = vec![vec![70.0, 70.0, 70.0], vec![70.0, 70.0, 70.0], vec![80.0, 80.0, 80.0], vec![80.0, 80.0, 80.0]];
        let r = mixed_rm_anova(&scores, &labels(&["a", "a", "b", "b"])).unwrap();
        assert_eq!(r.group.p_value, 0.0);
        assert!(r.group.statistic.is_infinite());
        assert_eq!(r.exam.p_value, 1.0);
    }

    #[test]
    fn validation() {
        assert!(mixed_rm_anova(&[vec![1.0, 2.0], vec![1.0]], &labels(&["a", "b"])).is_err());
        assert!(mixed_rm_anova(&[vec![1.0, 2.0], vec![1.0, 3.0]], &labels(&["a", "a"])).is_err());
        let m = [GroupMean { group: "a".into(), mean: 1.0, n_subjects: 2 }];
        assert!(lsd_posthoc(&m, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn identical_groups_have_t_zero() {
        let m = [
            GroupMean { group: "a".into(), mean: 70.0, n_subjects: 3 },
            GroupMean { group: "b".into(), mean: 70.0, n_subjects: 4 },
        ];
        let r = lsd_posthoc(&m, 12.0, 5.0, 1.0).unwrap();
        assert_eq!((r[0].2.statistic, r[0].2.p_value), (0.0, 1.0));
    }
}
