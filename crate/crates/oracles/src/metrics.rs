//! Classification metric oracles.

/// Share of (positive, negative) pairs with the positive scored higher, ties one half.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut good, mut pairs) = (0.0f64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            if si > sj {
                good += 1.0;
            } else if si == sj {
                good += 0.5;
            }
        }
    }
    (pairs > 0).then(|| good / pairs as f64)
}

/// Average precision by sweeping every distinct score as a threshold from the
/// top: Σ (recall_t − recall_{t−1}) · precision_t.
pub fn auprc_sweep(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| labels[i]).count();
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / selected.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// (tp, fn, fp, tn) for `class` by scanning the pairs.
pub fn recount(predictions: &[usize], truths: &[usize], class: usize) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (t == class, p == class) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}
