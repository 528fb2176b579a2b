//! Reference computations for tests. Everything here is written the slow,
//! obvious way (enumeration, pair counting, textbook formulas) and shares no
//! code with the crates under test.

pub mod distributions;
pub mod metrics;
pub mod stats;

/// Midranks by counting: rank = #less + (#equal + 1) / 2.
pub fn naive_midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Indices of the `k` best vectors by cosine score (dot product of the stored
/// unit vectors, accumulated in f64 in component order), ties by index.
pub fn brute_force_top_k(vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut s = 0.0f64;
            for (a, b) in v.iter().zip(query) {
                s += *a as f64 * *b as f64;
            }
            (i, s)
        })
        .collect();
    // Selection by repeated scan rather than sorting.
    let mut out = Vec::new();
    while out.len() < k && !scored.is_empty() {
        let mut best = 0;
        for j in 1..scored.len() {
            let (bi, bs) = scored[best];
            let (ji, js) = scored[j];
            if js > bs || (js == bs && ji < bi) {
                best = j;
            }
        }
        out.push(scored.remove(best));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_and_top_k() {
        assert_eq!(naive_midranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]];
        let top: Vec<usize> = brute_force_top_k(&v, &[1.0, 0.0], 3).iter().map(|x| x.0).collect();
        assert_eq!(top, vec![0, 2, 1]);
    }
}
