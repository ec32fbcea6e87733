use super::metrics::check_inputs;
use crate::error::{Error, Result};

/// Twice the Mann-Whitney U count: 2 per concordant pair, 1 per tie.
fn doubled_concordance(labels: &[u8], scores: &[f64]) -> u64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut total = 0u64;
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        total += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    total
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed in integer arithmetic, so it is exactly equal
/// to the pairwise count.
pub fn auroc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_inputs(labels, scores)?;
    let p = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::Undefined("AUROC needs both classes".into()));
    }
    Ok(doubled_concordance(labels, scores) as f64 / (2 * p * n) as f64)
}

/// ROC operating points from (0,0) to (1,1), one per distinct score.
pub fn roc_points(labels: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_inputs(labels, scores)?;
    let p = labels.iter().filter(|&&y| y == 1).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Undefined("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(pts)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}
