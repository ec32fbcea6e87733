use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::auroc::auroc;
use super::metrics::{check_inputs, compute_metrics, Confusion, Metric, MetricValues};
use crate::cohort::stats::quantile;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::child_rng;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;
pub const MIN_BOOTSTRAP_N: usize = 10;
/// A metric needs at least this fraction of valid resamples to get a CI.
pub const MIN_VALID_FRACTION: f64 = 0.9;

/// Percentile interval for one metric, or the reason it is unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Interval {
    Available { low: f64, high: f64, valid: usize },
    Unavailable { reason: String, valid: usize },
}

impl Interval {
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Interval::Available { low, high, .. } => Some((*low, *high)),
            Interval::Unavailable { .. } => None,
        }
    }
}

/// Per-metric 95% intervals, in `Metric::ALL` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub resamples: usize,
    pub seed: u64,
    pub intervals: Vec<(Metric, Interval)>,
}

impl BootstrapCi {
    pub fn get(&self, m: Metric) -> &Interval {
        &self
            .intervals
            .iter()
            .find(|(k, _)| *k == m)
            .expect("all metrics present")
            .1
    }
}

fn resample_metrics(labels: &[u8], scores: &[f64], threshold: f64, seed: u64, b: usize) -> MetricValues {
    let n = labels.len();
    let mut rng = child_rng(seed, &[b as u64]);
    let mut ls = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..n);
        ls.push(labels[i]);
        ss.push(scores[i]);
    }
    let mut m = MetricValues::from_confusion(&Confusion::from_scores(&ls, &ss, threshold));
    m.auroc = auroc(&ls, &ss).ok();
    m
}

/// Percentile bootstrap (2.5th / 97.5th) over `resamples` patient-level
/// resamples with replacement. Resample `b` draws from its own stream
/// derived from `(seed, b)`, so results do not depend on execution mode.
pub fn bootstrap_ci(
    labels: &[u8],
    scores: &[f64],
    threshold: f64,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapCi> {
    check_inputs(labels, scores)?;
    if resamples < MIN_RESAMPLES {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    if labels.len() < MIN_BOOTSTRAP_N {
        return Err(Error::Precondition(format!(
            "bootstrap needs n >= {MIN_BOOTSTRAP_N}, got {}",
            labels.len()
        )));
    }
    let draws = map_indexed(exec, resamples, |b| {
        resample_metrics(labels, scores, threshold, seed, b)
    });
    let min_valid = (MIN_VALID_FRACTION * resamples as f64).ceil() as usize;
    let intervals = Metric::ALL
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = draws.iter().filter_map(|d| d.get(m)).collect();
            let valid = vals.len();
            let iv = if valid < min_valid {
                Interval::Unavailable {
                    reason: format!(
                        "{} defined in only {valid} of {resamples} resamples",
                        m.name()
                    ),
                    valid,
                }
            } else {
                Interval::Available {
                    low: quantile(&vals, 0.025),
                    high: quantile(&vals, 0.975),
                    valid,
                }
            };
            (m, iv)
        })
        .collect();
    Ok(BootstrapCi {
        resamples,
        seed,
        intervals,
    })
}

/// Point metrics with their bootstrap intervals.
pub fn point_and_ci(
    labels: &[u8],
    scores: &[f64],
    threshold: f64,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<(MetricValues, BootstrapCi)> {
    let point = compute_metrics(labels, scores, threshold)?;
    let ci = bootstrap_ci(labels, scores, threshold, resamples, seed, exec)?;
    Ok((point, ci))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_have_degenerate_ci() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let scores: Vec<f64> = labels.iter().map(|&y| if y == 1 { 0.9 } else { 0.1 }).collect();
        let ci = bootstrap_ci(&labels, &scores, 0.5, 200, 1, Execution::Sequential).unwrap();
        for (m, iv) in &ci.intervals {
            assert_eq!(iv.bounds(), Some((1.0, 1.0)), "{m:?}");
        }
    }

    #[test]
    fn deterministic_across_modes() {
        let labels: Vec<u8> = (0..60).map(|i| (i % 3 == 0) as u8).collect();
        let scores: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64 / 60.0).collect();
        let a = bootstrap_ci(&labels, &scores, 0.5, 300, 9, Execution::Sequential).unwrap();
        let b = bootstrap_ci(&labels, &scores, 0.5, 300, 9, Execution::Parallel).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn rare_positive_metric_is_unavailable() {
        let mut labels = vec![0u8; 50];
        labels[0] = 1;
        let scores: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let ci = bootstrap_ci(&labels, &scores, 0.5, 200, 3, Execution::Sequential).unwrap();
        assert!(ci.get(Metric::Sensitivity).bounds().is_none());
        assert!(ci.get(Metric::Specificity).bounds().is_some());
    }

    #[test]
    fn preconditions() {
        let l = vec![0u8, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let s = vec![0.5; 10];
        assert!(bootstrap_ci(&l, &s, 0.5, 99, 1, Execution::Sequential).is_err());
        assert!(bootstrap_ci(&l[..9], &s[..9], 0.5, 100, 1, Execution::Sequential).is_err());
    }
}
