use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the operating threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Maximize F1 over the candidate cut points (ties go to the lowest threshold).
    #[default]
    MaxF1,
    Fixed(f64),
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

/// Choose a threshold (score >= threshold is positive).
///
/// `MaxF1` evaluates the minimum score (everything called positive) and every
/// midpoint between consecutive distinct scores.
pub fn select_threshold(scores: &[f64], labels: &[u8], policy: ThresholdPolicy) -> Result<f64> {
    match policy {
        ThresholdPolicy::Fixed(t) => Ok(t),
        ThresholdPolicy::MaxF1 => {
            if scores.len() != labels.len() || scores.is_empty() {
                return Err(Error::InvalidInput("scores and labels must be nonempty and aligned".into()));
            }
            let total_pos = labels.iter().filter(|&&y| y == 1).count();
            if total_pos == 0 || total_pos == labels.len() {
                return Err(Error::Precondition("max-F1 threshold needs both classes".into()));
            }
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
            // Everything at or above the cut is positive. Walk cuts upward.
            let mut best_t = scores[order[0]];
            let mut best = f1(total_pos, labels.len() - total_pos, 0);
            let (mut pos_below, mut neg_below) = (0usize, 0usize);
            let mut i = 0;
            while i < order.len() {
                let s = scores[order[i]];
                while i < order.len() && scores[order[i]] == s {
                    if labels[order[i]] == 1 {
                        pos_below += 1;
                    } else {
                        neg_below += 1;
                    }
                    i += 1;
                }
                if i == order.len() {
                    break;
                }
                let cut = (s + scores[order[i]]) / 2.0;
                let tp = total_pos - pos_below;
                let fp = labels.len() - total_pos - neg_below;
                let v = f1(tp, fp, pos_below);
                if v > best {
                    best = v;
                    best_t = cut;
                }
            }
            Ok(best_t)
        }
    }
}
