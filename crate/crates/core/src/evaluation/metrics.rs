use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven reported metrics, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auroc,
    Sensitivity,
    Specificity,
    Ppv,
    Npv,
    F1,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Auroc,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Ppv,
        Metric::Npv,
        Metric::F1,
        Metric::Accuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Ppv => "ppv",
            Metric::Npv => "npv",
            Metric::F1 => "f1",
            Metric::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    /// Scores at or above `threshold` are called positive.
    pub fn from_scores(labels: &[u8], scores: &[f64], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&y, &s) in labels.iter().zip(scores) {
            match (y == 1, s >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Point values of the seven metrics; `None` marks an undefined metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub auroc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

impl MetricValues {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Auroc => self.auroc,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Ppv => self.ppv,
            Metric::Npv => self.npv,
            Metric::F1 => self.f1,
            Metric::Accuracy => self.accuracy,
        }
    }

    /// Threshold metrics from a confusion matrix (AUROC left unset).
    ///
    /// PPV/NPV are undefined on zero denominators. F1 is undefined when there
    /// are no actual positives and 0 when there are positives but no true
    /// positives.
    pub fn from_confusion(c: &Confusion) -> Self {
        let sensitivity = ratio(c.tp, c.tp + c.fn_);
        let f1 = if c.positives() == 0 {
            None
        } else {
            Some(2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64)
        };
        MetricValues {
            auroc: None,
            sensitivity,
            specificity: ratio(c.tn, c.tn + c.fp),
            ppv: ratio(c.tp, c.tp + c.fp),
            npv: ratio(c.tn, c.tn + c.fn_),
            f1,
            accuracy: ratio(c.tp + c.tn, c.n()),
        }
    }
}

pub(crate) fn check_inputs(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty prediction set".into()));
    }
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidInput(format!("label {y} is not binary")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {s}")));
    }
    Ok(())
}

/// AUROC plus the six threshold metrics. AUROC is `None` for single-class input.
pub fn compute_metrics(labels: &[u8], scores: &[f64], threshold: f64) -> Result<MetricValues> {
    check_inputs(labels, scores)?;
    let c = Confusion::from_scores(labels, scores, threshold);
    let mut m = MetricValues::from_confusion(&c);
    m.auroc = super::auroc::auroc(labels, scores).ok();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9], 0.5).unwrap();
        for metric in Metric::ALL {
            assert_eq!(m.get(metric), Some(1.0), "{metric:?}");
        }
    }

    #[test]
    fn hand_confusion() {
        let c = Confusion {
            tp: 3,
            fp: 1,
            tn: 5,
            fn_: 1,
        };
        let m = MetricValues::from_confusion(&c);
        assert_eq!(m.sensitivity, Some(0.75));
        assert!((m.specificity.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.ppv, Some(0.75));
        assert!((m.npv.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.f1, Some(0.75));
        assert_eq!(m.accuracy, Some(0.8));
    }

    #[test]
    fn all_negative_calls() {
        let m = compute_metrics(&[0, 1, 1], &[0.1, 0.2, 0.3], 0.9).unwrap();
        assert_eq!(m.ppv, None);
        assert_eq!(m.f1, Some(0.0));
        assert_eq!(m.sensitivity, Some(0.0));
    }

    #[test]
    fn threshold_ties_are_positive() {
        let c = Confusion::from_scores(&[1, 0], &[0.5, 0.5], 0.5);
        assert_eq!((c.tp, c.fp), (1, 1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_metrics(&[], &[], 0.5).is_err());
        assert!(compute_metrics(&[2], &[0.5], 0.5).is_err());
        assert!(compute_metrics(&[1], &[f64::NAN], 0.5).is_err());
    }
}
