use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bootstrap::{point_and_ci, Interval};
use super::metrics::{compute_metrics, Metric, MetricValues};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Scored patients with labels, strata attributes and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub threshold: f64,
    /// Attribute name -> per-row value (e.g. "sex" -> ["M", "F", ...]).
    #[serde(default)]
    pub strata: BTreeMap<String, Vec<String>>,
    /// Per-row origin: fold index ("fold0") or external site name.
    pub provenance: Vec<String>,
}

impl PredictionSet {
    pub fn new(
        ids: Vec<String>,
        labels: Vec<u8>,
        scores: Vec<f64>,
        threshold: f64,
        provenance: Vec<String>,
    ) -> Result<Self> {
        let n = ids.len();
        if labels.len() != n || scores.len() != n || provenance.len() != n {
            return Err(Error::InvalidInput("prediction set columns differ in length".into()));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidInput(format!("threshold {threshold} outside [0,1]")));
        }
        Ok(Self {
            ids,
            labels,
            scores,
            threshold,
            strata: BTreeMap::new(),
            provenance,
        })
    }

    pub fn with_stratum(mut self, key: &str, values: Vec<String>) -> Result<Self> {
        if values.len() != self.ids.len() {
            return Err(Error::InvalidInput(format!("stratum '{key}' has wrong length")));
        }
        self.strata.insert(key.to_string(), values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> PredictionSet {
        PredictionSet {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            scores: rows.iter().map(|&i| self.scores[i]).collect(),
            threshold: self.threshold,
            strata: self
                .strata
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
            provenance: rows.iter().map(|&i| self.provenance[i].clone()).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["id", "label", "score", "provenance"];
        let keys: Vec<&String> = self.strata.keys().collect();
        header.extend(keys.iter().map(|s| s.as_str()));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.ids[i].clone(),
                self.labels[i].to_string(),
                format!("{:?}", self.scores[i]),
                self.provenance[i].clone(),
            ];
            rec.extend(keys.iter().map(|k| self.strata[*k][i].clone()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One metric cell: point estimate with percentile interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub point: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MetricCell {
    pub fn is_available(&self) -> bool {
        self.point.is_some() && self.lo.is_some()
    }
}

/// Seven metrics with bootstrap 95% intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub n: usize,
    pub positives: usize,
    pub prevalence: f64,
    pub threshold: f64,
    pub resamples: usize,
    pub seed: u64,
    pub metrics: BTreeMap<Metric, MetricCell>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn cell(&self, m: Metric) -> &MetricCell {
        &self.metrics[&m]
    }

    /// Flat CSV: `metric,point,lo,hi,note`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["metric", "point", "lo", "hi", "note"])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for m in Metric::ALL {
            let c = self.cell(m);
            wtr.write_record([
                m.name().to_string(),
                f(c.point),
                f(c.lo),
                f(c.hi),
                c.note.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evaluate a prediction set: point metrics plus bootstrap intervals.
pub fn evaluate(
    pred: &PredictionSet,
    label: &str,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<MetricsReport> {
    let (point, ci) = point_and_ci(&pred.labels, &pred.scores, pred.threshold, resamples, seed, exec)?;
    let positives = pred.labels.iter().filter(|&&y| y == 1).count();
    let mut notes = Vec::new();
    if positives == 0 {
        notes.push("no positive cases: sensitivity, PPV, F1 and AUROC unavailable".to_string());
    }
    if positives == pred.len() {
        notes.push("no negative cases: specificity, NPV and AUROC unavailable".to_string());
    }
    notes.push("PPV/NPV undefined on zero denominators; F1 = 0 when positives exist but none are called".into());
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let p = point.get(m);
            let iv = ci.get(m);
            let no_pos = positives == 0
                && matches!(m, Metric::Sensitivity | Metric::Ppv | Metric::F1 | Metric::Auroc);
            let no_neg = positives == pred.len()
                && matches!(m, Metric::Specificity | Metric::Npv | Metric::Auroc);
            if no_pos || no_neg {
                let why = if no_pos { "no positive cases" } else { "no negative cases" };
                return (
                    m,
                    MetricCell {
                        point: None,
                        lo: None,
                        hi: None,
                        note: Some(why.to_string()),
                    },
                );
            }
            let (lo, hi, note) = match (p, iv) {
                (None, _) => (None, None, Some(format!("{} undefined on this set", m.name()))),
                (Some(_), Interval::Available { low, high, .. }) => (Some(*low), Some(*high), None),
                (Some(_), Interval::Unavailable { reason, .. }) => (None, None, Some(reason.clone())),
            };
            (
                m,
                MetricCell {
                    point: p,
                    lo,
                    hi,
                    note,
                },
            )
        })
        .collect();
    Ok(MetricsReport {
        label: label.to_string(),
        n: pred.len(),
        positives,
        prevalence: positives as f64 / pred.len() as f64,
        threshold: pred.threshold,
        resamples,
        seed,
        metrics,
        notes,
    })
}

/// Pooled out-of-fold predictions with the per-fold metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledFolds {
    pub pooled: PredictionSet,
    pub per_fold: Vec<MetricValues>,
    /// Mean of each metric over the folds where it is defined.
    pub fold_mean: BTreeMap<Metric, Option<f64>>,
}

/// Concatenate disjoint per-fold prediction sets (each patient exactly once).
pub fn pool_folds(folds: &[PredictionSet]) -> Result<PooledFolds> {
    let first = folds
        .first()
        .ok_or_else(|| Error::InvalidInput("no folds to pool".into()))?;
    let mut seen = BTreeSet::new();
    let mut pooled = PredictionSet {
        ids: Vec::new(),
        labels: Vec::new(),
        scores: Vec::new(),
        threshold: first.threshold,
        strata: first.strata.keys().map(|k| (k.clone(), Vec::new())).collect(),
        provenance: Vec::new(),
    };
    let mut per_fold = Vec::with_capacity(folds.len());
    for f in folds {
        if f.threshold != first.threshold {
            return Err(Error::InvalidInput("folds use different thresholds".into()));
        }
        if f.strata.keys().ne(first.strata.keys()) {
            return Err(Error::InvalidInput("folds carry different strata".into()));
        }
        for id in &f.ids {
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidInput(format!("id '{id}' appears in more than one fold")));
            }
        }
        pooled.ids.extend(f.ids.iter().cloned());
        pooled.labels.extend(&f.labels);
        pooled.scores.extend(&f.scores);
        pooled.provenance.extend(f.provenance.iter().cloned());
        for (k, v) in &f.strata {
            pooled.strata.get_mut(k).unwrap().extend(v.iter().cloned());
        }
        per_fold.push(compute_metrics(&f.labels, &f.scores, f.threshold)?);
    }
    let fold_mean = Metric::ALL
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = per_fold.iter().filter_map(|v| v.get(m)).collect();
            (m, (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect();
    Ok(PooledFolds {
        pooled,
        per_fold,
        fold_mean,
    })
}

/// Full metric suite per stratum value (e.g. male / female).
pub fn fairness_report(
    pred: &PredictionSet,
    stratum_key: &str,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<BTreeMap<String, MetricsReport>> {
    let values = pred.strata.get(stratum_key).ok_or_else(|| {
        Error::InvalidInput(format!("stratum attribute '{stratum_key}' missing"))
    })?;
    if let Some(i) = values.iter().position(|v| v.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "patient {} has no '{stratum_key}' value",
            pred.ids[i]
        )));
    }
    let groups: BTreeSet<&String> = values.iter().collect();
    let mut out = BTreeMap::new();
    for g in groups {
        let rows: Vec<usize> = (0..pred.len()).filter(|&i| &values[i] == g).collect();
        let sub = pred.subset(&rows);
        let rep = evaluate(&sub, &format!("{stratum_key}={g}"), resamples, seed, exec)?;
        out.insert(g.clone(), rep);
    }
    Ok(out)
}
