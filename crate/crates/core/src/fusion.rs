//! Late fusion: the CXR model's probability becomes one more tabular feature.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::FeatureMatrix;
use crate::tabular::{
    fit_spec, random_search_cv, select_threshold, FoldAssignment, HyperSpace, SearchResult, ThresholdPolicy,
    TrainedTabular,
};

pub const FUSION_COLUMN: &str = "cxr_probability";

/// Which CXR model produced a probability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model", content = "name")]
pub enum ProbSource {
    /// The model whose validation fold was this index; it never trained on the row.
    Fold(usize),
    /// The model trained on the full development cohort.
    Final,
    External(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedProb {
    pub probability: f64,
    pub source: ProbSource,
}

/// Patient id -> CXR probability with provenance. Persisted as a sidecar JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CxrProbabilities {
    pub entries: BTreeMap<String, TaggedProb>,
}

impl CxrProbabilities {
    pub fn insert(&mut self, id: impl Into<String>, probability: f64, source: ProbSource) {
        self.entries.insert(id.into(), TaggedProb { probability, source });
    }

    pub fn probabilities(&self) -> BTreeMap<String, f64> {
        self.entries.iter().map(|(k, v)| (k.clone(), v.probability)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Append `cxr_probability` to an EHR matrix by id-keyed join. Row order is
/// the EHR order.
pub fn assemble_fusion_features(ehr: &FeatureMatrix, probs: &BTreeMap<String, f64>) -> Result<FeatureMatrix> {
    if ehr.column_index(FUSION_COLUMN).is_some() {
        return Err(Error::InvalidInput(format!("EHR matrix already has a '{FUSION_COLUMN}' column")));
    }
    let missing: Vec<&str> = ehr.ids.iter().filter(|id| !probs.contains_key(*id)).map(String::as_str).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!("no CXR probability for id(s) {missing:?}")));
    }
    if probs.len() != ehr.nrows() {
        let known: std::collections::BTreeSet<&String> = ehr.ids.iter().collect();
        let extra: Vec<&String> = probs.keys().filter(|k| !known.contains(k)).collect();
        return Err(Error::InvalidInput(format!("CXR probabilities for unknown id(s) {extra:?}")));
    }
    let mut col = Vec::with_capacity(ehr.nrows());
    for id in &ehr.ids {
        let p = probs[id];
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("CXR probability {p} for id {id} outside [0,1]")));
        }
        col.push(p);
    }
    let col = Array2::from_shape_vec((ehr.nrows(), 1), col).expect("column shape");
    let values = concatenate(Axis(1), &[ehr.values.view(), col.view()]).expect("row counts match");
    let mut columns = ehr.columns.clone();
    columns.push(FUSION_COLUMN.to_string());
    FeatureMatrix::new(columns, ehr.ids.clone(), values, ehr.outcome.clone())
}

/// Every row's probability must come from the fold model whose validation
/// fold holds that row.
pub fn check_leakage(ids: &[String], folds: &FoldAssignment, probs: &CxrProbabilities) -> Result<()> {
    if ids.len() != folds.len() {
        return Err(Error::InvalidInput("ids and folds differ in length".into()));
    }
    for (id, &f) in ids.iter().zip(&folds.folds) {
        let tag = probs
            .entries
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("no CXR probability for id {id}")))?;
        if tag.source != ProbSource::Fold(f) {
            return Err(Error::Leakage(format!(
                "CXR probability for {id} (fold {f}) comes from {:?}, which trained on that row",
                tag.source
            )));
        }
    }
    Ok(())
}

/// Result of fusion training: the fused matrix used for the search, the
/// leaderboard and the refit model.
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub matrix: FeatureMatrix,
    pub search: SearchResult,
    pub model: TrainedTabular,
}

/// Search the tabular zoo on EHR features plus out-of-fold CXR probabilities.
/// The winner is refit on `final_probs` when given (probabilities from the
/// full-data CXR model), else on the out-of-fold column. The threshold is
/// picked on the winner's pooled out-of-fold fusion scores.
#[allow(clippy::too_many_arguments)]
pub fn train_fusion(
    ehr: &FeatureMatrix,
    oof: &CxrProbabilities,
    final_probs: Option<&CxrProbabilities>,
    folds: &FoldAssignment,
    space: &HyperSpace,
    n_iter: usize,
    seed: u64,
    floor: f64,
    policy: ThresholdPolicy,
    exec: Execution,
) -> Result<FusionOutcome> {
    check_leakage(&ehr.ids, folds, oof)?;
    let matrix = assemble_fusion_features(ehr, &oof.probabilities())?;
    let y = matrix.labels()?;
    let search = random_search_cv(space, matrix.values.view(), &y, folds, n_iter, seed, floor, policy, exec)?;
    let spec = search.winner().spec;
    let refit = match final_probs {
        Some(p) => assemble_fusion_features(ehr, &p.probabilities())?,
        None => matrix.clone(),
    };
    let model = fit_spec(&spec, refit.values.view(), &y)?;
    let threshold = select_threshold(&search.oof_scores, &y, policy)?;
    let model = TrainedTabular { columns: matrix.columns.clone(), spec, model, threshold, threshold_policy: policy };
    Ok(FusionOutcome { matrix, search, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::compute_metrics;
    use crate::tabular::make_stratified_folds;
    use rand::Rng as _;

    fn ehr(n: usize, p: usize, seed: u64) -> FeatureMatrix {
        let mut rng = crate::rng::rng_from_seed(seed);
        let values = Array2::from_shape_fn((n, p), |_| rng.random::<f64>());
        let y: Vec<Option<u8>> = (0..n).map(|i| Some(u8::from(i % 4 == 0))).collect();
        FeatureMatrix::new(
            (0..p).map(|j| format!("f{j}")).collect(),
            (0..n).map(|i| format!("p{i}")).collect(),
            values,
            y,
        )
        .unwrap()
    }

    fn probs(m: &FeatureMatrix) -> BTreeMap<String, f64> {
        m.ids.iter().enumerate().map(|(i, id)| (id.clone(), i as f64 / m.nrows() as f64)).collect()
    }

    #[test]
    fn width_and_alignment() {
        let m = ehr(10, 23, 1);
        let f = assemble_fusion_features(&m, &probs(&m)).unwrap();
        assert_eq!((f.nrows(), f.ncols()), (10, 24));
        assert_eq!(f.columns.last().unwrap(), FUSION_COLUMN);
        for i in 0..10 {
            assert_eq!(f.values[[i, 23]], i as f64 / 10.0);
        }
        // Shuffle the rows, assemble, then restore: identical to assembling directly.
        let perm = [3, 7, 0, 9, 1, 4, 8, 2, 6, 5];
        let shuffled = assemble_fusion_features(&m.select_rows(&perm), &probs(&m)).unwrap();
        let mut inv = [0; 10];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        assert_eq!(shuffled.select_rows(&inv), f);
    }

    #[test]
    fn join_errors() {
        let m = ehr(10, 3, 1);
        let mut p = probs(&m);
        p.remove("p4");
        let err = assemble_fusion_features(&m, &p).unwrap_err().to_string();
        assert!(err.contains("p4"), "{err}");
        let mut p = probs(&m);
        p.insert("ghost".into(), 0.5);
        assert!(assemble_fusion_features(&m, &p).unwrap_err().to_string().contains("ghost"));
        let mut p = probs(&m);
        p.insert("p2".into(), 1.2);
        assert!(assemble_fusion_features(&m, &p).is_err());
    }

    fn tagged(m: &FeatureMatrix, folds: &FoldAssignment, value: impl Fn(usize) -> f64) -> CxrProbabilities {
        let mut c = CxrProbabilities::default();
        for (i, id) in m.ids.iter().enumerate() {
            c.insert(id.clone(), value(i), ProbSource::Fold(folds.folds[i]));
        }
        c
    }

    #[test]
    fn leakage_detected() {
        let m = ehr(40, 3, 2);
        let y = m.labels().unwrap();
        let folds = make_stratified_folds(&y, 4, 2020).unwrap();
        let mut c = tagged(&m, &folds, |_| 0.5);
        assert!(check_leakage(&m.ids, &folds, &c).is_ok());
        let wrong = (folds.folds[5] + 1) % 4;
        c.insert("p5", 0.5, ProbSource::Fold(wrong));
        assert!(matches!(check_leakage(&m.ids, &folds, &c), Err(Error::Leakage(_))));
        c.insert("p5", 0.5, ProbSource::Final);
        assert!(matches!(check_leakage(&m.ids, &folds, &c), Err(Error::Leakage(_))));
    }

    #[test]
    fn perfect_cxr_column_gives_perfect_f1() {
        let m = ehr(80, 4, 3);
        let y = m.labels().unwrap();
        let folds = make_stratified_folds(&y, 4, 2020).unwrap();
        let c = tagged(&m, &folds, |i| f64::from(y[i]));
        let out = train_fusion(
            &m,
            &c,
            None,
            &folds,
            &HyperSpace::logreg_only(),
            3,
            1,
            0.25,
            ThresholdPolicy::MaxF1,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(out.search.winner().mean_f1, 1.0);
        let scores = out.model.predict(&out.matrix).unwrap();
        assert_eq!(compute_metrics(&y, &scores, out.model.threshold).unwrap().f1, Some(1.0));
    }

    #[test]
    fn sidecar_roundtrip() {
        let mut c = CxrProbabilities::default();
        c.insert("a", 0.25, ProbSource::Fold(2));
        c.insert("b", 0.75, ProbSource::Final);
        c.insert("c", 0.5, ProbSource::External("hoboken".into()));
        assert_eq!(CxrProbabilities::from_json(&c.to_json().unwrap()).unwrap(), c);
    }
}
