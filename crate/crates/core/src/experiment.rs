//! The modelling protocol shared by the pipeline stages and the in-memory
//! experiment runner: preprocessing, fold-wise CXR training with out-of-fold
//! probabilities, and the EHR / CXR / fusion comparison.

use serde::{Deserialize, Serialize};

use crate::attribution::{background_rows, explain_matrix, rank_features, RankedFeature, ShapConfig};
use crate::cohort::{apply_preprocess, clip_vitals, fit_preprocess, ApplyReport, CohortTable, PreprocessPlan, VitalRanges};
use crate::cxrnet::{
    predict_many, train_cxr, train_cxr_fixed, CxrExtractor, CxrSplit, HeadConfig, ReferencePatchExtractor,
    TrainConfig, TrainedCxrModel,
};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, compute_metrics};
use crate::exec::Execution;
use crate::fusion::{train_fusion, CxrProbabilities, ProbSource};
use crate::imaging::{precompute_variants, ImageStore, ImageTensor};
use crate::matrix::FeatureMatrix;
use crate::rng::derive_seed;
use crate::synth::SynthCohort;
use crate::tabular::{
    make_stratified_folds, random_search_cv, select_threshold, FoldAssignment, HyperSpace, ThresholdPolicy,
    DEFAULT_F1_FLOOR, DEFAULT_FOLDS,
};

pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.5;

/// Output of the EHR preprocessing step on the development cohort.
#[derive(Debug, Clone)]
pub struct PreparedEhr {
    pub matrix: FeatureMatrix,
    pub plan: PreprocessPlan,
    pub report: ApplyReport,
    pub clipped_vitals: usize,
}

/// Clip vitals, fit the plan on `table` and apply it.
pub fn prepare_ehr(table: &CohortTable, ranges: &VitalRanges, missing_threshold: f64) -> Result<PreparedEhr> {
    let (clean, clipped_vitals) = clip_vitals(table, ranges)?;
    let plan = fit_preprocess(&clean, missing_threshold)?;
    let (matrix, report) = apply_preprocess(&clean, &plan)?;
    Ok(PreparedEhr { matrix, plan, report, clipped_vitals })
}

/// Apply a frozen plan to another cohort; nothing is refit.
pub fn apply_frozen(table: &CohortTable, ranges: &VitalRanges, plan: &PreprocessPlan) -> Result<(FeatureMatrix, ApplyReport)> {
    let (clean, _) = clip_vitals(table, ranges)?;
    apply_preprocess(&clean, plan)
}

/// F1 on one fold at that fold's own threshold (0 when undefined).
pub fn fold_f1(scores: &[f64], labels: &[u8], folds: &FoldAssignment, policy: ThresholdPolicy) -> Result<Vec<f64>> {
    (0..folds.k)
        .map(|f| {
            let idx = folds.valid_indices(f);
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let t = select_threshold(&s, &y, policy)?;
            Ok(compute_metrics(&y, &s, t)?.f1.unwrap_or(0.0))
        })
        .collect()
}

/// Fold-wise CXR training: the model for fold `f` trains on the other folds
/// and early-stops on fold `f`, whose probabilities it then supplies.
#[derive(Debug, Clone)]
pub struct CxrCrossFit {
    pub oof: CxrProbabilities,
    /// Out-of-fold probabilities in row order.
    pub scores: Vec<f64>,
    pub fold_models: Vec<TrainedCxrModel>,
}

impl CxrCrossFit {
    pub fn best_epochs(&self) -> Vec<usize> {
        self.fold_models.iter().map(|m| m.best_epoch).collect()
    }

    /// Epoch count for the full-data model: the rounded mean of the fold
    /// models' best epoch counts.
    pub fn final_epochs(&self) -> usize {
        let n: usize = self.fold_models.iter().map(|m| m.best_epoch + 1).sum();
        ((n as f64 / self.fold_models.len() as f64).round() as usize).max(1)
    }
}

fn entries(ids: &[String], labels: &[u8], rows: &[usize]) -> Vec<(String, u8)> {
    rows.iter().map(|&i| (ids[i].clone(), labels[i])).collect()
}

pub fn cxr_cross_fit(
    store: &ImageStore,
    ids: &[String],
    labels: &[u8],
    folds: &FoldAssignment,
    extractor: &CxrExtractor,
    head: &HeadConfig,
    train: &TrainConfig,
    exec: Execution,
) -> Result<CxrCrossFit> {
    if ids.len() != labels.len() || ids.len() != folds.len() {
        return Err(Error::InvalidInput("ids, labels and folds differ in length".into()));
    }
    let mut scores = vec![0.0; ids.len()];
    let mut oof = CxrProbabilities::default();
    let mut fold_models = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let split = CxrSplit {
            train: entries(ids, labels, &folds.train_indices(f)),
            valid: entries(ids, labels, &folds.valid_indices(f)),
        };
        let cfg = TrainConfig { seed: derive_seed(train.seed, &[f as u64]), ..train.clone() };
        let model = train_cxr(store, &split, extractor.clone(), head, &cfg, exec)?;
        let rows = folds.valid_indices(f);
        let imgs: Vec<&ImageTensor> =
            rows.iter().map(|&i| store.get(&ids[i]).map(|e| e.original())).collect::<Result<_>>()?;
        for (&i, p) in rows.iter().zip(predict_many(&model, &imgs, exec)?) {
            scores[i] = p;
            oof.insert(ids[i].clone(), p, ProbSource::Fold(f));
        }
        fold_models.push(model);
    }
    Ok(CxrCrossFit { oof, scores, fold_models })
}

/// Train the full-data CXR model for `epochs` epochs and score every patient.
pub fn final_cxr(
    store: &ImageStore,
    ids: &[String],
    labels: &[u8],
    epochs: usize,
    extractor: &CxrExtractor,
    head: &HeadConfig,
    train: &TrainConfig,
    exec: Execution,
) -> Result<(TrainedCxrModel, CxrProbabilities)> {
    let all: Vec<usize> = (0..ids.len()).collect();
    let cfg = TrainConfig { max_epochs: epochs, ..train.clone() };
    let model = train_cxr_fixed(store, &entries(ids, labels, &all), extractor.clone(), head, &cfg, exec)?;
    let imgs: Vec<&ImageTensor> = ids.iter().map(|id| store.get(id).map(|e| e.original())).collect::<Result<_>>()?;
    let mut probs = CxrProbabilities::default();
    for (id, p) in ids.iter().zip(predict_many(&model, &imgs, exec)?) {
        probs.insert(id.clone(), p, ProbSource::Final);
    }
    Ok((model, probs))
}

/// Settings of the in-memory EHR / CXR / fusion comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub k: usize,
    pub n_iter: usize,
    pub floor: f64,
    pub space: HyperSpace,
    pub policy: ThresholdPolicy,
    pub vital_ranges: VitalRanges,
    pub missing_threshold: f64,
    pub extractor: ReferencePatchExtractor,
    pub head: HeadConfig,
    pub train: TrainConfig,
    /// Background size and permutation budget for fusion attributions;
    /// `None` skips attribution.
    pub shap: Option<(usize, usize)>,
    /// Attribute at most this many rows.
    pub shap_rows: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: crate::rng::DEFAULT_SEED,
            k: DEFAULT_FOLDS,
            n_iter: 10,
            floor: DEFAULT_F1_FLOOR,
            space: HyperSpace::logreg_only(),
            policy: ThresholdPolicy::MaxF1,
            vital_ranges: VitalRanges::default(),
            missing_threshold: DEFAULT_MISSING_THRESHOLD,
            extractor: ReferencePatchExtractor::default(),
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            shap: None,
            shap_rows: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityResult {
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
    /// AUROC of the pooled out-of-fold probabilities.
    pub auroc: f64,
}

impl ModalityResult {
    fn new(fold_f1: Vec<f64>, labels: &[u8], scores: &[f64]) -> Result<Self> {
        let mean_f1 = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
        Ok(Self { fold_f1, mean_f1, auroc: auroc(labels, scores)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub ehr: ModalityResult,
    pub cxr: ModalityResult,
    pub fusion: ModalityResult,
    pub fusion_ranking: Option<Vec<RankedFeature>>,
}

/// Run the internal-validation protocol on a synthetic cohort held in memory.
pub fn run_experiment(cohort: &SynthCohort, cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutcome> {
    let table = cohort.table()?;
    let ehr = prepare_ehr(&table, &cfg.vital_ranges, cfg.missing_threshold)?;
    let labels = ehr.matrix.labels()?;
    let folds = make_stratified_folds(&labels, cfg.k, cfg.seed)?;
    let search_seed = derive_seed(cfg.seed, &[1]);

    let ehr_search = random_search_cv(
        &cfg.space,
        ehr.matrix.values.view(),
        &labels,
        &folds,
        cfg.n_iter,
        search_seed,
        cfg.floor,
        cfg.policy,
        exec,
    )?;
    let ehr_result = ModalityResult::new(ehr_search.winner().fold_f1.clone(), &labels, &ehr_search.oof_scores)?;

    let store = precompute_variants(&cohort.image_inputs(), cfg.seed, exec)?;
    let extractor = CxrExtractor::Reference(cfg.extractor.clone());
    let train = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    let cross = cxr_cross_fit(&store, &ehr.matrix.ids, &labels, &folds, &extractor, &cfg.head, &train, exec)?;
    let cxr_result = ModalityResult::new(fold_f1(&cross.scores, &labels, &folds, cfg.policy)?, &labels, &cross.scores)?;

    let final_probs = match cfg.shap {
        Some(_) => {
            let epochs = cross.final_epochs();
            Some(final_cxr(&store, &ehr.matrix.ids, &labels, epochs, &extractor, &cfg.head, &train, exec)?.1)
        }
        None => None,
    };
    let fusion = train_fusion(
        &ehr.matrix,
        &cross.oof,
        final_probs.as_ref(),
        &folds,
        &cfg.space,
        cfg.n_iter,
        search_seed,
        cfg.floor,
        cfg.policy,
        exec,
    )?;
    let fusion_result =
        ModalityResult::new(fusion.search.winner().fold_f1.clone(), &labels, &fusion.search.oof_scores)?;

    let fusion_ranking = match cfg.shap {
        Some((bg, perms)) => {
            let m = &fusion.matrix;
            let mut shap_cfg = ShapConfig::new(background_rows(m, bg, derive_seed(cfg.seed, &[2])), cfg.seed);
            shap_cfg.n_permutations = perms;
            let rows: Vec<usize> = (0..m.nrows().min(cfg.shap_rows)).collect();
            let model = &fusion.model.model;
            let f = |z: &[f64]| model.predict_row(z);
            let s = explain_matrix(&f, m, Some(&rows), &shap_cfg, exec)?;
            Some(rank_features(&s)?)
        }
        None => None,
    };
    Ok(ExperimentOutcome { ehr: ehr_result, cxr: cxr_result, fusion: fusion_result, fusion_ranking })
}
