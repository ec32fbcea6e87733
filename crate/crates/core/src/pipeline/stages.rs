use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExternalSite, ExtractorChoice, DEV_SITE};
use super::manifest::StageContext;
use super::Stage;
use crate::attribution::{background_rows, explain_matrix, ShapConfig};
use crate::cohort::{chi2_yates, cohort_report, ApplyReport, Cell, CohortTable, ExclusionCounts, PreprocessPlan, TestResult};
use crate::cxrnet::{
    gradcam_mean, predict_many, ConvTeacher, CxrExtractor, FeatureExtractor, ReferencePatchExtractor, TeacherExtractor,
    TrainConfig, TrainedCxrModel, GRADCAM_THRESHOLD,
};
use crate::dataset::{load_dataset, load_table};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate as evaluate_set, fairness_report, pool_folds, roc_points, write_roc_csv, PredictionSet};
use crate::experiment::{cxr_cross_fit, final_cxr, prepare_ehr, apply_frozen};
use crate::fusion::{assemble_fusion_features, train_fusion as fit_fusion, CxrProbabilities, ProbSource};
use crate::imaging::{precompute_variants, ImageStore, ImageTensor};
use crate::matrix::FeatureMatrix;
use crate::rng::{derive_seed, rng_from_seed};
use crate::synth::generate_cohort;
use crate::tabular::{make_stratified_folds, select_threshold, train_tabular, FoldAssignment, ThresholdPolicy, TrainedTabular};

const PLAN: &str = "plan.json";
const FOLDS: &str = "folds.json";
const FEATURES_EHR: &str = "features_ehr.csv";
const PREPROCESS: &str = "preprocess.json";
const IMAGE_STORE: &str = "image_store";
const MODEL_EHR: &str = "model_ehr.json";
const MODEL_CXR: &str = "model_cxr.json";
const MODEL_FUSION: &str = "model_fusion.json";
const CXR_OOF: &str = "cxr/probs_oof.json";
const CXR_FINAL: &str = "cxr/probs_final.json";
const FEATURES_FUSION: &str = "features_fusion.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Modality {
    Ehr,
    Cxr,
    Fusion,
}

impl Modality {
    const ALL: [Modality; 3] = [Modality::Ehr, Modality::Cxr, Modality::Fusion];

    fn name(self) -> &'static str {
        match self {
            Modality::Ehr => "ehr",
            Modality::Cxr => "cxr",
            Modality::Fusion => "fusion",
        }
    }

    fn stage(self) -> Stage {
        match self {
            Modality::Ehr => Stage::TrainEhr,
            Modality::Cxr => Stage::TrainCxr,
            Modality::Fusion => Stage::TrainFusion,
        }
    }

    fn oof(self) -> String {
        format!("oof_{}.json", self.name())
    }
}

fn site_pred(site: &str, m: Modality) -> String {
    format!("pred_{site}_{}.json", m.name())
}

/// Cohort counts written by the preprocess stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub rows: usize,
    pub positives: usize,
    pub prevalence: f64,
    pub exclusions: ExclusionCounts,
    pub clipped_vitals: usize,
    pub apply: ApplyReport,
}

/// The full-data CXR model with its operating threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CxrModelFile {
    pub model: TrainedCxrModel,
    pub threshold: f64,
    pub threshold_policy: ThresholdPolicy,
    pub epochs: usize,
    pub fold_best_epochs: Vec<usize>,
}

/// External-site prevalence against the development cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub site: String,
    pub rows: usize,
    pub positives: usize,
    pub prevalence: f64,
    pub dev_rows: usize,
    pub dev_positives: usize,
    pub dev_prevalence: f64,
    /// Yates chi-square of site x outcome; absent when a margin is zero.
    pub test: Option<TestResult>,
    pub alpha: f64,
    pub prevalence_flag: bool,
    pub exclusions: ExclusionCounts,
    pub apply: ApplyReport,
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn fold_provenance(folds: &FoldAssignment) -> Vec<String> {
    folds.folds.iter().map(|f| format!("fold{f}")).collect()
}

fn write_prediction(ctx: &mut StageContext, rel_json: &str, pred: &PredictionSet) -> Result<()> {
    ctx.write_json(rel_json, pred)?;
    let rel_csv = rel_json.replace(".json", ".csv");
    ctx.write(&rel_csv, &csv_bytes(|b| pred.write_csv(b))?)
}

fn read_folds(ctx: &mut StageContext, rows: usize) -> Result<FoldAssignment> {
    let folds: FoldAssignment = ctx.read_json(FOLDS, Stage::Preprocess)?;
    if folds.len() != rows {
        return Err(Error::Stale(format!("{FOLDS} has {} rows, features have {rows}; rerun stage 'preprocess'", folds.len())));
    }
    Ok(folds)
}

pub(super) fn synth(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    let mut jobs = Vec::new();
    if cfg.dataset.is_none() {
        jobs.push((DEV_SITE.to_string(), cfg.synth.clone()));
    }
    for site in &cfg.external {
        if let Some(spec) = &site.synth {
            jobs.push((site.name.clone(), spec.clone()));
        }
    }
    if jobs.is_empty() {
        ctx.warn("nothing to generate: every dataset is given by path");
    }
    for (name, spec) in jobs {
        let cohort = generate_cohort(&spec, ctx.exec)?;
        ctx.write_tree(&format!("synth/{name}"), |dir| cohort.write(dir).map(|_| ()))?;
    }
    Ok(())
}

fn dev_table(ctx: &mut StageContext) -> Result<CohortTable> {
    let (paths, synthetic) = ctx.cfg.dev_paths();
    ctx.dataset_input(&paths, synthetic, DEV_SITE)?;
    load_table(&paths, DEV_SITE, ctx.cfg.min_age)
}

pub(super) fn preprocess(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    let (paths, synthetic) = cfg.dev_paths();
    ctx.dataset_input(&paths, synthetic, DEV_SITE)?;
    let data = load_dataset(&paths, DEV_SITE, cfg.min_age, ctx.exec)?;
    let prep = prepare_ehr(&data.table, &cfg.vital_ranges, cfg.missing_threshold)?;
    let labels = prep.matrix.labels()?;
    let folds = make_stratified_folds(&labels, cfg.k, cfg.seed)?;
    let store = precompute_variants(&data.images, cfg.seed, ctx.exec)?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if prep.clipped_vitals > 0 {
        ctx.warn(format!("{} out-of-range vital readings set to missing", prep.clipped_vitals));
    }
    ctx.write(PLAN, prep.plan.to_json()?.as_bytes())?;
    ctx.write_json(FOLDS, &folds)?;
    ctx.write(FEATURES_EHR, &csv_bytes(|b| prep.matrix.write_csv(b))?)?;
    ctx.write_json(
        PREPROCESS,
        &PreprocessSummary {
            rows: labels.len(),
            positives,
            prevalence: positives as f64 / labels.len() as f64,
            exclusions: data.table.exclusions.clone(),
            clipped_vitals: prep.clipped_vitals,
            apply: prep.report,
        },
    )?;
    ctx.write_tree(IMAGE_STORE, |dir| store.save(dir).map(|_| ()))
}

pub(super) fn report(ctx: &mut StageContext) -> Result<()> {
    let table = dev_table(ctx)?;
    let rep = cohort_report(&table)?;
    ctx.write_json("cohort_report.json", &rep)?;
    ctx.write("cohort_report.txt", rep.to_text().as_bytes())
}

pub(super) fn train_ehr(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    let m = ctx.read_matrix(FEATURES_EHR, Stage::Preprocess)?;
    let folds = read_folds(ctx, m.nrows())?;
    let seed = derive_seed(cfg.seed, &[1]);
    let (search, model) = train_tabular(&cfg.space, &m, &folds, cfg.n_iter, seed, cfg.floor, cfg.policy, ctx.exec)?;
    if search.floor_warning {
        ctx.warn(format!("no EHR spec reached F1 > {} on every fold", cfg.floor));
    }
    let pred = PredictionSet::new(m.ids.clone(), m.labels()?, search.oof_scores.clone(), model.threshold, fold_provenance(&folds))?;
    ctx.write("search_ehr.json", search.to_json()?.as_bytes())?;
    ctx.write(MODEL_EHR, model.to_json()?.as_bytes())?;
    write_prediction(ctx, &Modality::Ehr.oof(), &pred)
}

fn extractor(ctx: &mut StageContext) -> Result<CxrExtractor> {
    let cfg = ctx.cfg;
    match cfg.extractor {
        ExtractorChoice::Reference => {
            let r = ReferencePatchExtractor::new(cfg.reference.input_size, cfg.reference.feature_dim)?;
            Ok(CxrExtractor::Reference(r))
        }
        ExtractorChoice::Teacher => {
            let path = cfg.teacher.as_ref().expect("validated");
            ctx.external_input(path)?;
            Ok(CxrExtractor::Teacher(TeacherExtractor::new(ConvTeacher::load(path)?, &cfg.teacher_options)?))
        }
    }
}

pub(super) fn train_cxr(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    let m = ctx.read_matrix(FEATURES_EHR, Stage::Preprocess)?;
    let folds = read_folds(ctx, m.nrows())?;
    let store = ImageStore::load(&ctx.read_tree(IMAGE_STORE, Stage::Preprocess)?)?;
    let extractor = extractor(ctx)?;
    let labels = m.labels()?;
    let train = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    let cross = cxr_cross_fit(&store, &m.ids, &labels, &folds, &extractor, &cfg.head, &train, ctx.exec)?;
    for (f, model) in cross.fold_models.iter().enumerate() {
        ctx.write(&format!("cxr/history_fold{f}.csv"), &csv_bytes(|b| model.write_history_csv(b))?)?;
    }
    let epochs = cross.final_epochs();
    let (model, final_probs) = final_cxr(&store, &m.ids, &labels, epochs, &extractor, &cfg.head, &train, ctx.exec)?;
    let threshold = select_threshold(&cross.scores, &labels, cfg.policy)?;
    ctx.write("cxr/history_final.csv", &csv_bytes(|b| model.write_history_csv(b))?)?;
    ctx.write(CXR_OOF, cross.oof.to_json()?.as_bytes())?;
    ctx.write(CXR_FINAL, final_probs.to_json()?.as_bytes())?;
    let pred = PredictionSet::new(m.ids.clone(), labels, cross.scores.clone(), threshold, fold_provenance(&folds))?;
    let file = CxrModelFile {
        model,
        threshold,
        threshold_policy: cfg.policy,
        epochs,
        fold_best_epochs: cross.best_epochs(),
    };
    ctx.write(MODEL_CXR, &serde_json::to_vec(&file)?)?;
    write_prediction(ctx, &Modality::Cxr.oof(), &pred)
}

pub(super) fn train_fusion(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    let m = ctx.read_matrix(FEATURES_EHR, Stage::Preprocess)?;
    let folds = read_folds(ctx, m.nrows())?;
    let oof: CxrProbabilities = ctx.read_json(CXR_OOF, Stage::TrainCxr)?;
    let fin: CxrProbabilities = ctx.read_json(CXR_FINAL, Stage::TrainCxr)?;
    let seed = derive_seed(cfg.seed, &[1]);
    let out = fit_fusion(&m, &oof, Some(&fin), &folds, &cfg.space, cfg.n_iter, seed, cfg.floor, cfg.policy, ctx.exec)?;
    if out.search.floor_warning {
        ctx.warn(format!("no fusion spec reached F1 > {} on every fold", cfg.floor));
    }
    let pred = PredictionSet::new(
        m.ids.clone(),
        m.labels()?,
        out.search.oof_scores.clone(),
        out.model.threshold,
        fold_provenance(&folds),
    )?;
    ctx.write(FEATURES_FUSION, &csv_bytes(|b| out.matrix.write_csv(b))?)?;
    ctx.write("search_fusion.json", out.search.to_json()?.as_bytes())?;
    ctx.write(MODEL_FUSION, out.model.to_json()?.as_bytes())?;
    write_prediction(ctx, &Modality::Fusion.oof(), &pred)
}

fn write_report(ctx: &mut StageContext, stem: &str, pred: &PredictionSet) -> Result<()> {
    let rep = evaluate_set(pred, stem, ctx.cfg.resamples, ctx.cfg.seed, ctx.exec)?;
    ctx.write_json(&format!("metrics_{stem}.json"), &rep)?;
    ctx.write(&format!("metrics_{stem}.csv"), &csv_bytes(|b| rep.write_csv(b))?)
}

pub(super) fn evaluate(ctx: &mut StageContext) -> Result<()> {
    for m in Modality::ALL {
        let pred: PredictionSet = ctx.read_json(&m.oof(), m.stage())?;
        write_report(ctx, m.name(), &pred)?;
        let mut by_fold: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, p) in pred.provenance.iter().enumerate() {
            by_fold.entry(p).or_default().push(i);
        }
        let parts: Vec<PredictionSet> = by_fold.values().map(|rows| pred.subset(rows)).collect();
        ctx.write_json(&format!("metrics_{}_folds.json", m.name()), &pool_folds(&parts)?)?;
    }
    let cfg = ctx.cfg;
    for site in &cfg.external {
        evaluate_site(ctx, site)?;
    }
    Ok(())
}

/// Score an external cohort with the frozen plan, models and thresholds.
fn evaluate_site(ctx: &mut StageContext, site: &ExternalSite) -> Result<()> {
    let cfg = ctx.cfg;
    let name = site.name.as_str();
    let plan = PreprocessPlan::from_json(&ctx.read_string(PLAN, Stage::Preprocess)?)?;
    let dev: PreprocessSummary = ctx.read_json(PREPROCESS, Stage::Preprocess)?;
    let ehr_model = TrainedTabular::from_json(&ctx.read_string(MODEL_EHR, Stage::TrainEhr)?)?;
    let cxr: CxrModelFile = ctx.read_json(MODEL_CXR, Stage::TrainCxr)?;
    let fusion_model = TrainedTabular::from_json(&ctx.read_string(MODEL_FUSION, Stage::TrainFusion)?)?;

    let (paths, synthetic) = cfg.site_paths(site);
    ctx.dataset_input(&paths, synthetic, name)?;
    let data = load_dataset(&paths, name, cfg.min_age, ctx.exec)?;
    let (matrix, apply) = apply_frozen(&data.table, &cfg.vital_ranges, &plan)?;
    let labels = matrix.labels()?;
    let ehr_scores = ehr_model.predict(&matrix)?;
    let imgs: Vec<&ImageTensor> = data.images.iter().map(|i| &i.image).collect();
    let cxr_scores = predict_many(&cxr.model, &imgs, ctx.exec)?;
    let mut probs = CxrProbabilities::default();
    for (id, &p) in matrix.ids.iter().zip(&cxr_scores) {
        probs.insert(id.clone(), p, ProbSource::External(name.to_string()));
    }
    let fusion_scores = fusion_model.predict(&assemble_fusion_features(&matrix, &probs.probabilities())?)?;
    ctx.write(&format!("cxr/probs_{name}.json"), probs.to_json()?.as_bytes())?;

    let runs = [
        (Modality::Ehr, ehr_scores, ehr_model.threshold),
        (Modality::Cxr, cxr_scores, cxr.threshold),
        (Modality::Fusion, fusion_scores, fusion_model.threshold),
    ];
    for (m, scores, threshold) in runs {
        let pred = PredictionSet::new(matrix.ids.clone(), labels.clone(), scores, threshold, vec![name.to_string(); labels.len()])?;
        write_prediction(ctx, &site_pred(name, m), &pred)?;
        write_report(ctx, &format!("{name}_{}", m.name()), &pred)?;
    }

    let positives = labels.iter().filter(|&&y| y == 1).count();
    let (n, dn) = (labels.len() as f64, dev.rows as f64);
    let (p, dp) = (positives as f64, dev.positives as f64);
    let test = chi2_yates([[dp, dn - dp], [p, n - p]]).ok();
    let prevalence_flag = test.is_some_and(|t| t.p_value < cfg.prevalence_alpha);
    let summary = SiteSummary {
        site: name.to_string(),
        rows: labels.len(),
        positives,
        prevalence: p / n,
        dev_rows: dev.rows,
        dev_positives: dev.positives,
        dev_prevalence: dev.prevalence,
        test,
        alpha: cfg.prevalence_alpha,
        prevalence_flag,
        exclusions: data.table.exclusions.clone(),
        apply,
    };
    if prevalence_flag {
        ctx.warn(format!(
            "site '{name}' mortality {:.1}% differs from development {:.1}% (p = {:.2e})",
            100.0 * summary.prevalence,
            100.0 * summary.dev_prevalence,
            test.map_or(f64::NAN, |t| t.p_value)
        ));
    }
    ctx.write_json(&format!("external_{name}.json"), &summary)
}

fn cell_label(c: &Cell) -> String {
    match c {
        Cell::Missing => "missing".into(),
        Cell::Num(v) => format!("{v}"),
        Cell::Text(s) => s.clone(),
    }
}

fn with_stratum(pred: PredictionSet, table: &CohortTable, key: &str, site: &str) -> Result<PredictionSet> {
    let col = table.column(key).ok_or_else(|| {
        Error::Precondition(format!("fairness attribute '{key}' is not a column of the {site} schema"))
    })?;
    let by_id: BTreeMap<&str, String> = table.ids.iter().map(String::as_str).zip(col.into_iter().map(cell_label)).collect();
    let values = pred
        .ids
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).cloned().ok_or_else(|| {
                Error::Stale(format!("patient {id} is no longer in the {site} dataset; rerun from 'preprocess'"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pred.with_stratum(key, values)
}

fn write_fairness(ctx: &mut StageContext, stem: &str, pred: &PredictionSet, key: &str) -> Result<()> {
    let reports = fairness_report(pred, key, ctx.cfg.resamples, ctx.cfg.seed, ctx.exec)?;
    ctx.write_json(&format!("fairness_{stem}_{key}.json"), &reports)?;
    let mut buf = Vec::new();
    for (i, (group, rep)) in reports.iter().enumerate() {
        let mut part = Vec::new();
        rep.write_csv(&mut part)?;
        let text = String::from_utf8(part).expect("csv is UTF-8");
        for (j, line) in text.lines().enumerate() {
            if j == 0 && i > 0 {
                continue;
            }
            let prefix = if j == 0 { key.to_string() } else { group.clone() };
            buf.extend_from_slice(format!("{prefix},{line}\n").as_bytes());
        }
    }
    ctx.write(&format!("fairness_{stem}_{key}.csv"), &buf)
}

pub(super) fn fairness(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    if cfg.fairness.is_empty() {
        ctx.warn("no fairness attributes configured");
        return Ok(());
    }
    let dev = dev_table(ctx)?;
    for m in Modality::ALL {
        let pred: PredictionSet = ctx.read_json(&m.oof(), m.stage())?;
        for key in &cfg.fairness {
            write_fairness(ctx, m.name(), &with_stratum(pred.clone(), &dev, key, DEV_SITE)?, key)?;
        }
    }
    for site in &cfg.external {
        let (paths, synthetic) = cfg.site_paths(site);
        ctx.dataset_input(&paths, synthetic, &site.name)?;
        let table = load_table(&paths, &site.name, cfg.min_age)?;
        for m in Modality::ALL {
            let pred: PredictionSet = ctx.read_json(&site_pred(&site.name, m), Stage::Evaluate)?;
            for key in &cfg.fairness {
                let stem = format!("{}_{}", site.name, m.name());
                write_fairness(ctx, &stem, &with_stratum(pred.clone(), &table, key, &site.name)?, key)?;
            }
        }
    }
    Ok(())
}

fn explain_model(ctx: &mut StageContext, name: &str, m: &FeatureMatrix, model: &TrainedTabular) -> Result<()> {
    let cfg = ctx.cfg;
    let shap = ShapConfig {
        background: background_rows(m, cfg.shap.background, derive_seed(cfg.seed, &[2])),
        exact_limit: cfg.shap.exact_limit,
        n_permutations: cfg.shap.permutations,
        seed: cfg.seed,
    };
    let rows = cfg.shap.max_rows.filter(|&r| r < m.nrows()).map(|r| {
        let mut idx = rand::seq::index::sample(&mut rng_from_seed(derive_seed(cfg.seed, &[3])), m.nrows(), r).into_vec();
        idx.sort_unstable();
        idx
    });
    let f = |z: &[f64]| model.model.predict_row(z);
    let s = explain_matrix(&f, m, rows.as_deref(), &shap, ctx.exec)?;
    ctx.write(&format!("shap_{name}.csv"), &csv_bytes(|b| s.write_csv(b))?)?;
    ctx.write(&format!("shap_{name}_summary.json"), s.summary_json()?.as_bytes())
}

pub(super) fn explain(ctx: &mut StageContext) -> Result<()> {
    let ehr = ctx.read_matrix(FEATURES_EHR, Stage::Preprocess)?;
    let ehr_model = TrainedTabular::from_json(&ctx.read_string(MODEL_EHR, Stage::TrainEhr)?)?;
    explain_model(ctx, "ehr", &ehr, &ehr_model)?;
    let fused = ctx.read_matrix(FEATURES_FUSION, Stage::TrainFusion)?;
    let fusion_model = TrainedTabular::from_json(&ctx.read_string(MODEL_FUSION, Stage::TrainFusion)?)?;
    explain_model(ctx, "fusion", &fused, &fusion_model)?;

    let cxr: CxrModelFile = ctx.read_json(MODEL_CXR, Stage::TrainCxr)?;
    if !cxr.model.extractor.differentiable() {
        ctx.warn("Grad-CAM skipped: the reference extractor is not differentiable");
        return Ok(());
    }
    let probs: CxrProbabilities = ctx.read_json(CXR_FINAL, Stage::TrainCxr)?;
    let store = ImageStore::load(&ctx.read_tree(IMAGE_STORE, Stage::Preprocess)?)?;
    let images: Vec<ImageTensor> =
        ehr.ids.iter().map(|id| store.get(id).map(|e| e.original().clone())).collect::<Result<_>>()?;
    let p: Vec<f64> = ehr
        .ids
        .iter()
        .map(|id| probs.entries.get(id).map(|t| t.probability).ok_or_else(|| Error::Stale(format!("no CXR probability for {id}"))))
        .collect::<Result<_>>()?;
    match gradcam_mean(&cxr.model, &images, &ehr.labels()?, &p, GRADCAM_THRESHOLD) {
        Ok(cam) => {
            let mut csv = String::new();
            for y in 0..cam.height() {
                let row: Vec<String> = (0..cam.width()).map(|x| format!("{:?}", cam.get(y, x))).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            ctx.write("gradcam_mean.csv", csv.as_bytes())?;
            ctx.write("gradcam_mean.png", &cam.png_bytes()?)
        }
        Err(Error::Precondition(msg)) => {
            ctx.warn(format!("Grad-CAM skipped: {msg}"));
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn write_roc(ctx: &mut StageContext, stem: &str, pred: &PredictionSet) -> Result<()> {
    match roc_points(&pred.labels, &pred.scores) {
        Ok(points) => ctx.write(&format!("roc_{stem}.csv"), &csv_bytes(|b| write_roc_csv(&points, b))?),
        Err(e) => {
            ctx.warn(format!("no ROC curve for {stem}: {e}"));
            Ok(())
        }
    }
}

pub(super) fn roc(ctx: &mut StageContext) -> Result<()> {
    let cfg = ctx.cfg;
    for m in Modality::ALL {
        let pred: PredictionSet = ctx.read_json(&m.oof(), m.stage())?;
        write_roc(ctx, m.name(), &pred)?;
    }
    for site in &cfg.external {
        for m in Modality::ALL {
            let pred: PredictionSet = ctx.read_json(&site_pred(&site.name, m), Stage::Evaluate)?;
            write_roc(ctx, &format!("{}_{}", site.name, m.name()), &pred)?;
        }
    }
    Ok(())
}
