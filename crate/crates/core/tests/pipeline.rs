use std::collections::BTreeMap;
use std::path::Path;

use fuseclin_core::artifact::sha256_file;
use fuseclin_core::error::Error;
use fuseclin_core::evaluation::{Metric, MetricsReport};
use fuseclin_core::pipeline::{run_all, run_stage, ExternalSite, PipelineConfig, RunManifest, SiteSummary, Stage};
use fuseclin_core::synth::SynthSpec;
use fuseclin_core::tabular::HyperSpace;
use fuseclin_core::Execution;

fn small_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        out_dir: out.to_path_buf(),
        synth: SynthSpec { n: 160, pos_rate: 0.2, seed: 11, excluded_rows: 4, ..SynthSpec::default() },
        external: vec![ExternalSite {
            name: "site_b".into(),
            paths: None,
            synth: Some(SynthSpec { n: 100, pos_rate: 0.45, seed: 12, site: "site_b".into(), ..SynthSpec::default() }),
        }],
        space: HyperSpace::logreg_only(),
        n_iter: 3,
        resamples: 200,
        ..PipelineConfig::default()
    };
    cfg.train.max_epochs = 6;
    cfg.shap.background = 20;
    cfg.shap.permutations = 100;
    cfg.shap.max_rows = Some(30);
    cfg
}

fn files_under(dir: &Path, base: &Path, out: &mut Vec<String>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(&p, base, out);
        } else {
            out.push(p.strip_prefix(base).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

fn hashes(out: &Path) -> BTreeMap<String, String> {
    RunManifest::load(out).unwrap().unwrap().artifact_hashes()
}

#[test]
fn full_run_is_deterministic_and_hash_listed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = small_config(a.path());
    run_all(&ca, Execution::Parallel).unwrap();
    run_all(&small_config(b.path()), Execution::Sequential).unwrap();
    let ha = hashes(a.path());
    assert_eq!(ha, hashes(b.path()));

    let mut files = Vec::new();
    files_under(a.path(), a.path(), &mut files);
    files.retain(|f| f != "manifest.json");
    files.sort();
    assert_eq!(files, ha.keys().cloned().collect::<Vec<_>>());
    for f in [
        "plan.json",
        "folds.json",
        "model_ehr.json",
        "model_cxr.json",
        "model_fusion.json",
        "metrics_ehr.json",
        "metrics_cxr.csv",
        "metrics_fusion.json",
        "metrics_site_b_fusion.json",
        "fairness_fusion_sex.json",
        "shap_fusion.csv",
        "shap_fusion_summary.json",
        "roc_fusion.csv",
        "roc_site_b_cxr.csv",
        "cohort_report.txt",
    ] {
        assert!(ha.contains_key(f), "{f} missing");
    }
    let rep: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("metrics_fusion.json")).unwrap()).unwrap();
    assert_eq!(rep.n, 160);
    assert!(rep.cell(Metric::Auroc).point.unwrap() > 0.6);
    let site: SiteSummary =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("external_site_b.json")).unwrap()).unwrap();
    assert!(site.prevalence_flag, "{site:?}");
    let m = RunManifest::load(a.path()).unwrap().unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("site_b")));

    // Re-evaluating the external site fits nothing: upstream artifacts keep their hashes.
    let frozen: Vec<&str> = vec!["plan.json", "model_ehr.json", "model_cxr.json", "model_fusion.json"];
    let before: Vec<String> = frozen.iter().map(|f| sha256_file(&a.path().join(f)).unwrap()).collect();
    run_stage(Stage::Evaluate, &ca, Execution::Parallel).unwrap();
    let after: Vec<String> = frozen.iter().map(|f| sha256_file(&a.path().join(f)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(hashes(a.path()), ha);

    // Edited upstream artifact is refused downstream.
    let plan = a.path().join("plan.json");
    let text = std::fs::read_to_string(&plan).unwrap();
    std::fs::write(&plan, text.replacen('{', "{ ", 1)).unwrap();
    let err = run_stage(Stage::Evaluate, &ca, Execution::Parallel).unwrap_err();
    assert!(matches!(err, Error::Stale(_)), "{err}");
    assert_eq!(err.exit_code(), 2);

    // Rerunning an upstream stage with another seed makes its consumers stale.
    let reseeded = PipelineConfig { seed: 99, ..ca.clone() };
    run_stage(Stage::Preprocess, &reseeded, Execution::Parallel).unwrap();
    let err = run_stage(Stage::Explain, &reseeded, Execution::Parallel).unwrap_err();
    assert!(matches!(err, Error::Stale(_)), "{err}");
}

#[test]
fn missing_upstream_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let err = run_stage(Stage::TrainEhr, &cfg, Execution::Sequential).unwrap_err();
    match &err {
        Error::MissingArtifact { stage, .. } => assert_eq!(stage, "preprocess"),
        e => panic!("unexpected {e}"),
    }
    assert_eq!(err.exit_code(), 2);
    let err = run_stage(Stage::Preprocess, &cfg, Execution::Sequential).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact { ref stage, .. } if stage == "synth"), "{err}");
}

#[test]
fn user_dataset_paths_must_exist() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.external.clear();
    cfg.dataset = Some(fuseclin_core::dataset::DatasetPaths::in_dir(&dir.path().join("nowhere")));
    let err = run_stage(Stage::Preprocess, &cfg, Execution::Sequential).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}
