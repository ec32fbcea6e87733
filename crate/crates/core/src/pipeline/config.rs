use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{DEFAULT_BACKGROUND, DEFAULT_EXACT_LIMIT, DEFAULT_PERMUTATIONS, MAX_EXACT_LIMIT, MIN_PERMUTATIONS};
use crate::cohort::VitalRanges;
use crate::cxrnet::{HeadConfig, ReferencePatchExtractor, TeacherOptions, TrainConfig};
use crate::dataset::DatasetPaths;
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_RESAMPLES;
use crate::experiment::DEFAULT_MISSING_THRESHOLD;
use crate::rng::DEFAULT_SEED;
use crate::synth::SynthSpec;
use crate::tabular::{HyperSpace, ThresholdPolicy, DEFAULT_F1_FLOOR, DEFAULT_FOLDS, DEFAULT_N_ITER};

/// Name of the development cohort in artifact names and provenance.
pub const DEV_SITE: &str = "dev";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorChoice {
    #[default]
    Reference,
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapSettings {
    pub background: usize,
    pub permutations: usize,
    pub exact_limit: usize,
    /// Explain a seeded random subset of this many rows; all rows when unset.
    pub max_rows: Option<usize>,
}

impl Default for ShapSettings {
    fn default() -> Self {
        Self {
            background: DEFAULT_BACKGROUND,
            permutations: DEFAULT_PERMUTATIONS,
            exact_limit: DEFAULT_EXACT_LIMIT,
            max_rows: None,
        }
    }
}

/// A held-out cohort evaluated with the frozen plan and models. Either
/// `paths` points at an existing dataset or `synth` describes one that the
/// synth stage generates under `<out>/synth/<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSite {
    pub name: String,
    #[serde(default)]
    pub paths: Option<DatasetPaths>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Development dataset; the synth stage output when unset.
    pub dataset: Option<DatasetPaths>,
    pub synth: SynthSpec,
    pub external: Vec<ExternalSite>,
    pub min_age: f64,
    pub vital_ranges: VitalRanges,
    pub missing_threshold: f64,
    pub k: usize,
    pub resamples: usize,
    pub n_iter: usize,
    pub floor: f64,
    pub space: HyperSpace,
    pub policy: ThresholdPolicy,
    pub extractor: ExtractorChoice,
    pub reference: ReferencePatchExtractor,
    /// Teacher weights JSON, required when `extractor` is `teacher`.
    pub teacher: Option<PathBuf>,
    pub teacher_options: TeacherOptions,
    pub head: HeadConfig,
    pub train: TrainConfig,
    /// Attributes reported by the fairness stage.
    pub fairness: Vec<String>,
    pub shap: ShapSettings,
    /// Significance level of the prevalence-shift flag on external sites.
    pub prevalence_alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            dataset: None,
            synth: SynthSpec::default(),
            external: Vec::new(),
            min_age: 16.0,
            vital_ranges: VitalRanges::default(),
            missing_threshold: DEFAULT_MISSING_THRESHOLD,
            k: DEFAULT_FOLDS,
            resamples: DEFAULT_RESAMPLES,
            n_iter: DEFAULT_N_ITER,
            floor: DEFAULT_F1_FLOOR,
            space: HyperSpace::default(),
            policy: ThresholdPolicy::MaxF1,
            extractor: ExtractorChoice::Reference,
            reference: ReferencePatchExtractor::default(),
            teacher: None,
            teacher_options: TeacherOptions::default(),
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            fairness: vec!["sex".into()],
            shap: ShapSettings::default(),
            prevalence_alpha: 0.05,
        }
    }
}

fn safe_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PipelineConfig {
    /// Parse a JSON config; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Precondition(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Precondition(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(cfg.resolve(base))
    }

    pub fn resolve(mut self, base: &Path) -> Self {
        let r = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        self.out_dir = r(&self.out_dir);
        self.teacher = self.teacher.as_ref().map(r);
        self.dataset = self.dataset.map(|d| d.resolve(base));
        for site in &mut self.external {
            site.paths = site.paths.take().map(|d| d.resolve(base));
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.k < 2 {
            return bad(format!("k = {} must be at least 2", self.k));
        }
        if self.n_iter == 0 {
            return bad("n_iter must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.missing_threshold) || !(0.0..1.0).contains(&self.prevalence_alpha) {
            return bad("missing_threshold and prevalence_alpha must lie in [0, 1]".into());
        }
        if self.extractor == ExtractorChoice::Teacher && self.teacher.is_none() {
            return bad("extractor 'teacher' needs a 'teacher' weights path".into());
        }
        if self.shap.background == 0 || self.shap.permutations < MIN_PERMUTATIONS {
            return bad(format!("shap needs a background and at least {MIN_PERMUTATIONS} permutations"));
        }
        if self.shap.exact_limit > MAX_EXACT_LIMIT {
            return bad(format!("shap.exact_limit exceeds {MAX_EXACT_LIMIT}"));
        }
        let mut names = BTreeSet::new();
        for site in &self.external {
            if !safe_name(&site.name) || site.name == DEV_SITE {
                return bad(format!("invalid external site name '{}'", site.name));
            }
            if !names.insert(site.name.as_str()) {
                return bad(format!("external site '{}' listed twice", site.name));
            }
            if site.paths.is_some() == site.synth.is_some() {
                return bad(format!("external site '{}' needs exactly one of 'paths' or 'synth'", site.name));
            }
        }
        for key in &self.fairness {
            if !safe_name(key) {
                return bad(format!("invalid fairness attribute '{key}'"));
            }
        }
        self.space.validate().map_err(|e| Error::Precondition(e.to_string()))?;
        self.head.validate().map_err(|e| Error::Precondition(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(())
    }

    pub fn needs_synth(&self) -> bool {
        self.dataset.is_none() || self.external.iter().any(|s| s.synth.is_some())
    }

    pub(crate) fn synth_dir(&self, site: &str) -> PathBuf {
        self.out_dir.join("synth").join(site)
    }

    /// Development dataset paths and whether the synth stage produces them.
    pub(crate) fn dev_paths(&self) -> (DatasetPaths, bool) {
        match &self.dataset {
            Some(d) => (d.clone(), false),
            None => (DatasetPaths::in_dir(&self.synth_dir(DEV_SITE)), true),
        }
    }

    pub(crate) fn site_paths(&self, site: &ExternalSite) -> (DatasetPaths, bool) {
        match &site.paths {
            Some(d) => (d.clone(), false),
            None => (DatasetPaths::in_dir(&self.synth_dir(&site.name)), true),
        }
    }
}
