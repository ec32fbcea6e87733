//! Stage-by-stage pipeline over one output directory. Every artifact is
//! written atomically and recorded with its SHA-256 in `manifest.json`.

mod config;
mod manifest;
mod stages;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExternalSite, ExtractorChoice, PipelineConfig, ShapSettings, DEV_SITE};
pub use manifest::{ArtifactRecord, RunManifest, StageRecord, MANIFEST_FILE};
pub use stages::{CxrModelFile, PreprocessSummary, SiteSummary};

use crate::error::{Error, Result};
use crate::exec::Execution;
use manifest::StageContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Synth,
    Preprocess,
    Report,
    TrainEhr,
    TrainCxr,
    TrainFusion,
    Evaluate,
    Fairness,
    Explain,
    Roc,
}

impl Stage {
    /// Execution order of a full run.
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Preprocess,
        Stage::Report,
        Stage::TrainEhr,
        Stage::TrainCxr,
        Stage::TrainFusion,
        Stage::Evaluate,
        Stage::Fairness,
        Stage::Explain,
        Stage::Roc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::Report => "report",
            Stage::TrainEhr => "train-ehr",
            Stage::TrainCxr => "train-cxr",
            Stage::TrainFusion => "train-fusion",
            Stage::Evaluate => "evaluate",
            Stage::Fairness => "fairness",
            Stage::Explain => "explain",
            Stage::Roc => "roc",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage '{s}'")))
    }
}

/// What one stage wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

/// Run one stage against `cfg.out_dir`, then update the manifest.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, exec: Execution) -> Result<StageSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut ctx = StageContext::open(cfg, stage, exec)?;
    match stage {
        Stage::Synth => stages::synth(&mut ctx)?,
        Stage::Preprocess => stages::preprocess(&mut ctx)?,
        Stage::Report => stages::report(&mut ctx)?,
        Stage::TrainEhr => stages::train_ehr(&mut ctx)?,
        Stage::TrainCxr => stages::train_cxr(&mut ctx)?,
        Stage::TrainFusion => stages::train_fusion(&mut ctx)?,
        Stage::Evaluate => stages::evaluate(&mut ctx)?,
        Stage::Fairness => stages::fairness(&mut ctx)?,
        Stage::Explain => stages::explain(&mut ctx)?,
        Stage::Roc => stages::roc(&mut ctx)?,
    }
    ctx.commit(start.elapsed().as_secs_f64())
}

/// Every stage in order. The synth stage is skipped when the configuration
/// names a development dataset and no synthetic external site.
pub fn run_all(cfg: &PipelineConfig, exec: Execution) -> Result<Vec<StageSummary>> {
    Stage::ALL
        .into_iter()
        .filter(|&s| s != Stage::Synth || cfg.needs_synth())
        .map(|s| run_stage(s, cfg, exec))
        .collect()
}
