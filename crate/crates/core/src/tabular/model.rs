use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::gbtrees::{fit_gbtrees, GbModel};
use super::logreg::{fit_logreg_elasticnet, LogisticModel};
use super::space::{LearnerParams, LearnerSpec};
use super::threshold::ThresholdPolicy;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// A fitted tabular learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TabularModel {
    LogregElasticnet(LogisticModel),
    GradBoostTrees(GbModel),
}

impl TabularModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            TabularModel::LogregElasticnet(m) => m.predict_row(row),
            TabularModel::GradBoostTrees(m) => m.predict_row(row),
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        match self {
            TabularModel::LogregElasticnet(m) => m.predict_proba(x),
            TabularModel::GradBoostTrees(m) => m.predict_proba(x),
        }
    }
}

pub fn fit_spec(spec: &LearnerSpec, x: ArrayView2<f64>, y: &[u8]) -> Result<TabularModel> {
    Ok(match &spec.params {
        LearnerParams::LogregElasticnet(p) => {
            TabularModel::LogregElasticnet(fit_logreg_elasticnet(x, y, p)?)
        }
        LearnerParams::GradBoostTrees(p) => {
            TabularModel::GradBoostTrees(fit_gbtrees(x, y, p, spec.seed)?)
        }
    })
}

/// Model artifact: the fitted learner with its input columns and frozen
/// operating threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedTabular {
    pub columns: Vec<String>,
    pub spec: LearnerSpec,
    pub model: TabularModel,
    pub threshold: f64,
    pub threshold_policy: ThresholdPolicy,
}

impl TrainedTabular {
    /// Probabilities for a matrix whose columns must match the training columns.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.columns != self.columns {
            return Err(Error::Schema(format!(
                "model expects columns {:?}, got {:?}",
                self.columns, m.columns
            )));
        }
        Ok(self.model.predict_proba(m.values.view()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
