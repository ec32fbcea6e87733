use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::schema::ColumnKind;
use super::stats::{median, quantile};
use super::table::{Cell, CohortTable};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const PLAN_VERSION: u32 = 1;

/// Fitted preprocessing state, frozen on the development cohort.
///
/// Maps are `BTreeMap`s so the JSON form has a canonical key order and
/// hashes stably.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub version: u32,
    pub missing_threshold: f64,
    pub dropped: Vec<String>,
    /// Retained continuous columns in schema order.
    pub numeric: Vec<String>,
    /// Retained categorical columns in schema order.
    pub categorical: Vec<String>,
    pub medians: BTreeMap<String, f64>,
    pub modes: BTreeMap<String, String>,
    pub scale_center: BTreeMap<String, f64>,
    pub scale_spread: BTreeMap<String, f64>,
    /// Continuous columns with zero spread; their scaled output is 0.
    pub degenerate: Vec<String>,
    pub onehot_categories: BTreeMap<String, Vec<String>>,
    /// Output column order of the feature matrix.
    pub output_columns: Vec<String>,
}

/// Side information produced while applying a plan to a table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    /// Plan columns absent from the target table, emitted as constant zeros.
    pub zero_fill_columns: Vec<String>,
    /// Per categorical column, number of rows holding a category unseen in development.
    pub unseen_categories: BTreeMap<String, usize>,
    pub imputed_cells: usize,
}

fn onehot_name(column: &str, category: &str) -> String {
    format!("{column}={category}")
}

impl PreprocessPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: PreprocessPlan = serde_json::from_str(s)?;
        if plan.version != PLAN_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported plan version {}",
                plan.version
            )));
        }
        Ok(plan)
    }
}

/// Fit the preprocessing plan on the development table.
pub fn fit_preprocess(dev: &CohortTable, missing_threshold: f64) -> Result<PreprocessPlan> {
    if dev.len() < 2 {
        return Err(Error::Precondition(format!(
            "development table needs at least 2 rows, has {}",
            dev.len()
        )));
    }
    if dev.outcomes().iter().any(Option::is_none) {
        return Err(Error::Precondition("development table has rows without outcome".into()));
    }
    if !(0.0..=1.0).contains(&missing_threshold) {
        return Err(Error::InvalidInput(format!(
            "missing threshold {missing_threshold} outside [0,1]"
        )));
    }

    let n = dev.len() as f64;
    let mut plan = PreprocessPlan {
        version: PLAN_VERSION,
        missing_threshold,
        dropped: Vec::new(),
        numeric: Vec::new(),
        categorical: Vec::new(),
        medians: BTreeMap::new(),
        modes: BTreeMap::new(),
        scale_center: BTreeMap::new(),
        scale_spread: BTreeMap::new(),
        degenerate: Vec::new(),
        onehot_categories: BTreeMap::new(),
        output_columns: Vec::new(),
    };

    for (j, spec) in dev.schema.columns().iter().enumerate() {
        if !spec.kind.is_feature() {
            continue;
        }
        let cells: Vec<&Cell> = dev.rows.iter().map(|r| &r[j]).collect();
        let missing = cells.iter().filter(|c| c.is_missing()).count() as f64;
        if missing / n > missing_threshold {
            plan.dropped.push(spec.name.clone());
            continue;
        }
        let name = spec.name.clone();
        if spec.kind.is_continuous() {
            let observed: Vec<f64> = cells.iter().filter_map(|c| c.as_num()).collect();
            if observed.is_empty() {
                return Err(Error::InvalidInput(format!("column '{name}' has no observed values")));
            }
            if observed.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "column '{name}' has fewer than 2 observed values; spread undefined"
                )));
            }
            let med = median(&observed);
            // robust scale over the imputed development column
            let imputed: Vec<f64> = cells.iter().map(|c| c.as_num().unwrap_or(med)).collect();
            let center = median(&imputed);
            let spread = quantile(&imputed, 0.75) - quantile(&imputed, 0.25);
            if spread == 0.0 {
                plan.degenerate.push(name.clone());
            }
            plan.medians.insert(name.clone(), med);
            plan.scale_center.insert(name.clone(), center);
            plan.scale_spread.insert(name.clone(), spread.max(0.0));
            plan.output_columns.push(name.clone());
            plan.numeric.push(name);
        } else {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for c in &cells {
                if let Some(s) = c.as_text() {
                    *counts.entry(s).or_default() += 1;
                }
            }
            if counts.is_empty() {
                return Err(Error::InvalidInput(format!("column '{name}' has no observed values")));
            }
            // most frequent; ties resolved toward the lexicographically smallest category
            let mode = counts
                .iter()
                .fold(None::<(&str, usize)>, |best, (&k, &v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((k, v)),
                })
                .map(|(k, _)| k.to_string())
                .unwrap();
            let cats: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
            for c in &cats {
                plan.output_columns.push(onehot_name(&name, c));
            }
            plan.modes.insert(name.clone(), mode);
            plan.onehot_categories.insert(name.clone(), cats);
            plan.categorical.push(name);
        }
    }
    Ok(plan)
}

enum Block<'a> {
    Numeric {
        src: Option<usize>,
        median: f64,
        center: f64,
        spread: f64,
    },
    Categorical {
        name: &'a str,
        src: Option<usize>,
        mode: &'a str,
        cats: &'a [String],
    },
}

/// Apply a fitted plan: impute, one-hot encode, robust-scale. Output columns
/// follow `plan.output_columns`.
pub fn apply_preprocess(
    table: &CohortTable,
    plan: &PreprocessPlan,
) -> Result<(FeatureMatrix, ApplyReport)> {
    let unique: BTreeSet<&String> = table.ids.iter().collect();
    if unique.len() != table.ids.len() {
        return Err(Error::InvalidInput("id collision in target table".into()));
    }

    let mut report = ApplyReport::default();
    let mut blocks = Vec::new();
    let numeric: BTreeSet<&str> = plan.numeric.iter().map(String::as_str).collect();

    // Reconstruct block order from output_columns (schema order at fit time).
    let mut emitted = BTreeSet::new();
    for col in &plan.output_columns {
        let base = if numeric.contains(col.as_str()) {
            col.as_str()
        } else {
            col.split_once('=').map(|(b, _)| b).unwrap_or(col)
        };
        if !emitted.insert(base.to_string()) {
            continue;
        }
        let src = if table.is_present(base) {
            table.schema.index_of(base)
        } else {
            report.zero_fill_columns.push(base.to_string());
            None
        };
        if numeric.contains(base) {
            if let Some(j) = src {
                let kind = table.schema.columns()[j].kind;
                if !kind.is_continuous() {
                    return Err(Error::Schema(format!(
                        "plan treats '{base}' as continuous but table declares {kind:?}"
                    )));
                }
            }
            blocks.push(Block::Numeric {
                src,
                median: plan.medians[base],
                center: plan.scale_center[base],
                spread: plan.scale_spread[base],
            });
        } else {
            if let Some(j) = src {
                let kind = table.schema.columns()[j].kind;
                if kind != ColumnKind::Categorical {
                    return Err(Error::Schema(format!(
                        "plan treats '{base}' as categorical but table declares {kind:?}"
                    )));
                }
            }
            let (name, mode) = plan
                .modes
                .get_key_value(base)
                .ok_or_else(|| Error::Schema(format!("plan has no mode for '{base}'")))?;
            blocks.push(Block::Categorical {
                name,
                src,
                mode,
                cats: &plan.onehot_categories[base],
            });
        }
    }

    let nrows = table.len();
    let ncols = plan.output_columns.len();
    let mut values = Array2::<f64>::zeros((nrows, ncols));
    for (i, row) in table.rows.iter().enumerate() {
        let mut col = 0;
        for b in &blocks {
            match b {
                Block::Numeric {
                    src,
                    median,
                    center,
                    spread,
                } => {
                    if let Some(j) = src {
                        let x = match row[*j] {
                            Cell::Num(v) => v,
                            _ => {
                                report.imputed_cells += 1;
                                *median
                            }
                        };
                        values[[i, col]] = if *spread > 0.0 {
                            (x - center) / spread
                        } else {
                            0.0
                        };
                    }
                    col += 1;
                }
                Block::Categorical {
                    name,
                    src,
                    mode,
                    cats,
                } => {
                    if let Some(j) = src {
                        let v = match &row[*j] {
                            Cell::Text(s) => s.as_str(),
                            _ => {
                                report.imputed_cells += 1;
                                mode
                            }
                        };
                        match cats.iter().position(|c| c == v) {
                            Some(k) => values[[i, col + k]] = 1.0,
                            None => {
                                *report
                                    .unseen_categories
                                    .entry(name.to_string())
                                    .or_default() += 1
                            }
                        }
                    }
                    col += cats.len();
                }
            }
        }
        debug_assert_eq!(col, ncols);
    }
    for (name, n) in &report.unseen_categories {
        log::warn!("{n} row(s) with unseen category in '{name}' encoded as all-zeros");
    }

    let m = FeatureMatrix::new(
        plan.output_columns.clone(),
        table.ids.clone(),
        values,
        table.outcomes(),
    )?;
    Ok((m, report))
}
