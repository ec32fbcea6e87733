use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{anova_oneway, chi2_contingency, mean, sample_sd};
use super::table::{Cell, CohortTable};
use crate::error::Result;

pub const GROUP_NAMES: [&str; 2] = ["alive", "expired"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSummary {
    Categorical {
        n: usize,
        missing: usize,
        /// category -> (count, percent of observed)
        counts: BTreeMap<String, (usize, f64)>,
    },
    Numeric {
        n: usize,
        missing: usize,
        mean: Option<f64>,
        sd: Option<f64>,
    },
}

impl GroupSummary {
    pub fn missing(&self) -> usize {
        match self {
            GroupSummary::Categorical { missing, .. } | GroupSummary::Numeric { missing, .. } => {
                *missing
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRow {
    pub name: String,
    pub missing: usize,
    pub overall: GroupSummary,
    /// Indexed by outcome: alive, expired.
    pub groups: [GroupSummary; 2],
    pub test: Option<String>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

/// Cohort characteristics split by outcome, with hypothesis tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub provenance: String,
    pub n: usize,
    pub group_sizes: [usize; 2],
    pub variables: Vec<VariableRow>,
    pub warnings: Vec<String>,
}

fn summarize(cells: &[&Cell], continuous: bool) -> GroupSummary {
    let n = cells.len();
    let missing = cells.iter().filter(|c| c.is_missing()).count();
    if continuous {
        let v: Vec<f64> = cells.iter().filter_map(|c| c.as_num()).collect();
        GroupSummary::Numeric {
            n,
            missing,
            mean: (!v.is_empty()).then(|| mean(&v)),
            sd: (!v.is_empty()).then(|| sample_sd(&v)),
        }
    } else {
        let mut raw: BTreeMap<String, usize> = BTreeMap::new();
        for c in cells {
            if let Some(s) = c.as_text() {
                *raw.entry(s.to_string()).or_default() += 1;
            }
        }
        let observed = (n - missing).max(1) as f64;
        GroupSummary::Categorical {
            n,
            missing,
            counts: raw
                .into_iter()
                .map(|(k, c)| (k, (c, 100.0 * c as f64 / observed)))
                .collect(),
        }
    }
}

/// Summarize every feature column by outcome group and test for differences:
/// chi-square (Yates-corrected for 2x2) for categorical columns, one-way ANOVA
/// for continuous columns.
pub fn cohort_report(table: &CohortTable) -> Result<CohortReport> {
    let outcomes = table.outcomes();
    let mut warnings = Vec::new();
    let mut group_rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(y) = o {
            group_rows[*y as usize].push(i);
        }
    }
    let unlabeled = outcomes.iter().filter(|o| o.is_none()).count();
    if unlabeled > 0 {
        warnings.push(format!("{unlabeled} row(s) without outcome are excluded from group columns"));
    }
    let testable = group_rows.iter().all(|g| !g.is_empty());
    if !testable {
        warnings.push("single-class table: p-values omitted".into());
    }

    let mut variables = Vec::new();
    for (j, spec) in table.schema.columns().iter().enumerate() {
        if !spec.kind.is_feature() || table.absent.contains(&spec.name) {
            continue;
        }
        let continuous = spec.kind.is_continuous();
        let all: Vec<&Cell> = table.rows.iter().map(|r| &r[j]).collect();
        let by_group: Vec<Vec<&Cell>> = group_rows
            .iter()
            .map(|g| g.iter().map(|&i| &table.rows[i][j]).collect())
            .collect();
        let overall = summarize(&all, continuous);
        let groups = [
            summarize(&by_group[0], continuous),
            summarize(&by_group[1], continuous),
        ];

        let mut test = None;
        let mut statistic = None;
        let mut p_value = None;
        if testable {
            let result = if continuous {
                test = Some("anova".to_string());
                let vals: Vec<Vec<f64>> = by_group
                    .iter()
                    .map(|g| g.iter().filter_map(|c| c.as_num()).collect())
                    .collect();
                if vals.iter().any(|v| v.len() < 2) {
                    warnings.push(format!(
                        "'{}': a group has fewer than 2 observed values; p omitted",
                        spec.name
                    ));
                    None
                } else {
                    anova_oneway(&vals).ok()
                }
            } else {
                let cats: Vec<String> = match &overall {
                    GroupSummary::Categorical { counts, .. } => counts.keys().cloned().collect(),
                    _ => unreachable!(),
                };
                test = Some(if cats.len() == 2 { "chi2_yates" } else { "chi2" }.to_string());
                let observed: Vec<usize> = by_group
                    .iter()
                    .map(|g| g.iter().filter(|c| !c.is_missing()).count())
                    .collect();
                if observed.iter().any(|&n| n < 2) {
                    warnings.push(format!(
                        "'{}': a group has fewer than 2 observed values; p omitted",
                        spec.name
                    ));
                    None
                } else if cats.len() < 2 {
                    None
                } else {
                    let tab: Vec<Vec<f64>> = groups
                        .iter()
                        .map(|g| match g {
                            GroupSummary::Categorical { counts, .. } => cats
                                .iter()
                                .map(|c| counts.get(c).map_or(0.0, |x| x.0 as f64))
                                .collect(),
                            _ => unreachable!(),
                        })
                        .collect();
                    chi2_contingency(&tab).ok()
                }
            };
            if let Some(r) = result {
                statistic = Some(r.statistic);
                p_value = Some(r.p_value);
            }
        }

        variables.push(VariableRow {
            name: spec.name.clone(),
            missing: overall.missing(),
            overall,
            groups,
            test,
            statistic,
            p_value,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(CohortReport {
        provenance: table.provenance.clone(),
        n: table.len(),
        group_sizes: [group_rows[0].len(), group_rows[1].len()],
        variables,
        warnings,
    })
}

fn fmt_group(g: &GroupSummary) -> String {
    match g {
        GroupSummary::Numeric { mean, sd, .. } => match (mean, sd) {
            (Some(m), Some(s)) => format!("{m:.1} ({s:.1})"),
            _ => "-".into(),
        },
        GroupSummary::Categorical { counts, .. } => {
            // Binary 0/1 variables show the positive level only.
            if let Some((c, pct)) = counts.get("1") {
                format!("{c} ({pct:.1})")
            } else {
                counts
                    .iter()
                    .map(|(k, (c, pct))| format!("{k}: {c} ({pct:.1})"))
                    .collect::<Vec<_>>()
                    .join("; ")
            }
        }
    }
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        None => "-".into(),
        Some(p) if p < 0.001 => "<0.001".into(),
        Some(p) => format!("{p:.3}"),
    }
}

impl CohortReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Cohort {} (n = {}; alive {}, expired {})",
            self.provenance, self.n, self.group_sizes[0], self.group_sizes[1]
        );
        let _ = writeln!(
            s,
            "{:<28} {:>8} {:>22} {:>22} {:>22} {:>8}",
            "Variable", "Missing", "Overall", "Alive", "Expired", "p"
        );
        for v in &self.variables {
            let _ = writeln!(
                s,
                "{:<28} {:>8} {:>22} {:>22} {:>22} {:>8}",
                v.name,
                v.missing,
                fmt_group(&v.overall),
                fmt_group(&v.groups[0]),
                fmt_group(&v.groups[1]),
                fmt_p(v.p_value)
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
