//! Tabular EHR ingestion, cleaning, preprocessing and cohort reporting.

mod preprocess;
mod report;
mod schema;
pub mod stats;
mod table;
mod vitals;

pub use preprocess::{apply_preprocess, fit_preprocess, ApplyReport, PreprocessPlan, PLAN_VERSION};
pub use report::{cohort_report, CohortReport, GroupSummary, VariableRow, GROUP_NAMES};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema};
pub use stats::{anova_oneway, chi2_yates, TestResult};
pub use table::{load_cohort, load_cohort_from_reader, Cell, CohortTable, ExclusionCounts, LoadOptions};
pub use vitals::{clip_vitals, VitalRanges};
