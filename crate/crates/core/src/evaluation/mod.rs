//! Metrics, bootstrap intervals, fold pooling, fairness strata and ROC curves.

mod auroc;
mod bootstrap;
mod metrics;
mod report;

pub use auroc::{auroc, roc_points, trapezoid_area};
pub use bootstrap::{
    bootstrap_ci, point_and_ci, BootstrapCi, Interval, DEFAULT_RESAMPLES, MIN_RESAMPLES,
    MIN_VALID_FRACTION,
};
pub use metrics::{compute_metrics, Confusion, Metric, MetricValues};
pub use report::{
    evaluate, fairness_report, pool_folds, MetricCell, MetricsReport, PooledFolds, PredictionSet,
};

use std::io::Write;

/// ROC points as `fpr,tpr` CSV.
pub fn write_roc_csv<W: Write>(points: &[(f64, f64)], w: W) -> crate::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fpr", "tpr"])?;
    for (f, t) in points {
        wtr.write_record([format!("{f:?}"), format!("{t:?}")])?;
    }
    wtr.flush()?;
    Ok(())
}
