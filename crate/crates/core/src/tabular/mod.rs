//! Tabular learners, stratified folds, randomized search and threshold choice.

mod folds;
mod gbtrees;
mod logreg;
mod model;
mod search;
mod space;
mod threshold;

pub use folds::{make_stratified_folds, FoldAssignment, DEFAULT_FOLDS};
pub use gbtrees::{fit_gbtrees, GbModel, GbParams, MaxFeatures, SplitCriterion, Tree};
pub use logreg::{
    fit_logreg_elasticnet, logreg_objective, sigmoid, softplus, LogRegParams, LogisticModel, Penalty,
    LOGREG_MAX_ITER, LOGREG_TOL,
};
pub use model::{fit_spec, TabularModel, TrainedTabular};
pub use search::{
    random_search_cv, select_winner, train_tabular, SearchEntry, SearchResult, DEFAULT_F1_FLOOR,
    DEFAULT_N_ITER,
};
pub use space::{
    GbSpace, HyperSpace, IntRange, LearnerKind, LearnerParams, LearnerSpec, LogRegSpace, Uniform,
};
pub use threshold::{select_threshold, ThresholdPolicy};
