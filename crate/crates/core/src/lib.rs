//! Multi-modal 30-day mortality risk modelling: tabular EHR preprocessing,
//! chest X-ray augmentation and classification, tabular learners with
//! stratified cross-validated random search, late fusion, bootstrap
//! evaluation, fairness strata and Shapley attribution.

pub mod artifact;
pub mod attribution;
pub mod cohort;
pub mod cxrnet;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod exec;
pub mod fusion;
pub mod imaging;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matrix::FeatureMatrix;
