//! Chest X-ray model: feature extractors, classification head, training
//! loop with early stopping, and Grad-CAM aggregation.

mod adam;
mod extractor;
mod gradcam;
mod head;
mod teacher;
mod train;

pub use adam::{Adam, AdamConfig};
pub use extractor::{CxrExtractor, FeatureExtractor, ReferencePatchExtractor, DEFAULT_FEATURE_DIM, REFERENCE_GRID};
pub use gradcam::{gradcam, gradcam_mean, GRADCAM_THRESHOLD};
pub use head::{
    forward_bce, init_head, weighted_bce, Activation, BiasInit, ClassWeights, Dense, Head, HeadConfig,
    HeadGrads, DEFAULT_LEAKY_SLOPE,
};
pub use teacher::{ConvLayer, ConvTeacher, Maps, TeacherCache, TeacherExtractor, TeacherOptions};
pub use train::{
    predict_cxr, predict_many, train_cxr, train_cxr_fixed, CxrSplit, EpochMetrics, EpochRecord, TrainConfig, TrainedCxrModel,
};
