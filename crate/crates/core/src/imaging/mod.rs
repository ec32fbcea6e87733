//! Radiograph pathway: anatomical bounding-box augmentation, online
//! augmentation, resizing and the offline view store.

mod augment;
mod bbox;
mod resize;
mod store;
mod tensor;

pub use augment::{
    adjust_brightness, apply_bbox_variant, flip_lr, online_augment, AugmentVariant, OnlineAugment,
    FLIP_PROBABILITY, MAX_BRIGHTNESS_DELTA,
};
pub use bbox::{BBox, BBoxSet};
pub use resize::{bilinear_resize_raw, resize};
pub use store::{precompute_variants, sample_training_view, ImageInput, ImageStore, StoreEntry};
pub use tensor::{ImageTensor, MIN_SIDE};
