//! Unsupervised object discovery: presence detection, category clustering,
//! and the extended-category map consumed by the perception and reasoning
//! networks.
//!
//! Hunter's objects are cell-aligned sprites on a static background, so
//! presence detection is exact background subtraction per grid cell. The
//! category predictor is a PCA projection of the detected patches followed
//! by k-means clustering; once fitted it is immutable and deterministic.

pub mod background;
pub mod kmeans;
pub mod pca;
pub mod predictor;

pub use background::{collect_dataset, extract_patch, fit_background, stream_dataset, Background};
pub use kmeans::kmeans;
pub use pca::Pca;
pub use predictor::{
    confuse, extended_category, fit_predictor, fit_uod, CategoryPredictor, PatchDataset,
    PresenceMap, UodSettings,
};
