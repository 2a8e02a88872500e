//! Prototype classifier with logarithmic (Weber-Fechner) scoring.
//!
//! - [`dataset`]: IDX parsing and unit-sphere normalization
//! - [`transforms`]: shift/rotation banks and transform-max similarity
//! - [`perception`]: the per-class log-series score
//! - [`classifier`]: model storage, argmax classification, evaluation
//! - [`trainer`]: greedy unit growth and rank-scaled repulsion updates
//! - [`model_io`]: the `WFC1` model file format

pub mod classifier;
pub mod dataset;
pub mod model_io;
pub mod perception;
pub mod trainer;
pub mod transforms;
pub mod vector;

pub use classifier::{classify, evaluate, ClassifyError, Classification, ConfusionMatrix, Model, Unit};
pub use dataset::{normalize, parse_idx_images, parse_idx_labels, DatasetError, Image, Sample};
pub use model_io::{deserialize_model, serialize_model, ModelFileError};
pub use perception::{log_series_reference, score, ClassResponse, SeriesConfig};
pub use trainer::{train, update_units, TrainConfig, TrainTrace};
pub use transforms::{build_bank, max_similarity, Transform, TransformBank, TransformSpec};
