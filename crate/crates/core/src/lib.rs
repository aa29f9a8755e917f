//! Extreme-instance contrastive representation learning for severely
//! imbalanced multivariate time series classification.
//!
//! The pipeline compresses every instance into a catch22 feature vector,
//! picks one extreme feature vector per class by complete linkage, trains a
//! recurrent embedder to map raw sequences onto their class extreme, and
//! classifies the learned embeddings with a light downstream head.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
mod error;
pub mod embedder;
pub mod extremes;
pub mod features;
pub mod heads;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod rng;

pub use data::{LabelScheme, LabeledDataset, MvtsInstance};
pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureBank, FeatureVector};
