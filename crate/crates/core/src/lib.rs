//! Divide-and-conquer patch-level classification for whole-slide images.
//!
//! The pipeline partitions patches into three sets from region annotations
//! (A: tumor patches, B: benign patches of cancerous slides, C: patches of
//! benign slides), rebalances the majority sets with information-theoretic
//! cluster-based stratified sampling, trains three binary sub-problem
//! classifiers, and fuses their outputs with five integration strategies.

pub mod classifier;
pub mod clustering;
pub mod divergence;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod geometry;
pub mod manifest;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, Result};
pub use rng::RngSeed;
