//! Semi-supervised classification with adaptive per-class confidence margins.
//!
//! Labeled data trains a classifier with cross-entropy. Unlabeled samples are
//! seen through two weak views and one strong view; the averaged weak-view
//! prediction is compared against a per-class margin learned from the labeled
//! data. Confident samples get a hard pseudo label applied to the strong view,
//! the rest feed a contrastive objective on the weak-view embeddings.

pub mod augment;
pub mod data;
pub mod error;
pub mod losses;
pub mod margin;
pub mod metrics;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
