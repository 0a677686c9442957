//! # reid-rank
//!
//! Post-processing and evaluation for vehicle re-identification rankings,
//! operating on precomputed embeddings:
//!
//! - [`distance`]: pairwise Euclidean distances, ensemble averaging, metadata fusion
//! - [`rerank`]: k-reciprocal re-ranking with Jaccard distance, track averaging
//! - [`losses`]: triplet (all-triplets and batch-hard), label-smoothed softmax, TriSoft
//! - [`gradcheck`]: finite-difference verification of the loss gradients
//! - [`fusion`]: channel-mask fusion of global and local feature maps
//! - [`eval`]: average precision, mAP and CMC Rank@k
//! - [`synth`]: seeded synthetic datasets
//! - [`dataset`]: the `REID` binary matrix format and text manifests
//!
//! Each capability has a runnable program under `examples/`:
//!
//! ```bash
//! cargo run --example rerank_pipeline
//! ```
//!
//! The `reid-rank` binary exposes the same stages on files.

pub mod cli;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradcheck;
pub mod losses;
pub mod matrix;
pub mod pipeline;
pub mod rerank;
pub mod synth;

pub use dataset::{Dataset, ItemManifest, ItemRecord, MetadataFeatureSet, Split};
pub use error::{ReidError, Result};
pub use matrix::{DistanceMatrix, EmbeddingMatrix, Matrix};
