//! Pairwise Euclidean distances, model-ensemble averaging and metadata fusion.
//!
//! Every entry is accumulated in ascending feature order on a single thread,
//! so results are bitwise identical for any rayon pool size.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::matrix::{DistanceMatrix, EmbeddingMatrix, Matrix};

/// `out[i][j] = ‖a_i − b_j‖₂`.
pub fn pairwise_euclidean(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<DistanceMatrix> {
    if a.cols() != b.cols() {
        return Err(ReidError::DimensionMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    if b.rows() == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(b.rows())
        .enumerate()
        .for_each(|(i, row)| {
            let x = a.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                let y = b.row(j);
                let mut acc = 0.0;
                for k in 0..x.len() {
                    let d = x[k] - y[k];
                    acc += d * d;
                }
                *slot = acc.sqrt();
            }
        });
    Ok(out)
}

/// Square all-pairs distances over one item set.
pub fn self_distances(a: &EmbeddingMatrix) -> DistanceMatrix {
    pairwise_euclidean(a, a).expect("same matrix has matching dimensions")
}

/// Elementwise arithmetic mean, e.g. of the two mask-variant models' distance matrices.
pub fn average_matrices(mats: &[DistanceMatrix]) -> Result<DistanceMatrix> {
    let first = mats.first().ok_or(ReidError::EmptyList)?;
    for (i, m) in mats.iter().enumerate().skip(1) {
        if m.shape() != first.shape() {
            return Err(ReidError::ShapeMismatch(format!(
                "matrix {i} is {:?}, matrix 0 is {:?}",
                m.shape(),
                first.shape()
            )));
        }
    }
    if mats.len() == 1 {
        return Ok(first.clone());
    }
    let count = mats.len() as f64;
    let mut out = first.clone();
    out.as_mut_slice()
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, slot)| {
            let sum: f64 = mats.iter().map(|m| m.as_slice()[idx]).sum();
            *slot = sum / count;
        });
    Ok(out)
}

/// Per-family weights for metadata distances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub gamma: BTreeMap<String, f64>,
}

impl FusionWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, family: impl Into<String>, weight: f64) -> Self {
        self.gamma.insert(family.into(), weight);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in &self.gamma {
            if !w.is_finite() {
                return Err(ReidError::InvalidParams(format!(
                    "weight for {name:?} is not finite"
                )));
            }
        }
        Ok(())
    }
}

/// `base + Σ_j γ_j · D_j`, families summed in name order.
pub fn fuse_metadata(
    base: &DistanceMatrix,
    meta_dists: &BTreeMap<String, DistanceMatrix>,
    weights: &FusionWeights,
) -> Result<DistanceMatrix> {
    weights.validate()?;
    let mut terms = Vec::with_capacity(meta_dists.len());
    for (name, d) in meta_dists {
        if d.shape() != base.shape() {
            return Err(ReidError::ShapeMismatch(format!(
                "metadata family {name:?} is {:?}, base is {:?}",
                d.shape(),
                base.shape()
            )));
        }
        let w = *weights
            .gamma
            .get(name)
            .ok_or_else(|| ReidError::MissingWeight(name.clone()))?;
        // a zero weight contributes nothing; skipping keeps the base bitwise intact
        if w != 0.0 {
            terms.push((w, d));
        }
    }
    let mut out = base.clone();
    if terms.is_empty() {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, slot)| {
            let mut acc = *slot;
            for (w, d) in &terms {
                acc += w * d.as_slice()[idx];
            }
            *slot = acc;
        });
    Ok(out)
}

/// Euclidean distance between metadata embeddings of `query` and `gallery` rows, per family.
pub fn metadata_distances(
    query: &BTreeMap<String, EmbeddingMatrix>,
    gallery: &BTreeMap<String, EmbeddingMatrix>,
) -> Result<BTreeMap<String, DistanceMatrix>> {
    let mut out = BTreeMap::new();
    for (name, q) in query {
        let g = gallery.get(name).ok_or_else(|| {
            ReidError::ShapeMismatch(format!("gallery lacks metadata family {name:?}"))
        })?;
        out.insert(name.clone(), pairwise_euclidean(q, g)?);
    }
    Ok(out)
}

/// Runs `f` on a dedicated rayon pool with `workers` threads.
pub fn with_workers<T, F>(workers: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ReidError::IoFailure(std::io::Error::other(e)))?;
    Ok(pool.install(f))
}
