//! In-memory composition of the post-processing stages:
//! distances → metadata fusion → re-ranking → track averaging → evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::{fuse_metadata, metadata_distances, pairwise_euclidean, FusionWeights};
use crate::error::{ReidError, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::matrix::{DistanceMatrix, EmbeddingMatrix};
use crate::rerank::{rerank, track_average, RerankParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageToggles {
    pub fuse_metadata: bool,
    pub rerank: bool,
    pub track_average: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            fuse_metadata: true,
            rerank: true,
            track_average: true,
        }
    }
}

impl StageToggles {
    pub fn none() -> Self {
        Self {
            fuse_metadata: false,
            rerank: false,
            track_average: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub weights: FusionWeights,
    pub rerank: RerankParams,
    pub eval: EvalOptions,
    pub stages: StageToggles,
}

/// Probe×gallery and joint square distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancePair {
    pub query_gallery: DistanceMatrix,
    pub joint: DistanceMatrix,
}

/// Every intermediate matrix, `None` for stages that were switched off.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub raw: DistancePair,
    pub fused: Option<DistancePair>,
    pub reranked: Option<DistanceMatrix>,
    pub track_averaged: Option<DistanceMatrix>,
    pub final_distances: DistanceMatrix,
    pub report: EvalReport,
}

pub fn compute_distances(
    query: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
) -> Result<DistancePair> {
    let query_gallery = pairwise_euclidean(query, gallery)?;
    let joint_emb = query.vstack(gallery)?;
    let joint = pairwise_euclidean(&joint_emb, &joint_emb)?;
    Ok(DistancePair {
        query_gallery,
        joint,
    })
}

/// Families without an explicit weight get 0.0; weights naming absent families are rejected.
pub fn complete_weights(ds: &Dataset, weights: &FusionWeights) -> Result<FusionWeights> {
    if let Some(name) = weights.gamma.keys().find(|k| ds.meta.get(k).is_none()) {
        return Err(ReidError::InvalidParams(format!(
            "weight given for unknown metadata family {name:?}"
        )));
    }
    let mut full = weights.clone();
    for name in ds.meta.families.keys() {
        full.gamma.entry(name.clone()).or_insert(0.0);
    }
    Ok(full)
}

/// Applies metadata fusion to both the probe×gallery and the joint matrix.
pub fn fuse_pair(
    ds: &Dataset,
    base: &DistancePair,
    weights: &FusionWeights,
) -> Result<DistancePair> {
    let weights = complete_weights(ds, weights)?;
    let mut q = BTreeMap::new();
    let mut g = BTreeMap::new();
    let mut joint = BTreeMap::new();
    for name in ds.meta.families.keys() {
        let (mq, mg) = ds.meta_split(name).expect("family exists");
        joint.insert(name.clone(), mq.vstack(&mg)?);
        q.insert(name.clone(), mq);
        g.insert(name.clone(), mg);
    }
    let qg_meta = metadata_distances(&q, &g)?;
    let joint_meta = metadata_distances(&joint, &joint)?;
    Ok(DistancePair {
        query_gallery: fuse_metadata(&base.query_gallery, &qg_meta, &weights)?,
        joint: fuse_metadata(&base.joint, &joint_meta, &weights)?,
    })
}

pub fn run_pipeline(ds: &Dataset, params: &PipelineParams) -> Result<PipelineOutput> {
    ds.ensure_valid()?;
    let raw = compute_distances(&ds.query_embeddings(), &ds.gallery_embeddings())?;
    let fused = if params.stages.fuse_metadata {
        Some(fuse_pair(ds, &raw, &params.weights)?)
    } else {
        None
    };
    let current = fused.as_ref().unwrap_or(&raw);
    let reranked = if params.stages.rerank {
        Some(rerank(
            &current.query_gallery,
            &current.joint,
            &params.rerank,
        )?)
    } else {
        None
    };
    let before_tracks = reranked.as_ref().unwrap_or(&current.query_gallery);
    let track_averaged = if params.stages.track_average {
        Some(track_average(before_tracks, &ds.manifest)?)
    } else {
        None
    };
    let final_distances = track_averaged.as_ref().unwrap_or(before_tracks).clone();
    let report = evaluate(&final_distances, &ds.manifest, &params.eval)?;
    Ok(PipelineOutput {
        raw,
        fused,
        reranked,
        track_averaged,
        final_distances,
        report,
    })
}
