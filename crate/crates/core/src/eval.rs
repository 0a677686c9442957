//! Retrieval metrics: average precision, mAP and CMC Rank@k.
//!
//! Rows of the distance matrix are the manifest's query items in order and
//! columns its gallery items in order. A gallery item is relevant to a probe
//! when it carries the same identity label.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ItemManifest;
use crate::error::{ReidError, Result};
use crate::matrix::DistanceMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Keep only the first `top_n` ranked gallery items.
    pub top_n: Option<usize>,
    /// Drop gallery items sharing both identity and camera with the probe.
    pub cross_camera: bool,
}

impl EvalOptions {
    /// AI City protocol: top-100 truncation, cross-camera matches only.
    pub fn aicity() -> Self {
        Self {
            top_n: Some(100),
            cross_camera: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_n == Some(0) {
            return Err(ReidError::InvalidParams("top_n must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gallery indices by ascending distance, ties by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub probe: usize,
    pub order: Vec<usize>,
    pub top_n: Option<usize>,
}

pub fn rank_gallery(
    dist_row: &[f64],
    options: &EvalOptions,
    valid_mask: &[bool],
) -> Result<RankedList> {
    if dist_row.len() != valid_mask.len() {
        return Err(ReidError::LengthMismatch {
            expected: dist_row.len(),
            found: valid_mask.len(),
        });
    }
    options.validate()?;
    let mut order: Vec<usize> = (0..dist_row.len()).filter(|&g| valid_mask[g]).collect();
    order.sort_by(|&a, &b| dist_row[a].total_cmp(&dist_row[b]).then(a.cmp(&b)));
    if let Some(n) = options.top_n {
        order.truncate(n);
    }
    Ok(RankedList {
        probe: 0,
        order,
        top_n: options.top_n,
    })
}

/// Mean of precision at each hit; with truncation the divisor is `min(|relevant|, top_n)`.
pub fn average_precision(list: &RankedList, relevant: &BTreeSet<usize>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(ReidError::NoRelevant);
    }
    let denom = match list.top_n {
        Some(n) => relevant.len().min(n),
        None => relevant.len(),
    };
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, g) in list.order.iter().enumerate() {
        if relevant.contains(g) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub probe: usize,
    pub image_id: String,
    /// `None` when no relevant gallery item survives masking.
    pub ap: Option<f64>,
    /// 1-based rank of the first correct match inside the (possibly truncated) list.
    pub first_hit_rank: Option<usize>,
}

fn probe_results(
    dist: &DistanceMatrix,
    manifest: &ItemManifest,
    options: &EvalOptions,
) -> Result<Vec<ProbeResult>> {
    options.validate()?;
    let queries = manifest.queries();
    let gallery = manifest.gallery();
    if dist.shape() != (queries.len(), gallery.len()) {
        return Err(ReidError::ShapeMismatch(format!(
            "distance matrix {:?}, manifest has {} queries x {} gallery",
            dist.shape(),
            queries.len(),
            gallery.len()
        )));
    }
    let unlabeled = queries
        .iter()
        .chain(&gallery)
        .filter(|it| it.identity.is_none())
        .count();
    if unlabeled > 0 {
        return Err(ReidError::MissingLabels(format!(
            "{unlabeled} query/gallery items have no identity"
        )));
    }
    (0..queries.len())
        .into_par_iter()
        .map(|p| {
            let q = queries[p];
            let valid: Vec<bool> = gallery
                .iter()
                .map(|g| {
                    !(options.cross_camera
                        && g.identity == q.identity
                        && g.camera_id == q.camera_id)
                })
                .collect();
            let mut list = rank_gallery(dist.row(p), options, &valid)?;
            list.probe = p;
            let relevant: BTreeSet<usize> = (0..gallery.len())
                .filter(|&g| valid[g] && gallery[g].identity == q.identity)
                .collect();
            let ap = match average_precision(&list, &relevant) {
                Ok(v) => Some(v),
                Err(ReidError::NoRelevant) => None,
                Err(e) => return Err(e),
            };
            let first_hit_rank = list
                .order
                .iter()
                .position(|g| relevant.contains(g))
                .map(|pos| pos + 1);
            Ok(ProbeResult {
                probe: p,
                image_id: q.image_id.clone(),
                ap,
                first_hit_rank,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub map: f64,
    pub per_probe: Vec<ProbeResult>,
    /// Probes without any relevant gallery item; not part of the mean.
    pub excluded: Vec<usize>,
}

pub fn mean_ap(
    dist: &DistanceMatrix,
    manifest: &ItemManifest,
    options: &EvalOptions,
) -> Result<MapResult> {
    let per_probe = probe_results(dist, manifest, options)?;
    summarize_map(per_probe)
}

fn summarize_map(per_probe: Vec<ProbeResult>) -> Result<MapResult> {
    let aps: Vec<f64> = per_probe.iter().filter_map(|r| r.ap).collect();
    if aps.is_empty() {
        return Err(ReidError::NoRelevant);
    }
    let excluded = per_probe
        .iter()
        .filter(|r| r.ap.is_none())
        .map(|r| r.probe)
        .collect();
    Ok(MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        per_probe,
        excluded,
    })
}

fn cmc_from(per_probe: &[ProbeResult], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(ReidError::InvalidParams("k must be >= 1".into()));
    }
    let evaluable: Vec<&ProbeResult> = per_probe.iter().filter(|r| r.ap.is_some()).collect();
    if evaluable.is_empty() {
        return Err(ReidError::NoRelevant);
    }
    let hits = evaluable
        .iter()
        .filter(|r| r.first_hit_rank.is_some_and(|rank| rank <= k))
        .count();
    Ok(hits as f64 / evaluable.len() as f64)
}

/// Fraction of evaluable probes with a correct match among their top `k`.
pub fn cmc_at_k(
    dist: &DistanceMatrix,
    manifest: &ItemManifest,
    k: usize,
    options: &EvalOptions,
) -> Result<f64> {
    cmc_from(&probe_results(dist, manifest, options)?, k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub excluded_probes: Vec<usize>,
    pub per_probe: Vec<ProbeResult>,
}

pub fn evaluate(
    dist: &DistanceMatrix,
    manifest: &ItemManifest,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let per_probe = probe_results(dist, manifest, options)?;
    let rank1 = cmc_from(&per_probe, 1)?;
    let rank5 = cmc_from(&per_probe, 5)?;
    let rank10 = cmc_from(&per_probe, 10)?;
    let m = summarize_map(per_probe)?;
    Ok(EvalReport {
        options: *options,
        map: m.map,
        rank1,
        rank5,
        rank10,
        excluded_probes: m.excluded,
        per_probe: m.per_probe,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("probe_id\tap\tfirst_hit_rank\n");
        for r in &self.per_probe {
            let ap = r.ap.map_or("excluded".to_string(), |v| format!("{v:.6}"));
            let rank = r.first_hit_rank.map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(s, "{}\t{ap}\t{rank}", r.image_id);
        }
        let _ = writeln!(s, "# excluded probes: {}", self.excluded_probes.len());
        let _ = writeln!(s, "# mAP: {:.6}", self.map);
        let _ = writeln!(
            s,
            "# Rank@1: {:.6}  Rank@5: {:.6}  Rank@10: {:.6}",
            self.rank1, self.rank5, self.rank10
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}
