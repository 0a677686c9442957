//! k-reciprocal re-ranking over a joint query+gallery index space, and
//! track-level distance averaging.
//!
//! Index convention: in the square `all_dist` matrix, rows `0..|Q|` are the
//! probes and rows `|Q|..|Q|+|G|` are the gallery items, both in manifest order.
//!
//! * `N(p, k)`: the `k` items closest to `p`, excluding `p`, ties by ascending index.
//! * `R(p, k)`: members `q` of `N(p, k)` with `p ∈ N(q, k)`.
//! * `R*(p, k)`: `R(p, k)` plus every `R(q, ⌈k/2⌉)` for `q ∈ R(p, k)` that
//!   shares at least two thirds of its members with `R(p, k)`.
//!
//! The final distance is `(1 − λ)·d_J + λ·d′`, with `d_J` the Jaccard
//! distance between `R*` sets and `d′` the (metadata-fused) original distance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ItemManifest;
use crate::error::{ReidError, Result};
use crate::matrix::{DistanceMatrix, Matrix};

/// Sorted member indices of a neighbor set owned by `owner`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub owner: usize,
    pub k: usize,
    pub members: Vec<usize>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.members.binary_search(&idx).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankParams {
    pub k1: usize,
    /// Neighborhood for local query expansion; only used when `query_expansion` is set.
    pub k2: usize,
    pub lambda: f64,
    #[serde(default)]
    pub query_expansion: bool,
}

impl Default for RerankParams {
    // conventional values for k-reciprocal re-ranking; untuned for vehicles
    fn default() -> Self {
        Self {
            k1: 20,
            k2: 6,
            lambda: 0.3,
            query_expansion: false,
        }
    }
}

impl RerankParams {
    pub fn new(k1: usize, k2: usize, lambda: f64) -> Self {
        Self {
            k1,
            k2,
            lambda,
            query_expansion: false,
        }
    }

    /// Checks `1 ≤ k2 ≤ k1 < n` and `0 ≤ λ ≤ 1`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k2 < 1 || self.k2 > self.k1 {
            return Err(ReidError::InvalidParams(format!(
                "need 1 <= k2 <= k1, got k1={}, k2={}",
                self.k1, self.k2
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ReidError::InvalidParams(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.k1 >= n {
            return Err(ReidError::KTooLarge { k: self.k1, n });
        }
        Ok(())
    }
}

fn check_k(all_dist: &DistanceMatrix, owner: usize, k: usize) -> Result<()> {
    if !all_dist.is_square() {
        return Err(ReidError::ShapeMismatch(format!(
            "joint distance matrix must be square, got {:?}",
            all_dist.shape()
        )));
    }
    let n = all_dist.rows();
    if owner >= n {
        return Err(ReidError::ShapeMismatch(format!(
            "owner {owner} outside {n} items"
        )));
    }
    if k == 0 {
        return Err(ReidError::InvalidParams("k must be positive".into()));
    }
    if k >= n {
        return Err(ReidError::KTooLarge { k, n });
    }
    Ok(())
}

/// Indices of row `owner` ordered by ascending distance then index, owner excluded, first `k`.
fn ranked_prefix(row: &[f64], owner: usize, k: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != owner).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

pub fn k_nearest(all_dist: &DistanceMatrix, owner: usize, k: usize) -> Result<NeighborSet> {
    check_k(all_dist, owner, k)?;
    let mut members = ranked_prefix(all_dist.row(owner), owner, k);
    members.sort_unstable();
    Ok(NeighborSet { owner, k, members })
}

pub fn k_reciprocal(all_dist: &DistanceMatrix, owner: usize, k: usize) -> Result<NeighborSet> {
    let index = NeighborIndex::build(all_dist, k)?;
    check_k(all_dist, owner, k)?;
    Ok(NeighborSet {
        owner,
        k,
        members: index.reciprocal(owner, k),
    })
}

pub fn expand_reciprocal(
    all_dist: &DistanceMatrix,
    owner: usize,
    k1: usize,
) -> Result<NeighborSet> {
    let index = NeighborIndex::build(all_dist, k1)?;
    check_k(all_dist, owner, k1)?;
    let half = k1.div_ceil(2);
    Ok(NeighborSet {
        owner,
        k: k1,
        members: index.expanded(owner, k1, half),
    })
}

/// `1 − |A∩B| / |A∪B|`; 1.0 when both sets are empty.
pub fn jaccard_distance(a: &NeighborSet, b: &NeighborSet) -> f64 {
    sorted_jaccard(&a.members, &b.members)
}

fn sorted_jaccard(a: &[usize], b: &[usize]) -> f64 {
    let inter = intersection_len(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 1.0;
    }
    1.0 - inter as f64 / union as f64
}

fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Ranked neighbor lists for every item, truncated to `depth`.
///
/// `N(p, k)` for any `k ≤ depth` is a prefix of the stored list because ties
/// are broken by index.
struct NeighborIndex {
    ranked: Vec<Vec<usize>>,
    /// `rank_of[p][q]` position of `q` in `ranked[p]`, `usize::MAX` when absent
    rank_of: Vec<BTreeMap<usize, usize>>,
}

impl NeighborIndex {
    fn build(all_dist: &DistanceMatrix, depth: usize) -> Result<Self> {
        check_k(all_dist, 0, depth)?;
        let n = all_dist.rows();
        let ranked: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|p| ranked_prefix(all_dist.row(p), p, depth))
            .collect();
        let rank_of = ranked
            .par_iter()
            .map(|r| r.iter().enumerate().map(|(pos, &q)| (q, pos)).collect())
            .collect();
        Ok(Self { ranked, rank_of })
    }

    fn in_knn(&self, p: usize, q: usize, k: usize) -> bool {
        self.rank_of[p].get(&q).is_some_and(|&pos| pos < k)
    }

    fn reciprocal(&self, p: usize, k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.ranked[p][..k]
            .iter()
            .copied()
            .filter(|&q| self.in_knn(q, p, k))
            .collect();
        out.sort_unstable();
        out
    }

    fn expanded(&self, p: usize, k1: usize, half: usize) -> Vec<usize> {
        let base = self.reciprocal(p, k1);
        let mut out = base.clone();
        for &q in &base {
            let cand = self.reciprocal(q, half);
            let overlap = intersection_len(&cand, &base);
            // |cand ∩ R| ≥ (2/3)|cand| without floating point
            if 3 * overlap >= 2 * cand.len() {
                out = sorted_union(&out, &cand);
            }
        }
        out
    }
}

/// Sparse membership weights, sorted by index.
type SoftSet = Vec<(usize, f64)>;

fn soft_jaccard(a: &SoftSet, b: &SoftSet) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut num, mut den) = (0.0, 0.0);
    while i < a.len() || j < b.len() {
        let ai = a.get(i).map_or(usize::MAX, |x| x.0);
        let bj = b.get(j).map_or(usize::MAX, |x| x.0);
        if ai < bj {
            den += a[i].1;
            i += 1;
        } else if bj < ai {
            den += b[j].1;
            j += 1;
        } else {
            num += a[i].1.min(b[j].1);
            den += a[i].1.max(b[j].1);
            i += 1;
            j += 1;
        }
    }
    if den == 0.0 {
        1.0
    } else {
        1.0 - num / den
    }
}

/// Re-ranked `|Q|×|G|` distances.
///
/// `fused` is `d′` over probes × gallery; `all_dist` is the square matrix over
/// the joint index space the neighbor sets are built from.
pub fn rerank(
    fused: &DistanceMatrix,
    all_dist: &DistanceMatrix,
    params: &RerankParams,
) -> Result<DistanceMatrix> {
    let (nq, ng) = fused.shape();
    if !all_dist.is_square() || all_dist.rows() != nq + ng {
        return Err(ReidError::ShapeMismatch(format!(
            "joint matrix {:?} does not cover {nq} probes + {ng} gallery items",
            all_dist.shape()
        )));
    }
    let n = all_dist.rows();
    params.validate(n)?;
    if params.lambda == 1.0 {
        return Ok(fused.clone());
    }

    let index = NeighborIndex::build(all_dist, params.k1)?;
    let half = params.k1.div_ceil(2);
    let rstar: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|p| index.expanded(p, params.k1, half))
        .collect();

    let jaccard: Box<dyn Fn(usize, usize) -> f64 + Sync> = if params.query_expansion {
        let soft = local_expansion(&index, &rstar, params.k2);
        Box::new(move |p, g| soft_jaccard(&soft[p], &soft[g]))
    } else {
        Box::new(|p, g| sorted_jaccard(&rstar[p], &rstar[g]))
    };

    let lambda = params.lambda;
    let mut out = Matrix::zeros(nq, ng);
    if ng == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(ng)
        .enumerate()
        .for_each(|(p, row)| {
            for (g, slot) in row.iter_mut().enumerate() {
                let dj = jaccard(p, nq + g);
                *slot = (1.0 - lambda) * dj + lambda * fused.get(p, g);
            }
        });
    Ok(out)
}

/// Membership of each item averaged with its `k2 − 1` nearest neighbors' memberships.
fn local_expansion(index: &NeighborIndex, rstar: &[Vec<usize>], k2: usize) -> Vec<SoftSet> {
    (0..rstar.len())
        .into_par_iter()
        .map(|p| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            let sources = std::iter::once(p).chain(index.ranked[p][..k2 - 1].iter().copied());
            for s in sources {
                for &m in &rstar[s] {
                    *counts.entry(m).or_default() += 1;
                }
            }
            counts
                .into_iter()
                .map(|(m, c)| (m, c as f64 / k2 as f64))
                .collect()
        })
        .collect()
}

/// Replaces each probe's distances to a gallery track by the track mean.
///
/// Columns of `dist` are the manifest's gallery items in order; items without
/// a track id form singleton tracks.
pub fn track_average(dist: &DistanceMatrix, manifest: &ItemManifest) -> Result<DistanceMatrix> {
    let gallery = manifest.gallery();
    if gallery.len() != dist.cols() {
        return Err(ReidError::ShapeMismatch(format!(
            "{} gallery items in manifest, {} distance columns",
            gallery.len(),
            dist.cols()
        )));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (col, item) in gallery.iter().enumerate() {
        if let Some(t) = item.track_id {
            groups.entry(t).or_default().push(col);
        }
    }
    let groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();

    let mut out = dist.clone();
    if dist.cols() == 0 || groups.is_empty() {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(dist.cols())
        .for_each(|row| {
            for cols in &groups {
                let first = row[cols[0]];
                // mean of identical values is that value; this keeps repeated application bitwise stable
                if cols.iter().all(|&c| row[c].to_bits() == first.to_bits()) {
                    continue;
                }
                let sum: f64 = cols.iter().map(|&c| row[c]).sum();
                let mean = sum / cols.len() as f64;
                for &c in cols {
                    row[c] = mean;
                }
            }
        });
    Ok(out)
}
