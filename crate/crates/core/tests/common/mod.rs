//! From-definition reference implementations used as test oracles.
//!
//! Everything here recomputes from scratch with plain loops and ordered sets;
//! none of it calls the library's ranking, re-ranking or metric code.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use reid_rank::synth::GaussianStream;
use reid_rank::Matrix;

pub fn random_matrix(rng: &mut GaussianStream, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::new(rows, cols, rng.vector(rows * cols, std)).unwrap()
}

pub fn naive_pairwise(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = vec![vec![0.0; b.rows()]; a.rows()];
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += (a.get(i, k) - b.get(j, k)).powi(2);
            }
            out[i][j] = s.sqrt();
        }
    }
    Matrix::from_rows(&out).unwrap()
}

/// N(p, k): full sort of the row by (distance, index), owner removed.
pub fn naive_knn(d: &Matrix, p: usize, k: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..d.cols()).filter(|&j| j != p).collect();
    idx.sort_by(|&a, &b| {
        d.get(p, a)
            .partial_cmp(&d.get(p, b))
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.into_iter().take(k).collect()
}

/// R(p, k) = { q ∈ N(p, k) : p ∈ N(q, k) }.
pub fn naive_reciprocal(d: &Matrix, p: usize, k: usize) -> BTreeSet<usize> {
    naive_knn(d, p, k)
        .into_iter()
        .filter(|&q| naive_knn(d, q, k).contains(&p))
        .collect()
}

/// R*(p, k) = R(p, k) ∪ { R(q, ⌈k/2⌉) : q ∈ R(p, k), |R(q,⌈k/2⌉) ∩ R(p,k)| ≥ ⅔·|R(q,⌈k/2⌉)| }.
pub fn naive_expand(d: &Matrix, p: usize, k: usize) -> BTreeSet<usize> {
    let r = naive_reciprocal(d, p, k);
    let half = k.div_ceil(2);
    let mut out = r.clone();
    for &q in &r {
        let cand = naive_reciprocal(d, q, half);
        let overlap = cand.intersection(&r).count() as f64;
        if overlap >= 2.0 / 3.0 * cand.len() as f64 {
            out.extend(cand);
        }
    }
    out
}

pub fn naive_jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

/// d′ = d + Σ γ_j D_j over a single matrix.
pub fn naive_fuse(
    base: &Matrix,
    meta: &BTreeMap<String, Matrix>,
    gamma: &BTreeMap<String, f64>,
) -> Matrix {
    Matrix::from_fn(base.rows(), base.cols(), |i, j| {
        let mut v = base.get(i, j);
        for (name, m) in meta {
            v += gamma[name] * m.get(i, j);
        }
        v
    })
}

/// Final `|Q|×|G|` distance from the joint fused matrix: (1−λ)·d_J + λ·d′.
pub fn naive_rerank(fused_joint: &Matrix, nq: usize, k1: usize, lambda: f64) -> Matrix {
    let n = fused_joint.rows();
    let ng = n - nq;
    let rstar: Vec<BTreeSet<usize>> = (0..n).map(|p| naive_expand(fused_joint, p, k1)).collect();
    Matrix::from_fn(nq, ng, |p, g| {
        let dj = naive_jaccard(&rstar[p], &rstar[nq + g]);
        (1.0 - lambda) * dj + lambda * fused_joint.get(p, nq + g)
    })
}

/// AP from definition: for each relevant item, precision at its rank, where
/// rank is counted by pairwise (distance, index) comparisons.
pub fn naive_ap(row: &[f64], relevant: &BTreeSet<usize>, valid: &[bool]) -> Option<(f64, usize)> {
    let rel: Vec<usize> = relevant.iter().copied().filter(|&g| valid[g]).collect();
    if rel.is_empty() {
        return None;
    }
    let before = |a: usize, b: usize| row[a] < row[b] || (row[a] == row[b] && a < b);
    let rank_of = |g: usize| {
        1 + (0..row.len())
            .filter(|&h| valid[h] && h != g && before(h, g))
            .count()
    };
    let mut sum = 0.0;
    let mut first = usize::MAX;
    for &r in &rel {
        let rank = rank_of(r);
        first = first.min(rank);
        let rel_at_or_above = rel.iter().filter(|&&s| rank_of(s) <= rank).count();
        sum += rel_at_or_above as f64 / rank as f64;
    }
    Some((sum / rel.len() as f64, first))
}

/// `(mAP, CMC@1..=max_k)` over probes with at least one relevant item.
pub fn naive_map_cmc(
    d: &Matrix,
    q_ids: &[u64],
    g_ids: &[u64],
    q_cams: &[u64],
    g_cams: &[u64],
    cross_camera: bool,
    max_k: usize,
) -> (f64, Vec<f64>) {
    let mut aps = Vec::new();
    let mut firsts = Vec::new();
    for p in 0..d.rows() {
        let valid: Vec<bool> = (0..d.cols())
            .map(|g| !(cross_camera && g_ids[g] == q_ids[p] && g_cams[g] == q_cams[p]))
            .collect();
        let relevant: BTreeSet<usize> = (0..d.cols()).filter(|&g| g_ids[g] == q_ids[p]).collect();
        if let Some((ap, first)) = naive_ap(d.row(p), &relevant, &valid) {
            aps.push(ap);
            firsts.push(first);
        }
    }
    let map = aps.iter().sum::<f64>() / aps.len() as f64;
    let cmc = (1..=max_k)
        .map(|k| firsts.iter().filter(|&&f| f <= k).count() as f64 / firsts.len() as f64)
        .collect();
    (map, cmc)
}

/// Joint distance matrix of a random two-level cluster layout.
pub fn clustered_joint(rng: &mut GaussianStream, n: usize, clusters: usize, dim: usize) -> Matrix {
    let centers: Vec<Vec<f64>> = (0..clusters).map(|_| rng.vector(dim, 1.5)).collect();
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let noise = rng.vector(dim, 0.6);
            centers[i % clusters]
                .iter()
                .zip(noise)
                .map(|(c, e)| c + e)
                .collect()
        })
        .collect();
    let m = Matrix::from_rows(&pts).unwrap();
    naive_pairwise(&m, &m)
}

/// Gallery columns sharing a track replaced by their mean, summed left to right.
pub fn naive_track_average(d: &Matrix, tracks: &[Option<u64>]) -> Matrix {
    Matrix::from_fn(d.rows(), d.cols(), |p, g| match tracks[g] {
        None => d.get(p, g),
        Some(t) => {
            let cols: Vec<usize> = (0..d.cols()).filter(|&c| tracks[c] == Some(t)).collect();
            cols.iter().map(|&c| d.get(p, c)).sum::<f64>() / cols.len() as f64
        }
    })
}

/// Labels of a dataset in the order the oracles expect.
pub struct Labels {
    pub q_ids: Vec<u64>,
    pub g_ids: Vec<u64>,
    pub q_cams: Vec<u64>,
    pub g_cams: Vec<u64>,
    pub g_tracks: Vec<Option<u64>>,
}

pub fn labels(ds: &reid_rank::Dataset) -> Labels {
    let q = ds.manifest.queries();
    let g = ds.manifest.gallery();
    Labels {
        q_ids: q.iter().map(|r| r.identity.unwrap()).collect(),
        g_ids: g.iter().map(|r| r.identity.unwrap()).collect(),
        q_cams: q.iter().map(|r| r.camera_id).collect(),
        g_cams: g.iter().map(|r| r.camera_id).collect(),
        g_tracks: g.iter().map(|r| r.track_id).collect(),
    }
}

/// `(raw mAP, re-ranked + track-averaged mAP)` computed entirely from the oracles.
pub fn oracle_pipeline_map(ds: &reid_rank::Dataset, k1: usize, lambda: f64) -> (f64, f64) {
    let l = labels(ds);
    let q = ds.query_embeddings();
    let g = ds.gallery_embeddings();
    let joint_emb = q.vstack(&g).unwrap();
    let joint = naive_pairwise(&joint_emb, &joint_emb);
    let raw = naive_pairwise(&q, &g);
    let rr = naive_rerank(&joint, q.rows(), k1, lambda);
    let fin = naive_track_average(&rr, &l.g_tracks);
    let m = |d: &Matrix| naive_map_cmc(d, &l.q_ids, &l.g_ids, &l.q_cams, &l.g_cams, false, 1).0;
    (m(&raw), m(&fin))
}

/// Random labelled query/gallery manifest plus its oracle label vectors.
pub fn random_eval_instance(
    rng: &mut GaussianStream,
    nq: usize,
    ng: usize,
    ids: u64,
    cams: u64,
) -> (reid_rank::ItemManifest, Matrix, Labels) {
    use reid_rank::{ItemManifest, ItemRecord, Split};
    let q_ids: Vec<u64> = (0..nq).map(|_| rng.below(ids)).collect();
    let g_ids: Vec<u64> = (0..ng).map(|_| rng.below(ids)).collect();
    let q_cams: Vec<u64> = (0..nq).map(|_| rng.below(cams)).collect();
    let g_cams: Vec<u64> = (0..ng).map(|_| rng.below(cams)).collect();
    let mut items = Vec::new();
    for i in 0..nq {
        items.push(
            ItemRecord::new(format!("q{i}"), Split::Query)
                .identity(q_ids[i])
                .camera(q_cams[i]),
        );
    }
    for i in 0..ng {
        items.push(
            ItemRecord::new(format!("g{i}"), Split::Gallery)
                .identity(g_ids[i])
                .camera(g_cams[i]),
        );
    }
    // coarse values so that ties occur
    let d = Matrix::from_fn(nq, ng, |_, _| (rng.uniform() * 8.0).floor() / 4.0);
    let labels = Labels {
        q_ids,
        g_ids,
        q_cams,
        g_cams,
        g_tracks: vec![None; ng],
    };
    (ItemManifest::new(items).unwrap(), d, labels)
}
