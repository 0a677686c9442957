//! Metric-learning loss kernels with analytic gradients.
//!
//! Distances between embeddings are plain (non-squared) Euclidean. The hinge
//! `[x]_+` uses subgradient 0 at `x = 0`, and the gradient of a zero-length
//! distance is taken as 0.

use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::matrix::{EmbeddingMatrix, Matrix};

/// Embeddings with one identity label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub embeddings: EmbeddingMatrix,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(embeddings: EmbeddingMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != embeddings.rows() {
            return Err(ReidError::LengthMismatch {
                expected: embeddings.rows(),
                found: labels.len(),
            });
        }
        Ok(Self { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Same labels, different embeddings (used by finite differences).
    pub fn with_embeddings(&self, embeddings: EmbeddingMatrix) -> Self {
        Self {
            embeddings,
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub margin: f64,
    pub epsilon: f64,
    pub lambda_triplet: f64,
    pub lambda_softmax: f64,
    pub num_classes: usize,
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ReidError::InvalidParams(m.to_string()));
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1)");
        }
        if !(self.lambda_triplet >= 0.0 && self.lambda_softmax >= 0.0) {
            return bad("loss weights must be >= 0");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        Ok(())
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All-pairs distances within a batch.
fn batch_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = euclid(x.row(i), x.row(j));
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Adds `scale · ∂‖x_i − x_j‖/∂x` to the rows `i` and `j` of `grad`.
fn accumulate_distance_grad(
    x: &Matrix,
    grad: &mut Matrix,
    i: usize,
    j: usize,
    dist: f64,
    scale: f64,
) {
    if dist == 0.0 {
        return;
    }
    let c = scale / dist;
    for k in 0..x.cols() {
        let diff = x.get(i, k) - x.get(j, k);
        let gi = grad.get(i, k) + c * diff;
        grad.set(i, k, gi);
        let gj = grad.get(j, k) - c * diff;
        grad.set(j, k, gj);
    }
}

/// Sum of `[m + D(a,p) − D(a,n)]_+` over every triplet with `y_a = y_p ≠ y_n`, `a ≠ p`.
pub fn triplet_loss_full(batch: &LabeledBatch, margin: f64) -> Result<(f64, EmbeddingMatrix)> {
    let x = &batch.embeddings;
    let y = &batch.labels;
    let n = batch.len();
    let d = batch_distances(x);
    let mut grad = Matrix::zeros(n, x.cols());
    let mut loss = 0.0;
    let mut triplets = 0usize;
    for a in 0..n {
        for p in 0..n {
            if p == a || y[p] != y[a] {
                continue;
            }
            for neg in 0..n {
                if y[neg] == y[a] {
                    continue;
                }
                triplets += 1;
                let h = margin + d.get(a, p) - d.get(a, neg);
                if h > 0.0 {
                    loss += h;
                    accumulate_distance_grad(x, &mut grad, a, p, d.get(a, p), 1.0);
                    accumulate_distance_grad(x, &mut grad, a, neg, d.get(a, neg), -1.0);
                }
            }
        }
    }
    if triplets == 0 {
        return Err(ReidError::NoValidTriplet);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MinedTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

fn check_batch_hard(labels: &[usize]) -> Result<()> {
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    if let Some((&class, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(ReidError::SingletonClass(class));
    }
    if counts.len() < 2 {
        return Err(ReidError::SingleClass);
    }
    Ok(())
}

fn mine(d: &Matrix, labels: &[usize]) -> Vec<MinedTriplet> {
    let n = labels.len();
    (0..n)
        .map(|a| {
            let mut positive = usize::MAX;
            let mut negative = usize::MAX;
            for j in 0..n {
                if j == a {
                    continue;
                }
                if labels[j] == labels[a] {
                    // strict comparisons keep the lowest index on ties
                    if positive == usize::MAX || d.get(a, j) > d.get(a, positive) {
                        positive = j;
                    }
                } else if negative == usize::MAX || d.get(a, j) < d.get(a, negative) {
                    negative = j;
                }
            }
            MinedTriplet {
                anchor: a,
                positive,
                negative,
            }
        })
        .collect()
}

/// Per anchor: farthest same-label sample and nearest other-label sample.
pub fn batch_hard_mine(batch: &LabeledBatch) -> Result<Vec<MinedTriplet>> {
    check_batch_hard(&batch.labels)?;
    Ok(mine(&batch_distances(&batch.embeddings), &batch.labels))
}

/// Mean over anchors of `[m + D(a, hp) − D(a, hn)]_+`; the selection is held fixed in the gradient.
pub fn triplet_loss_batch_hard(
    batch: &LabeledBatch,
    margin: f64,
) -> Result<(f64, EmbeddingMatrix)> {
    check_batch_hard(&batch.labels)?;
    let x = &batch.embeddings;
    let d = batch_distances(x);
    let n = batch.len();
    let scale = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, x.cols());
    let mut loss = 0.0;
    for t in mine(&d, &batch.labels) {
        let dp = d.get(t.anchor, t.positive);
        let dn = d.get(t.anchor, t.negative);
        let h = margin + dp - dn;
        if h > 0.0 {
            loss += h;
            accumulate_distance_grad(x, &mut grad, t.anchor, t.positive, dp, scale);
            accumulate_distance_grad(x, &mut grad, t.anchor, t.negative, dn, -scale);
        }
    }
    Ok((loss * scale, grad))
}

/// Label-smoothed target: `1 − (N−1)ε/N` at `y`, `ε/N` elsewhere.
pub fn smooth_targets(num_classes: usize, epsilon: f64, y: usize) -> Result<Vec<f64>> {
    if y >= num_classes {
        return Err(ReidError::ClassOutOfRange {
            class: y,
            num_classes,
        });
    }
    let n = num_classes as f64;
    let off = epsilon / n;
    let mut q = vec![off; num_classes];
    q[y] = 1.0 - (n - 1.0) / n * epsilon;
    Ok(q)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `Σ −q_i log p_i` with `p = softmax(logits)`; gradient w.r.t. logits is `p − q`.
pub fn softmax_ce_smoothed(logits: &[f64], y: usize, epsilon: f64) -> Result<(f64, Vec<f64>)> {
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(ReidError::NonFiniteLogit(i));
    }
    let q = smooth_targets(logits.len(), epsilon, y)?;
    let logp = log_softmax(logits);
    let loss = -q.iter().zip(&logp).map(|(qi, lp)| qi * lp).sum::<f64>();
    let grad = logp.iter().zip(&q).map(|(lp, qi)| lp.exp() - qi).collect();
    Ok((loss, grad))
}

/// Batch mean of [`softmax_ce_smoothed`] over logit rows.
pub fn softmax_ce_smoothed_batch(
    logits: &Matrix,
    labels: &[usize],
    epsilon: f64,
) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(ReidError::LengthMismatch {
            expected: logits.rows(),
            found: labels.len(),
        });
    }
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_ce_smoothed(logits.row(i), y, epsilon)?;
        total += l;
        for (slot, v) in grad.row_mut(i).iter_mut().zip(g) {
            *slot = v / n;
        }
    }
    Ok((total / n, grad))
}

/// `λ_T · L_T + λ_S · L_S`.
pub fn trisoft(triplet_loss: f64, softmax_loss: f64, params: &LossParams) -> f64 {
    params.lambda_triplet * triplet_loss + params.lambda_softmax * softmax_loss
}

/// Shannon entropy of a probability vector, `0·log 0 = 0`.
pub fn entropy(q: &[f64]) -> f64 {
    -q.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}
