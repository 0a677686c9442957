//! Central finite-difference checks for the loss kernels.
//!
//! Error metric per component: `|a − n| / max(1, |a|, |n|)`, i.e. relative for
//! large gradients and absolute below unit magnitude. Hinge kinks and mining
//! ties make the losses non-differentiable; random points closer than
//! [`DEGENERACY_GAP`] to either are rejected and redrawn.

use serde::Serialize;

use crate::losses::{
    euclid, softmax_ce_smoothed, triplet_loss_batch_hard, triplet_loss_full, LabeledBatch,
};
use crate::matrix::Matrix;
use crate::synth::GaussianStream;

pub const FD_STEP: f64 = 1e-6;
pub const DEGENERACY_GAP: f64 = 1e-4;
pub const MAX_REL_ERROR: f64 = 1e-6;
const MAX_RESAMPLES: usize = 1000;

/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn numerical_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub kernel: &'static str,
    pub seed: u64,
    pub max_rel_error: f64,
    /// Degenerate draws rejected before a usable point was found.
    pub resamples: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= MAX_REL_ERROR
    }
}

fn random_batch(rng: &mut GaussianStream, n: usize, dim: usize, classes: usize) -> LabeledBatch {
    // class centers one unit apart on average; noise of comparable scale so both hinge states occur
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| rng.vector(dim, 1.0)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| {
            let noise = rng.vector(dim, 0.7);
            centers[c].iter().zip(noise).map(|(a, b)| a + b).collect()
        })
        .collect();
    LabeledBatch::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
}

fn distances(b: &LabeledBatch) -> Matrix {
    let x = &b.embeddings;
    Matrix::from_fn(x.rows(), x.rows(), |i, j| euclid(x.row(i), x.row(j)))
}

fn has_short_pair(d: &Matrix) -> bool {
    (0..d.rows()).any(|i| (0..d.cols()).any(|j| i != j && d.get(i, j) < DEGENERACY_GAP))
}

/// True when any triplet hinge sits within the gap of its kink.
pub fn full_triplet_degenerate(b: &LabeledBatch, margin: f64) -> bool {
    let d = distances(b);
    if has_short_pair(&d) {
        return true;
    }
    let y = &b.labels;
    let n = b.len();
    (0..n).any(|a| {
        (0..n).filter(|&p| p != a && y[p] == y[a]).any(|p| {
            (0..n)
                .filter(|&q| y[q] != y[a])
                .any(|q| (margin + d.get(a, p) - d.get(a, q)).abs() < DEGENERACY_GAP)
        })
    })
}

/// True when any hinge is near its kink or any hardest-sample choice is near a tie.
pub fn batch_hard_degenerate(b: &LabeledBatch, margin: f64) -> bool {
    let d = distances(b);
    if has_short_pair(&d) {
        return true;
    }
    let y = &b.labels;
    let n = b.len();
    (0..n).any(|a| {
        let mut pos: Vec<f64> = (0..n)
            .filter(|&j| j != a && y[j] == y[a])
            .map(|j| d.get(a, j))
            .collect();
        let mut neg: Vec<f64> = (0..n)
            .filter(|&j| y[j] != y[a])
            .map(|j| d.get(a, j))
            .collect();
        pos.sort_by(|u, v| v.total_cmp(u));
        neg.sort_by(f64::total_cmp);
        let tie = |s: &[f64]| s.len() > 1 && (s[0] - s[1]).abs() < DEGENERACY_GAP;
        tie(&pos) || tie(&neg) || (margin + pos[0] - neg[0]).abs() < DEGENERACY_GAP
    })
}

#[allow(clippy::too_many_arguments)]
fn check_batch_kernel(
    kernel: &'static str,
    seed: u64,
    n: usize,
    dim: usize,
    classes: usize,
    margin: f64,
    degenerate: impl Fn(&LabeledBatch, f64) -> bool,
    loss: impl Fn(&LabeledBatch, f64) -> (f64, Matrix),
) -> GradCheck {
    let mut rng = GaussianStream::new(seed);
    let mut resamples = 0;
    let batch = loop {
        let b = random_batch(&mut rng, n, dim, classes);
        if !degenerate(&b, margin) || resamples >= MAX_RESAMPLES {
            break b;
        }
        resamples += 1;
    };
    let (_, grad) = loss(&batch, margin);
    let x0 = batch.embeddings.as_slice().to_vec();
    let numeric = numerical_gradient(
        |x| {
            let m = Matrix::new(n, dim, x.to_vec()).unwrap();
            loss(&batch.with_embeddings(m), margin).0
        },
        &x0,
        FD_STEP,
    );
    GradCheck {
        kernel,
        seed,
        max_rel_error: max_relative_error(grad.as_slice(), &numeric),
        resamples,
    }
}

/// Full triplet loss on a 12×4 batch with 3 classes.
pub fn check_triplet_full(seed: u64, margin: f64) -> GradCheck {
    check_batch_kernel(
        "triplet_full",
        seed,
        12,
        4,
        3,
        margin,
        full_triplet_degenerate,
        |b, m| triplet_loss_full(b, m).expect("batch has triplets"),
    )
}

/// Batch-hard triplet loss on a 16×4 batch with 4 classes.
pub fn check_triplet_batch_hard(seed: u64, margin: f64) -> GradCheck {
    check_batch_kernel(
        "triplet_batch_hard",
        seed,
        16,
        4,
        4,
        margin,
        batch_hard_degenerate,
        |b, m| triplet_loss_batch_hard(b, m).expect("every class has two samples"),
    )
}

/// Label-smoothed softmax cross-entropy on 6 logits.
pub fn check_softmax(seed: u64, epsilon: f64) -> GradCheck {
    let mut rng = GaussianStream::new(seed);
    let logits = rng.vector(6, 2.0);
    let y = (seed % 6) as usize;
    let (_, grad) = softmax_ce_smoothed(&logits, y, epsilon).expect("finite logits");
    let numeric = numerical_gradient(
        |z| softmax_ce_smoothed(z, y, epsilon).unwrap().0,
        &logits,
        FD_STEP,
    );
    GradCheck {
        kernel: "softmax_ce_smoothed",
        seed,
        max_rel_error: max_relative_error(&grad, &numeric),
        resamples: 0,
    }
}

/// Runs all three kernels over `batches` consecutive seeds starting at `seed`.
pub fn run_suite(seed: u64, batches: usize, margin: f64, epsilon: f64) -> Vec<GradCheck> {
    let mut out = Vec::with_capacity(3 * batches);
    for s in seed..seed + batches as u64 {
        out.push(check_triplet_full(s, margin));
        out.push(check_triplet_batch_hard(s, margin));
        out.push(check_softmax(s, epsilon));
    }
    out
}
