//! Triplet and label-smoothed softmax losses with finite-difference gradient checks.

use reid_rank::gradcheck::run_suite;
use reid_rank::losses::{
    batch_hard_mine, smooth_targets, softmax_ce_smoothed, triplet_loss_batch_hard,
    triplet_loss_full, trisoft, LabeledBatch, LossParams,
};
use reid_rank::Matrix;

fn main() -> reid_rank::Result<()> {
    let x = Matrix::from_rows(&[
        [0.0, 0.0],
        [0.4, 0.1],
        [1.0, 0.2],
        [0.9, 0.9],
        [0.5, 1.2],
        [1.1, 1.0],
    ])?;
    let batch = LabeledBatch::new(x, vec![0, 0, 1, 1, 2, 2])?;
    let margin = 0.3;

    let (full, _) = triplet_loss_full(&batch, margin)?;
    let (hard, _) = triplet_loss_batch_hard(&batch, margin)?;
    println!("triplet loss, all triplets: {full:.6}");
    println!("triplet loss, batch-hard:   {hard:.6}");
    for t in batch_hard_mine(&batch)? {
        println!(
            "  anchor {} hardest positive {} hardest negative {}",
            t.anchor, t.positive, t.negative
        );
    }

    println!(
        "smoothed targets (N=5, eps=0.1, y=2): {:?}",
        smooth_targets(5, 0.1, 2)?
    );
    let (ce, grad) = softmax_ce_smoothed(&[2.0, -1.0, 0.5, 0.0, 1.0], 2, 0.1)?;
    println!("softmax CE {ce:.6}, gradient {grad:.4?}");

    let params = LossParams {
        margin,
        epsilon: 0.1,
        lambda_triplet: 1.0,
        lambda_softmax: 1.0,
        num_classes: 5,
    };
    params.validate()?;
    println!("TriSoft total: {:.6}", trisoft(hard, ce, &params));

    for c in run_suite(0, 3, margin, 0.1) {
        println!(
            "gradcheck {:<20} seed {} max rel err {:.2e}",
            c.kernel, c.seed, c.max_rel_error
        );
    }
    Ok(())
}
