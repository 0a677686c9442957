//! Pairwise distances between query and gallery embeddings, then metadata fusion.

use std::collections::BTreeMap;

use reid_rank::distance::{fuse_metadata, metadata_distances, pairwise_euclidean, FusionWeights};
use reid_rank::Matrix;

fn main() -> reid_rank::Result<()> {
    let query = Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]])?;
    let gallery = Matrix::from_rows(&[[0.0, 1.0], [3.0, 3.0], [6.0, 8.0]])?;
    let d = pairwise_euclidean(&query, &gallery)?;
    println!("raw distances:");
    for row in d.iter_rows() {
        println!("  {row:?}");
    }

    // one-hot color codes: query 0 and gallery 1 share a color
    let q_color = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])?;
    let g_color = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])?;
    let meta = metadata_distances(
        &BTreeMap::from([("color".to_string(), q_color)]),
        &BTreeMap::from([("color".to_string(), g_color)]),
    )?;
    let fused = fuse_metadata(&d, &meta, &FusionWeights::new().with("color", 2.0))?;
    println!("with color weight 2.0:");
    for row in fused.iter_rows() {
        println!("  {row:?}");
    }
    Ok(())
}
