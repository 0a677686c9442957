//! Replaces distances to each gallery track by the track mean.

use reid_rank::rerank::track_average;
use reid_rank::{ItemManifest, ItemRecord, Matrix, Split};

fn main() -> reid_rank::Result<()> {
    let manifest = ItemManifest::new(vec![
        ItemRecord::new("q0", Split::Query).identity(0),
        ItemRecord::new("g0", Split::Gallery).identity(0).track(10),
        ItemRecord::new("g1", Split::Gallery).identity(0).track(10),
        ItemRecord::new("g2", Split::Gallery).identity(1).track(11),
        ItemRecord::new("g3", Split::Gallery).identity(1),
        ItemRecord::new("g4", Split::Gallery).identity(0).track(10),
    ])?;
    let d = Matrix::from_rows(&[[0.2, 1.4, 0.9, 0.5, 0.5]])?;
    let avg = track_average(&d, &manifest)?;
    println!("before: {:?}", d.row(0));
    println!("after:  {:?}", avg.row(0));
    println!(
        "row sum {} -> {}",
        d.row(0).iter().sum::<f64>(),
        avg.row(0).iter().sum::<f64>()
    );
    Ok(())
}
