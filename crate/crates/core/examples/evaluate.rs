//! mAP and CMC on a small hand-built ranking, with and without the AI City protocol.

use reid_rank::eval::{evaluate, EvalOptions};
use reid_rank::{ItemManifest, ItemRecord, Matrix, Split};

fn main() -> reid_rank::Result<()> {
    let manifest = ItemManifest::new(vec![
        ItemRecord::new("q_red", Split::Query).identity(1).camera(0),
        ItemRecord::new("q_blue", Split::Query)
            .identity(2)
            .camera(1),
        ItemRecord::new("g0", Split::Gallery).identity(1).camera(0),
        ItemRecord::new("g1", Split::Gallery).identity(2).camera(0),
        ItemRecord::new("g2", Split::Gallery).identity(1).camera(2),
        ItemRecord::new("g3", Split::Gallery).identity(3).camera(1),
    ])?;
    let dist = Matrix::from_rows(&[[0.1, 0.5, 0.7, 0.3], [0.9, 0.2, 0.6, 0.1]])?;

    for (label, options) in [
        ("all matches", EvalOptions::default()),
        ("AI City", EvalOptions::aicity()),
    ] {
        let report = evaluate(&dist, &manifest, &options)?;
        println!("== {label}");
        print!("{}", report.to_text());
    }
    Ok(())
}
