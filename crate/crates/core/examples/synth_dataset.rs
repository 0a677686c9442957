//! Generates a synthetic dataset, saves it as a dataset directory and validates it.

use reid_rank::synth::{generate, SynthConfig};
use reid_rank::Dataset;

fn main() -> reid_rank::Result<()> {
    let cfg = SynthConfig {
        num_identities: 10,
        seed: 7,
        ..Default::default()
    };
    let ds = generate(&cfg)?;
    let dir = std::env::temp_dir().join("reid-rank-synth");
    ds.save_dir(&dir)?;

    let back = Dataset::load_dir(&dir)?;
    println!(
        "{} items ({} queries, {} gallery), dim {}, families {:?}",
        back.manifest.len(),
        back.manifest.queries().len(),
        back.manifest.gallery().len(),
        back.embeddings.cols(),
        back.meta.families.keys().collect::<Vec<_>>()
    );
    println!("valid: {}", back.validate().is_ok());
    for line in back.manifest.to_text().lines().take(6) {
        println!("  {line}");
    }
    println!("written to {}", dir.display());
    Ok(())
}
