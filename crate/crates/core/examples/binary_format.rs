//! Writes a matrix in the `REID` binary format, reads it back and shows how
//! malformed files are rejected.

use reid_rank::dataset::{decode_matrix, encode_matrix, load_matrix, save_matrix};
use reid_rank::Matrix;

fn main() -> reid_rank::Result<()> {
    let dir = std::env::temp_dir().join("reid-rank-binary-format");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("embeddings.bin");

    let m = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5);
    save_matrix(&m, &path)?;
    let back = load_matrix(&path)?;
    println!(
        "wrote and read {:?}, bitwise equal: {}",
        back.shape(),
        back.bitwise_eq(&m)
    );

    let bytes = encode_matrix(&m);
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut nan = bytes.clone();
    nan[28..36].copy_from_slice(&f64::NAN.to_le_bytes());
    for (label, data) in [
        ("truncated", &bytes[..bytes.len() - 3]),
        ("wrong magic", &bad_magic[..]),
        ("NaN payload", &nan[..]),
    ] {
        match decode_matrix(data, &path) {
            Ok(_) => println!("{label}: accepted"),
            Err(e) => println!("{label}: {e}"),
        }
    }
    Ok(())
}
