//! Write a patch-embedding matrix as a KEMB file, read it back, and inspect
//! the header.
//!
//! ```bash
//! cargo run --example kemb_roundtrip
//! ```

use imgk::embedding::{read_embeddings, write_embeddings, PatchEmbeddings};
use ndarray::Array2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("shoe-front.kemb");

    // 196 patches x 1024 dims, the ViT-L/16 shape
    let patches = Array2::from_shape_fn((196, 1024), |(p, d)| ((p * 31 + d) % 97) as f32 / 97.0 - 0.5);
    let e = PatchEmbeddings::new("shoe-front", "vit-l16-in21k", patches)?;
    write_embeddings(&e, &path)?;

    let bytes = std::fs::read(&path)?;
    let json_len = u32::from_le_bytes(bytes[16..20].try_into()?) as usize;
    println!("magic    {:?}", std::str::from_utf8(&bytes[0..4])?);
    println!("version  {}", bytes[4]);
    println!("shape    {} x {}", u32::from_le_bytes(bytes[8..12].try_into()?), u32::from_le_bytes(bytes[12..16].try_into()?));
    println!("metadata {}", std::str::from_utf8(&bytes[20..20 + json_len])?);
    println!("size     {} bytes", bytes.len());

    let back = read_embeddings(&path)?;
    assert_eq!(back, e);
    println!("roundtrip ok: {} ({} x {})", back.image_id(), back.n_patches(), back.dim());

    // a truncated file is rejected rather than zero-padded
    std::fs::write(&path, &bytes[..bytes.len() - 4])?;
    println!("truncated: {}", read_embeddings(&path).unwrap_err());
    Ok(())
}
