//! Writes and reads back feature and embedding files.

use ae2::data::files::{read_embeddings, read_features, write_embeddings, write_features, FeatureDims};
use ae2::encoder::{FrameFeatures, Identity, RegionToken};
use ae2::tensor::Tensor2;

fn main() -> ae2::error::Result<()> {
    let dir = std::env::temp_dir().join("ae2_feature_files_example");
    std::fs::create_dir_all(&dir).map_err(|e| ae2::error::Error::io(&dir, e))?;

    let dims = FeatureDims {
        global_dim: 4,
        max_regions: 2,
        region_dim: 3,
    };
    let frames = vec![
        FrameFeatures {
            global: vec![0.5, -1.0, 0.25, 2.0],
            regions: vec![RegionToken {
                bbox: [0.125, 0.25, 0.5, 0.75],
                confidence: 0.875,
                feature: vec![1.0, 0.0, -1.0],
                identity: Identity::LeftHand,
            }],
        },
        FrameFeatures::global_only(vec![0.0, 0.0, 1.0, 0.0]),
    ];
    let fpath = dir.join("clip.ae2f");
    write_features(&fpath, &frames, dims)?;
    let (back, back_dims) = read_features(&fpath)?;
    println!(
        "{}: {} frames, dims {:?}, identical = {}",
        fpath.display(),
        back.len(),
        back_dims,
        back == frames
    );

    let emb = Tensor2::from_rows(&[[0.1f32 as f64, 0.2f32 as f64], [0.3f32 as f64, 0.4f32 as f64]])?;
    let epath = dir.join("clip.ae2e");
    write_embeddings(&epath, &emb)?;
    println!("{}: identical = {}", epath.display(), read_embeddings(&epath)? == emb);

    let mut bytes = std::fs::read(&fpath).map_err(|e| ae2::error::Error::io(&fpath, e))?;
    bytes.truncate(bytes.len() - 5);
    let bad = dir.join("truncated.ae2f");
    std::fs::write(&bad, bytes).map_err(|e| ae2::error::Error::io(&bad, e))?;
    match read_features(&bad) {
        Err(e) => println!("truncated file rejected: {e}"),
        Ok(_) => println!("truncated file unexpectedly accepted"),
    }
    Ok(())
}
