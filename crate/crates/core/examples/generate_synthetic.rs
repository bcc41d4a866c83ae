//! Generates a small synthetic ego/exo dataset and writes it to disk.
//!
//! Usage: `cargo run --example generate_synthetic [out_dir]`

use std::path::PathBuf;

use ae2::data::Dataset;
use ae2::synth::{generate, SynthConfig};

fn main() -> ae2::error::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ae2_synthetic"));
    let cfg = SynthConfig {
        seed: 3,
        videos_per_split: [8, 2, 4],
        repetition_prob: 0.5,
        ..SynthConfig::default()
    };
    let data = generate(&cfg)?;
    for (v, truth) in data.videos.iter().zip(&data.truth).take(6) {
        println!(
            "{:<14} {:?} {:>3} frames, key events {:?}, repeat {:?}",
            v.id,
            v.view,
            v.len(),
            v.key_events.as_deref().unwrap_or(&[]),
            truth.repeat
        );
    }
    let manifest = data.write(&out, true)?;
    let loaded = Dataset::load(&manifest)?;
    println!("wrote {} videos to {}", loaded.videos.len(), manifest.display());
    print!("{}", data.report());
    Ok(())
}
