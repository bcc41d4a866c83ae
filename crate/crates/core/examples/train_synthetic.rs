//! Trains an encoder on synthetic data and compares it with the untrained one.
//!
//! Usage: `cargo run --release --example train_synthetic [epochs]`

use ae2::data::{Split, VideoRecord};
use ae2::encoder::Encoder;
use ae2::eval::{map_at_k, phase_classification, EvalVideo, RetrievalScope, SvmConfig};
use ae2::synth::{generate, SynthConfig, SynthDataset};
use ae2::train::{load_encoder, TrainConfig, Trainer};

fn embed(enc: &Encoder, data: &SynthDataset, split: Split) -> Vec<EvalVideo> {
    data.videos
        .iter()
        .filter(|v| v.split == split)
        .map(|v| EvalVideo {
            id: v.id.clone(),
            view: v.view,
            embeddings: enc.encode_video(&v.frames).unwrap(),
            key_events: v.key_events.clone().unwrap(),
        })
        .collect()
}

fn report(tag: &str, enc: &Encoder, data: &SynthDataset) -> ae2::error::Result<()> {
    let train = embed(enc, data, Split::Train);
    let test = embed(enc, data, Split::Test);
    let f1 = phase_classification(&train, &test, &SvmConfig::default())?;
    let map = map_at_k(&test, 10, RetrievalScope::Ego2Exo)?;
    println!("{tag:<10} phase F1 {f1:.3}  ego->exo mAP@10 {map:.3}");
    Ok(())
}

fn main() -> ae2::error::Result<()> {
    let epochs = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs"));
    let data = generate(&SynthConfig::default())?;
    let train: Vec<&VideoRecord> = data.videos.iter().filter(|v| v.split == Split::Train).collect();
    let val: Vec<&VideoRecord> = data.videos.iter().filter(|v| v.split == Split::Val).collect();

    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg, data.config.dims())?;
    report("untrained", trainer.encoder(), &data)?;
    for _ in 0..epochs {
        let log = trainer.run_epoch(&train, &val)?;
        println!(
            "epoch {:>3}  align {:.4}  reg {:.4}  val {:.4}",
            log.epoch,
            log.align,
            log.reg,
            log.val_total.unwrap_or(f64::NAN)
        );
    }
    let best = load_encoder(&trainer.best_checkpoint())?;
    report("best", &best, &data)?;
    Ok(())
}
