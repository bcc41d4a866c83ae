//! Training dynamics on small synthetic datasets.

use ae2::data::{Split, VideoRecord};
use ae2::synth::{generate, SynthConfig};
use ae2::train::{TrainConfig, Trainer};

fn small() -> (ae2::synth::SynthDataset, TrainConfig) {
    let data = generate(&SynthConfig {
        seed: 9,
        videos_per_split: [8, 2, 2],
        t_min: 16,
        t_max: 24,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        hidden_dim: 16,
        frames_per_seq: 16,
        pos_frames: 16,
        seed: 4,
        ..TrainConfig::default()
    };
    (data, cfg)
}

fn splits(d: &ae2::synth::SynthDataset) -> (Vec<&VideoRecord>, Vec<&VideoRecord>) {
    (
        d.videos.iter().filter(|v| v.split == Split::Train).collect(),
        d.videos.iter().filter(|v| v.split == Split::Val).collect(),
    )
}

#[test]
fn alignment_loss_decreases() {
    let (data, cfg) = small();
    let (train, val) = splits(&data);
    let mut t = Trainer::new(cfg, data.config.dims()).unwrap();
    t.fit(&train, &val).unwrap();
    let log = t.log();
    assert_eq!(log.len(), 20);
    let first: f64 = log[..3].iter().map(|l| l.align).sum::<f64>() / 3.0;
    let last: f64 = log[17..].iter().map(|l| l.align).sum::<f64>() / 3.0;
    assert!(last < 0.9 * first, "first {first} last {last}");
    let v0 = log[0].val_total.unwrap();
    let v1 = log.iter().filter_map(|l| l.val_total).fold(f64::INFINITY, f64::min);
    assert!(v1 < v0);
    assert!(log.iter().all(|l| l.total.is_finite() && l.reg >= 0.0));
}

#[test]
fn same_seed_same_weights() {
    let (data, mut cfg) = small();
    cfg.epochs = 3;
    let (train, val) = splits(&data);
    let run = || {
        let mut t = Trainer::new(cfg.clone(), data.config.dims()).unwrap();
        t.fit(&train, &val).unwrap();
        t.checkpoint().encode()
    };
    assert_eq!(run(), run());
    let mut other = cfg.clone();
    other.seed += 1;
    let mut t = Trainer::new(other, data.config.dims()).unwrap();
    t.fit(&train, &val).unwrap();
    assert_ne!(t.checkpoint().encode(), run());
}

#[test]
fn best_checkpoint_tracks_best_score() {
    let (data, mut cfg) = small();
    cfg.epochs = 6;
    let (train, val) = splits(&data);
    let mut t = Trainer::new(cfg, data.config.dims()).unwrap();
    t.fit(&train, &val).unwrap();
    let best = t.best().unwrap();
    let top = t
        .log()
        .iter()
        .map(|l| -l.val_total.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.score, top);
    assert_eq!(-t.log()[best.epoch as usize].val_total.unwrap(), best.score);
}
