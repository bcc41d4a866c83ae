//! Finite-difference check of the encoder plus full training objective.

use ae2::encoder::{Encoder, EncoderConfig, FrameFeatures, Identity, RegionToken};
use ae2::gradcheck::backprop_check;
use ae2::objective::{total_loss, NegativeMode, ObjectiveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frames(n: usize, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Vec<FrameFeatures> {
    (0..n)
        .map(|_| FrameFeatures {
            global: (0..cfg.global_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            regions: vec![RegionToken {
                bbox: [0.1, 0.2, 0.4, 0.6],
                confidence: rng.random_range(0.2..1.0),
                feature: (0..cfg.region_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                identity: Identity::RightHand,
            }],
        })
        .collect()
}

fn main() -> ae2::error::Result<()> {
    let cfg = EncoderConfig {
        global_dim: 6,
        region_dim: 4,
        hidden_dim: 8,
        layers: 1,
        heads: 2,
        max_regions: 2,
        embed_dim: 5,
        global_only: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = frames(5, &cfg, &mut rng);
    let b = frames(7, &cfg, &mut rng);
    let mut enc = Encoder::new(cfg, 0)?;
    println!("encoder has {} parameters", enc.num_params());

    for mode in [NegativeMode::FullReverse, NegativeMode::HalfReverse, NegativeMode::RandomShuffle] {
        let obj = ObjectiveConfig {
            negative_mode: mode,
            ..ObjectiveConfig::default()
        };
        let mut store = enc.params.clone();
        let err = backprop_check(
            &mut store,
            |p| {
                std::mem::swap(&mut enc.params, p);
                let mut run = || -> ae2::error::Result<f64> {
                    let (x, cx) = enc.forward(&a)?;
                    let (y, cy) = enc.forward(&b)?;
                    let mut neg = ChaCha8Rng::seed_from_u64(7);
                    let t = total_loss(&x, &y, &obj, &mut neg)?;
                    enc.backward_cached(&cx, &t.dx)?;
                    enc.backward_cached(&cy, &t.dy)?;
                    Ok(t.breakdown.total)
                };
                let out = run();
                std::mem::swap(&mut enc.params, p);
                out
            },
            1e-5,
            usize::MAX,
            &mut rng,
        )?;
        println!("{mode:<14} max relative error {err:.2e}");
    }
    Ok(())
}
