//! Runs the full evaluation suite on hand-made embeddings.
//!
//! Each video walks along a circle whose angle is its progress through the
//! task, plus a view-dependent offset in an extra dimension.

use ae2::data::View;
use ae2::eval::{evaluate, retrieve, EvalConfig, EvalVideo, RetrievalScope};
use ae2::tensor::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn video(id: String, view: View, len: usize, rng: &mut ChaCha8Rng) -> EvalVideo {
    let shift = if view == View::Ego { 0.3 } else { -0.3 };
    let data = (0..len)
        .flat_map(|t| {
            let a = std::f64::consts::PI * t as f64 / len as f64;
            [a.cos() + rng.random_range(-0.1..0.1), a.sin() + rng.random_range(-0.1..0.1), shift]
        })
        .collect();
    EvalVideo {
        id,
        view,
        embeddings: Tensor2::from_vec(len, 3, data).unwrap(),
        key_events: vec![len / 3, 2 * len / 3],
    }
}

fn main() -> ae2::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut make = |n: usize, tag: &str| -> Vec<EvalVideo> {
        (0..n)
            .map(|i| {
                let view = if i % 2 == 0 { View::Ego } else { View::Exo };
                let len = rng.random_range(20..30);
                video(format!("{tag}{i}"), view, len, &mut rng)
            })
            .collect()
    };
    let train = make(8, "train");
    let test = make(6, "test");

    let (report, warnings) = evaluate(&train, &test, &EvalConfig::default())?;
    print!("{}", report.to_text());
    for w in warnings {
        println!("warning: {w}");
    }

    let q = &retrieve(&test, 3, RetrievalScope::Ego2Exo)?[0];
    println!("query {} frame {} (phase {}):", test[q.video].id, q.frame, q.label);
    for h in &q.hits {
        println!("  {} frame {} phase {} sim {:.3}", test[h.video].id, h.frame, h.label, h.similarity);
    }
    Ok(())
}
