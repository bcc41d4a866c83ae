//! Shows the three negative constructions and the hinge regularizer.

use ae2::objective::{make_negative, negative_permutation, reg_loss, NegativeMode};
use ae2::tensor::Tensor2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ae2::error::Result<()> {
    let t = 8;
    let x = Tensor2::from_vec(
        t,
        2,
        (0..t)
            .flat_map(|i| {
                let a = i as f64 / t as f64 * std::f64::consts::PI;
                [a.cos(), a.sin()]
            })
            .collect(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for mode in [NegativeMode::FullReverse, NegativeMode::HalfReverse, NegativeMode::RandomShuffle] {
        let perm = negative_permutation(t, mode, &mut rng)?;
        let neg = make_negative(&x, mode, &mut ChaCha8Rng::seed_from_u64(1))?;
        println!("{mode:<14} order {perm:?}  first row of negative {:.3?}", neg.row(0));
        // against a matching partner the hinge is closed; against a
        // reversed one the negative aligns better and the hinge opens
        for (tag, y) in [("matching", x.clone()), ("reversed", x.reverse_rows())] {
            let r = reg_loss(&x, &y, 0.1, 0.1, mode, &mut ChaCha8Rng::seed_from_u64(1))?;
            println!("    partner {tag}: reg {:.4} (active {})", r.value, r.active);
        }
    }
    Ok(())
}
