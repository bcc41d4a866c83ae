//! Soft and hard alignment of two short embedding sequences.
//!
//! `b` is a time-stretched, noisy copy of `a`, so the hard path should hug
//! the stretched diagonal and every frame's nearest neighbour should land
//! at roughly the matching relative position.

use ae2::alignment::{align_loss, cost_matrix, dtw_forward, hard_dtw, sync_map};
use ae2::tensor::Tensor2;

fn main() -> ae2::error::Result<()> {
    let m = 6;
    let n = 9;
    let a = Tensor2::from_vec(
        m,
        3,
        (0..m)
            .flat_map(|i| {
                let t = i as f64 / (m - 1) as f64;
                [t.cos(), t.sin(), 1.0 - t]
            })
            .collect(),
    )?;
    let b = Tensor2::from_vec(
        n,
        3,
        (0..n)
            .flat_map(|j| {
                let t = j as f64 / (n - 1) as f64;
                let wobble = 0.02 * (j as f64 * 1.7).sin();
                [t.cos() + wobble, t.sin() - wobble, 1.0 - t]
            })
            .collect(),
    )?;

    let beta = 0.1;
    let cost = cost_matrix(&a, &b, beta)?;
    println!("cost matrix ({m} x {n}):");
    for i in 0..m {
        let row: Vec<String> = (0..n).map(|j| format!("{:5.2}", cost.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }

    let (hard, path) = hard_dtw(&cost);
    println!("hard DTW cost {hard:.4}, path {path:?}");
    for gamma in [1.0, 0.1, 0.01] {
        let soft = dtw_forward(&cost, gamma)?.loss;
        println!("soft DTW gamma={gamma:<5} loss {soft:.4} (gap to hard {:.4})", hard - soft);
    }

    let g = align_loss(&a, &b, beta, 0.1)?;
    println!("alignment loss {:.4}, |dL/da| max {:.3e}", g.loss, g.dx.max_abs());

    let sync = sync_map(&a, &b)?;
    println!("nearest neighbours a -> b: {:?}", sync.map);
    Ok(())
}
