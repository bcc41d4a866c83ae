//! Differentiable building blocks as explicit forward/backward pairs.
//!
//! Every forward returns whatever the matching backward needs; there is no
//! tape. Backward functions return input gradients and, for layers with
//! weights, the weight gradients for the caller to accumulate.

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// `x · w + b` with `b` broadcast over rows.
pub fn linear(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    let mut y = x.matmul(w)?;
    add_bias(&mut y, b)?;
    Ok(y)
}

pub struct LinearGrads {
    pub dx: Tensor2,
    pub dw: Tensor2,
    pub db: Tensor2,
}

pub fn linear_backward(x: &Tensor2, w: &Tensor2, dy: &Tensor2) -> Result<LinearGrads> {
    Ok(LinearGrads {
        dx: dy.matmul_t(w)?,
        dw: x.t_matmul(dy)?,
        db: dy.sum_rows(),
    })
}

pub fn add_bias(y: &mut Tensor2, b: &Tensor2) -> Result<()> {
    if b.shape() != (1, y.cols()) {
        return Err(Error::dim(format!(
            "bias {}x{} does not broadcast over {} columns",
            b.rows(),
            b.cols(),
            y.cols()
        )));
    }
    for r in 0..y.rows() {
        for (v, bb) in y.row_mut(r).iter_mut().zip(b.data()) {
            *v += bb;
        }
    }
    Ok(())
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation.
pub fn relu_backward(pre: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let data = pre
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    Tensor2::from_vec(pre.rows(), pre.cols(), data).expect("shape preserved")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

/// Gradient through row softmax given its output `y`.
pub fn softmax_rows_backward(y: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = dy.row(r);
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((d, &yv), &gv) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *d = yv * (gv - inner);
        }
    }
    dx
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Saved state of a layer-norm forward pass.
pub struct LayerNormCache {
    pub x_hat: Tensor2,
    pub inv_std: Vec<f64>,
}

/// Per-row layer normalization with affine `gamma`, `beta` (both 1×cols).
pub fn layer_norm(x: &Tensor2, gamma: &Tensor2, beta: &Tensor2) -> (Tensor2, LayerNormCache) {
    let n = x.cols() as f64;
    let mut x_hat = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x_hat.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    let mut y = x_hat.clone();
    for r in 0..y.rows() {
        for ((v, g), b) in y.row_mut(r).iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = *v * g + b;
        }
    }
    (y, LayerNormCache { x_hat, inv_std })
}

pub struct LayerNormGrads {
    pub dx: Tensor2,
    pub dgamma: Tensor2,
    pub dbeta: Tensor2,
}

pub fn layer_norm_backward(cache: &LayerNormCache, gamma: &Tensor2, dy: &Tensor2) -> LayerNormGrads {
    let (rows, cols) = dy.shape();
    let n = cols as f64;
    let mut dx = Tensor2::zeros(rows, cols);
    let mut dgamma = Tensor2::zeros(1, cols);
    let mut dbeta = Tensor2::zeros(1, cols);
    let mut g_hat = vec![0.0; cols];
    for r in 0..rows {
        let xh = cache.x_hat.row(r);
        let gy = dy.row(r);
        for c in 0..cols {
            dgamma.data_mut()[c] += gy[c] * xh[c];
            dbeta.data_mut()[c] += gy[c];
            g_hat[c] = gy[c] * gamma.data()[c];
        }
        let mean_g: f64 = g_hat.iter().sum::<f64>() / n;
        let mean_gx: f64 = g_hat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let is = cache.inv_std[r];
        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
            *d = is * (g_hat[c] - mean_g - xh[c] * mean_gx);
        }
    }
    LayerNormGrads { dx, dgamma, dbeta }
}

/// Gradient of `x.mean_rows()` back to an `rows`×cols input.
pub fn mean_rows_backward(rows: usize, dy: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(rows, dy.cols());
    let inv = 1.0 / rows as f64;
    for r in 0..rows {
        for (d, g) in dx.row_mut(r).iter_mut().zip(dy.data()) {
            *d = g * inv;
        }
    }
    dx
}

/// Splits the gradient of `a.concat_rows(b)` into its two parts.
pub fn concat_rows_backward(top_rows: usize, dy: &Tensor2) -> (Tensor2, Tensor2) {
    let cols = dy.cols();
    let top = Tensor2::from_vec(top_rows, cols, dy.data()[..top_rows * cols].to_vec())
        .expect("prefix shape");
    let bottom = Tensor2::from_vec(
        dy.rows() - top_rows,
        cols,
        dy.data()[top_rows * cols..].to_vec(),
    )
    .expect("suffix shape");
    (top, bottom)
}

/// Row reversal is its own adjoint.
pub fn reverse_rows_backward(dy: &Tensor2) -> Tensor2 {
    dy.reverse_rows()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor2::from_vec(rows, cols, data).unwrap()
    }

    // Scalar objective <y, probe> so backward seeds are `probe`.
    fn fd_check(x: &Tensor2, probe: &Tensor2, f: impl Fn(&Tensor2) -> Tensor2, analytic: &Tensor2) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fp: f64 = f(&xp).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
            let fm: f64 = f(&xm).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
            let num = (fp - fm) / (2.0 * h);
            let a = analytic.data()[i];
            assert!(
                (a - num).abs() <= 1e-7 * (1.0 + a.abs()),
                "entry {i}: analytic {a} vs numeric {num}"
            );
        }
    }

    #[test]
    fn softmax_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(3, 4, &mut rng);
        let probe = random(3, 4, &mut rng);
        let y = softmax_rows(&x);
        let dx = softmax_rows_backward(&y, &probe);
        fd_check(&x, &probe, softmax_rows, &dx);
    }

    #[test]
    fn layer_norm_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(3, 5, &mut rng);
        let gamma = random(1, 5, &mut rng);
        let beta = random(1, 5, &mut rng);
        let probe = random(3, 5, &mut rng);
        let (_, cache) = layer_norm(&x, &gamma, &beta);
        let g = layer_norm_backward(&cache, &gamma, &probe);
        fd_check(&x, &probe, |x| layer_norm(x, &gamma, &beta).0, &g.dx);
        fd_check(&gamma, &probe, |gm| layer_norm(&x, gm, &beta).0, &g.dgamma);
        fd_check(&beta, &probe, |bt| layer_norm(&x, &gamma, bt).0, &g.dbeta);
    }

    #[test]
    fn linear_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(4, 3, &mut rng);
        let w = random(3, 2, &mut rng);
        let b = random(1, 2, &mut rng);
        let probe = random(4, 2, &mut rng);
        let g = linear_backward(&x, &w, &probe).unwrap();
        fd_check(&x, &probe, |x| linear(x, &w, &b).unwrap(), &g.dx);
        fd_check(&w, &probe, |w| linear(&x, w, &b).unwrap(), &g.dw);
        fd_check(&b, &probe, |b| linear(&x, &w, b).unwrap(), &g.db);
    }

    #[test]
    fn relu_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(3, 3, &mut rng);
        let probe = random(3, 3, &mut rng);
        fd_check(&x, &probe, relu, &relu_backward(&x, &probe));
        let probe1 = random(1, 3, &mut rng);
        fd_check(&x, &probe1, |x| x.mean_rows(), &mean_rows_backward(3, &probe1));
    }

    #[test]
    fn concat_split() {
        let a = Tensor2::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Tensor2::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let c = a.concat_rows(&b).unwrap();
        let (ta, tb) = concat_rows_backward(1, &c);
        assert_eq!(ta, a);
        assert_eq!(tb, b);
    }
}
