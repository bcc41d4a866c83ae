//! Central finite-difference check of analytic parameter gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Relative error used by the checker: `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the gradient that `f` accumulates into `params` against central
/// differences with step `h`, over up to `max_samples` randomly chosen
/// coordinates (all of them when the store is smaller). Returns the maximum
/// relative error.
///
/// `f` must zero nothing itself: the checker clears gradients before the
/// analytic pass. Parameter values are restored before returning.
pub fn backprop_check<F, R>(
    params: &mut ParamStore,
    mut f: F,
    h: f64,
    max_samples: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
    R: Rng + ?Sized,
{
    if h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    params.zero_grad();
    let base = f(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric("objective is not finite".into()));
    }
    let analytic = params.flat_grads();
    let n = analytic.len();
    let coords: Vec<usize> = if n <= max_samples {
        (0..n).collect()
    } else {
        let mut c = sample(rng, n, max_samples).into_vec();
        c.sort_unstable();
        c
    };

    let mut worst = 0.0f64;
    for &i in &coords {
        let orig = *params.flat_value_mut(i);
        *params.flat_value_mut(i) = orig + h;
        let fp = f(params)?;
        *params.flat_value_mut(i) = orig - h;
        let fm = f(params)?;
        *params.flat_value_mut(i) = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!("objective not finite when perturbing parameter {i}")));
        }
        let numeric = (fp - fm) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    params.zero_grad();
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.register("a", Tensor2::from_rows(&[[0.5, -1.25, 2.0]]).unwrap()).unwrap();
        s.register("b", Tensor2::from_rows(&[[3.0], [-0.75]]).unwrap()).unwrap();
        s
    }

    #[test]
    fn linear_function_is_exact() {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = backprop_check(
            &mut s,
            |p| {
                for b in p.blocks_mut() {
                    b.grad.fill(1.0);
                }
                Ok(p.flat_values().iter().sum())
            },
            1e-5,
            100,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn quadratic() {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = backprop_check(
            &mut s,
            |p| {
                let mut total = 0.0;
                for b in p.blocks_mut() {
                    total += 0.5 * b.value.data().iter().map(|v| v * v).sum::<f64>();
                    b.grad = b.value.clone();
                }
                Ok(total)
            },
            1e-5,
            100,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = backprop_check(
            &mut s,
            |p| {
                let mut total = 0.0;
                for b in p.blocks_mut() {
                    total += b.value.data().iter().map(|v| v * v).sum::<f64>();
                    b.grad = b.value.clone();
                }
                Ok(total)
            },
            1e-5,
            100,
            &mut rng,
        )
        .unwrap();
        assert!(err > 0.3);
    }

    #[test]
    fn non_finite_objective() {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = backprop_check(&mut s, |_| Ok(f64::NAN), 1e-5, 10, &mut rng);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
