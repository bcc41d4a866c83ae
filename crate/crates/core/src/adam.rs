//! Adam with bias correction and decoupled weight decay.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor2;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .blocks()
                .iter()
                .map(|b| Tensor2::zeros(b.value.rows(), b.value.cols()))
                .collect()
        };
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every block, then gradients are zeroed.
    ///
    /// Any non-finite gradient aborts before a single parameter changes.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if self.m.len() != params.blocks().len() {
            return Err(Error::dim("optimizer state does not match parameter store"));
        }
        for b in params.blocks() {
            if !b.grad.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in block {}", b.name)));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for ((block, m), v) in params.blocks_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = block.grad.data();
            let p = block.value.data_mut();
            for i in 0..p.len() {
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g[i];
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g[i] * g[i];
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                p[i] *= decay;
            }
        }
        params.zero_grad();
        Ok(())
    }

    /// Moment buffers flattened in block order (first moments, then second).
    pub fn flat_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let flat = |ts: &[Tensor2]| ts.iter().flat_map(|t| t.data().iter().copied()).collect();
        (flat(&self.m), flat(&self.v))
    }

    /// Restores step counter and moments saved with [`AdamState::flat_moments`].
    pub fn restore(&mut self, step: u64, m: &[f64], v: &[f64]) -> Result<()> {
        let total: usize = self.m.iter().map(|t| t.len()).sum();
        if m.len() != total || v.len() != total {
            return Err(Error::dim("optimizer moments do not match parameter count"));
        }
        let mut off = 0;
        for (mt, vt) in self.m.iter_mut().zip(&mut self.v) {
            let n = mt.len();
            mt.data_mut().copy_from_slice(&m[off..off + n]);
            vt.data_mut().copy_from_slice(&v[off..off + n]);
            off += n;
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("w", Tensor2::from_rows(&[[v]]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = scalar_store(0.7);
        let mut opt = AdamState::new(&s, 0.1, 0.0);
        for _ in 0..5 {
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.flat_values(), vec![0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g|+eps)
        let mut s = scalar_store(1.0);
        let id = s.id("w").unwrap();
        s.accumulate(id, &Tensor2::from_rows(&[[1.0]]).unwrap()).unwrap();
        let mut opt = AdamState::new(&s, 0.1, 0.0);
        opt.step(&mut s).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((s.flat_values()[0] - expected).abs() < 1e-15);
        assert!((s.flat_values()[0] - 0.9).abs() < 1e-8);
        assert_eq!(s.flat_grads(), vec![0.0]);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        for g in [2.5, -0.3] {
            let mut s = scalar_store(0.0);
            let id = s.id("w").unwrap();
            let mut opt = AdamState::new(&s, 0.01, 0.0);
            for _ in 0..50 {
                s.accumulate(id, &Tensor2::from_rows(&[[g]]).unwrap()).unwrap();
                opt.step(&mut s).unwrap();
            }
            assert!(s.flat_values()[0] * g < 0.0);
        }
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut s = scalar_store(2.0);
        let mut opt = AdamState::new(&s, 0.1, 0.5);
        opt.step(&mut s).unwrap();
        assert!((s.flat_values()[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut s = scalar_store(1.0);
        let id = s.id("w").unwrap();
        s.accumulate(id, &Tensor2::from_rows(&[[f64::NAN]]).unwrap()).unwrap();
        let mut opt = AdamState::new(&s, 0.1, 0.0);
        let err = opt.step(&mut s).unwrap_err();
        assert!(err.to_string().contains("w"));
        assert_eq!(s.flat_values(), vec![1.0]);
    }

    #[test]
    fn bitwise_deterministic() {
        let run = || {
            let mut s = scalar_store(0.3);
            let id = s.id("w").unwrap();
            let mut opt = AdamState::new(&s, 0.05, 1e-3);
            for k in 0..20 {
                s.accumulate(id, &Tensor2::from_rows(&[[(k as f64).sin()]]).unwrap()).unwrap();
                opt.step(&mut s).unwrap();
            }
            s.flat_values()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
