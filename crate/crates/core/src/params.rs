//! Named parameter blocks with paired gradient buffers.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Handle to a registered block; stable for the lifetime of the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
}

/// Parameter storage with a flat-vector view in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a block; names must be unique.
    pub fn register(&mut self, name: impl Into<String>, value: Tensor2) -> Result<BlockId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter block {name}")));
        }
        let grad = Tensor2::zeros(value.rows(), value.cols());
        let id = self.blocks.len();
        self.by_name.insert(name.clone(), id);
        self.blocks.push(ParamBlock { name, value, grad });
        Ok(BlockId(id))
    }

    pub fn id(&self, name: &str) -> Option<BlockId> {
        self.by_name.get(name).map(|&i| BlockId(i))
    }

    #[inline]
    pub fn value(&self, id: BlockId) -> &Tensor2 {
        &self.blocks[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: BlockId) -> &mut Tensor2 {
        &mut self.blocks[id.0].value
    }

    #[inline]
    pub fn grad(&self, id: BlockId) -> &Tensor2 {
        &self.blocks[id.0].grad
    }

    /// Adds `g` into the gradient buffer of `id`.
    pub fn accumulate(&mut self, id: BlockId, g: &Tensor2) -> Result<()> {
        let block = &mut self.blocks[id.0];
        block.grad.add_assign(g).map_err(|_| {
            Error::dim(format!(
                "gradient {}x{} for block {} of shape {}x{}",
                g.rows(),
                g.cols(),
                block.name,
                block.value.rows(),
                block.value.cols()
            ))
        })
    }

    /// Adds `g` into the given row of the gradient buffer of `id`.
    pub fn accumulate_row(&mut self, id: BlockId, row: usize, g: &[f64]) {
        let grad = self.blocks[id.0].grad.row_mut(row);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.grad.fill(0.0);
        }
    }

    pub fn scale_grad(&mut self, s: f64) {
        for b in &mut self.blocks {
            b.grad.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    /// Total scalar count across all blocks.
    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in &self.blocks {
            out.extend_from_slice(b.value.data());
        }
        out
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in &self.blocks {
            out.extend_from_slice(b.grad.data());
        }
        out
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(format!(
                "flat vector of length {} for a store of {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for b in &mut self.blocks {
            let n = b.value.len();
            b.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mutable access to one scalar addressed by its flat index.
    pub fn flat_value_mut(&mut self, mut index: usize) -> &mut f64 {
        for b in &mut self.blocks {
            let n = b.value.len();
            if index < n {
                return &mut b.value.data_mut()[index];
            }
            index -= n;
        }
        panic!("flat parameter index out of range");
    }
}

/// Glorot/Xavier uniform initialization for a fan_in×fan_out weight.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, limit, rng)
}

/// Uniform on [-a, a] with `a = std·√3`, matching the variance of N(0, std²).
pub fn scaled_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Tensor2 {
    uniform(rows, cols, std * 3f64.sqrt(), rng)
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, limit: f64, rng: &mut R) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor2::from_vec(rows, cols, data).expect("shape")
}
