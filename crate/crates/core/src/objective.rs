//! Reversed-sequence contrastive regularizer and the combined training loss.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::alignment::align_loss;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// How the negative sequence is built from the positive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeMode {
    #[default]
    FullReverse,
    /// Reverse either the first or the second half, chosen with equal odds.
    HalfReverse,
    /// Uniform random permutation. Ablation only.
    RandomShuffle,
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            NegativeMode::FullReverse => "full_reverse",
            NegativeMode::HalfReverse => "half_reverse",
            NegativeMode::RandomShuffle => "random_shuffle",
        })
    }
}

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_reverse" | "reverse" => Ok(NegativeMode::FullReverse),
            "half_reverse" => Ok(NegativeMode::HalfReverse),
            "random_shuffle" | "shuffle" => Ok(NegativeMode::RandomShuffle),
            _ => Err(Error::Config(format!("unknown negative mode {s:?}"))),
        }
    }
}

/// Row order of the negative: output row `k` is input row `perm[k]`.
pub fn negative_permutation<R: Rng + ?Sized>(
    len: usize,
    mode: NegativeMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if len < 2 {
        return Err(Error::Degenerate(format!(
            "a negative needs at least 2 frames, got {len}"
        )));
    }
    let mut perm: Vec<usize> = (0..len).collect();
    match mode {
        NegativeMode::FullReverse => perm.reverse(),
        NegativeMode::HalfReverse => {
            let half = len / 2;
            if rng.random_bool(0.5) {
                perm[..half].reverse();
            } else {
                perm[half..].reverse();
            }
        }
        NegativeMode::RandomShuffle => perm.shuffle(rng),
    }
    Ok(perm)
}

pub fn make_negative<R: Rng + ?Sized>(x: &Tensor2, mode: NegativeMode, rng: &mut R) -> Result<Tensor2> {
    let perm = negative_permutation(x.rows(), mode, rng)?;
    Ok(x.select_rows(&perm))
}

#[derive(Debug, Clone)]
pub struct RegLoss {
    pub value: f64,
    pub dx: Tensor2,
    pub dy: Tensor2,
    /// Whether the hinge was strictly positive.
    pub active: bool,
}

/// `max(L(x, y) − L(neg(x), y), 0)`; zero gradient at or below the hinge.
pub fn reg_loss<R: Rng + ?Sized>(
    x: &Tensor2,
    y: &Tensor2,
    beta: f64,
    gamma: f64,
    mode: NegativeMode,
    rng: &mut R,
) -> Result<RegLoss> {
    let perm = negative_permutation(x.rows(), mode, rng)?;
    let neg = x.select_rows(&perm);
    let pos = align_loss(x, y, beta, gamma)?;
    let negl = align_loss(&neg, y, beta, gamma)?;
    let margin = pos.loss - negl.loss;
    if margin <= 0.0 {
        return Ok(RegLoss {
            value: 0.0,
            dx: Tensor2::zeros(x.rows(), x.cols()),
            dy: Tensor2::zeros(y.rows(), y.cols()),
            active: false,
        });
    }
    let mut dx = pos.dx;
    for (k, &src) in perm.iter().enumerate() {
        for (d, g) in dx.row_mut(src).iter_mut().zip(negl.dx.row(k)) {
            *d -= g;
        }
    }
    let dy = pos.dy.sub(&negl.dy)?;
    Ok(RegLoss {
        value: margin,
        dx,
        dy,
        active: true,
    })
}

/// Hyperparameters of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub negative_mode: NegativeMode,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            gamma: 0.1,
            lambda: 1.0,
            negative_mode: NegativeMode::FullReverse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub align: f64,
    pub reg: f64,
    pub total: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub breakdown: LossBreakdown,
    pub dx: Tensor2,
    pub dy: Tensor2,
}

/// `align + λ·reg` on one pair of sequences.
pub fn total_loss<R: Rng + ?Sized>(
    x: &Tensor2,
    y: &Tensor2,
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<TotalLoss> {
    let al = align_loss(x, y, cfg.beta, cfg.gamma)?;
    let mut dx = al.dx;
    let mut dy = al.dy;
    let mut reg = 0.0;
    // λ = 0 skips the negative branch entirely, including its rng draw.
    if cfg.lambda != 0.0 {
        let r = reg_loss(x, y, cfg.beta, cfg.gamma, cfg.negative_mode, rng)?;
        reg = r.value;
        if r.active {
            dx.axpy(cfg.lambda, &r.dx)?;
            dy.axpy(cfg.lambda, &r.dy)?;
        }
    }
    Ok(TotalLoss {
        breakdown: LossBreakdown {
            align: al.loss,
            reg,
            total: al.loss + cfg.lambda * reg,
            lambda: cfg.lambda,
        },
        dx,
        dy,
    })
}
