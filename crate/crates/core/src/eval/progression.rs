//! Phase progression: ridge regression from embeddings to key-event offsets.

use nalgebra::DMatrix;

use super::EvalVideo;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Per-frame targets `(i - e_j) / T`, one column per key event.
pub fn progression_targets(key_events: &[usize], len: usize) -> Result<Tensor2> {
    if len < 2 {
        return Err(Error::Eval(format!(
            "progression targets need at least 2 frames, got {len}"
        )));
    }
    let t = len as f64;
    let mut out = Tensor2::zeros(len, key_events.len());
    for i in 0..len {
        for (j, &e) in key_events.iter().enumerate() {
            out[(i, j)] = (i as f64 - e as f64) / t;
        }
    }
    Ok(out)
}

/// Ridge regression with an unpenalised bias, one output per target column.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegressor {
    /// `d × targets`.
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub ridge: f64,
}

impl LinearRegressor {
    pub fn fit(x: &Tensor2, y: &Tensor2, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) {
            return Err(Error::Config(format!("ridge strength {ridge} must be >= 0")));
        }
        if x.rows() != y.rows() || x.rows() == 0 {
            return Err(Error::dim(format!(
                "regression needs matching non-empty rows, got {} and {}",
                x.rows(),
                y.rows()
            )));
        }
        let (n, d) = x.shape();
        let a = DMatrix::from_fn(n, d + 1, |r, c| if c < d { x[(r, c)] } else { 1.0 });
        let mut gram = a.transpose() * &a;
        for i in 0..d {
            gram[(i, i)] += ridge;
        }
        let b = DMatrix::from_row_slice(n, y.cols(), y.data());
        let rhs = a.transpose() * b;
        let sol = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| Error::Numeric("ridge system is singular".into()))?;
        let mut weights = Tensor2::zeros(d, y.cols());
        for r in 0..d {
            for c in 0..y.cols() {
                weights[(r, c)] = sol[(r, c)];
            }
        }
        let bias = (0..y.cols()).map(|c| sol[(d, c)]).collect();
        Ok(Self {
            weights,
            bias,
            ridge,
        })
    }

    pub fn predict(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut out = x.matmul(&self.weights)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// Coefficient of determination of one column.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Eval("R² is undefined for a constant target".into()));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² averaged over target columns.
pub fn mean_r2(truth: &Tensor2, pred: &Tensor2) -> Result<f64> {
    if truth.shape() != pred.shape() || truth.cols() == 0 {
        return Err(Error::dim(format!(
            "R² shapes {:?} vs {:?}",
            truth.shape(),
            pred.shape()
        )));
    }
    let t = truth.transpose();
    let p = pred.transpose();
    let mut total = 0.0;
    for c in 0..t.rows() {
        total += r2(t.row(c), p.row(c))?;
    }
    Ok(total / t.rows() as f64)
}

/// Stacks inputs and targets; `modified` appends `0.001 · i / T`.
fn design(videos: &[EvalVideo], modified: bool) -> Result<(Tensor2, Tensor2)> {
    let events = videos
        .first()
        .map(|v| v.key_events.len())
        .ok_or_else(|| Error::Eval("no videos for progression".into()))?;
    if events == 0 {
        return Err(Error::Eval("progression needs key events".into()));
    }
    let d = videos[0].embeddings.cols() + usize::from(modified);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for v in videos {
        if v.key_events.len() != events {
            return Err(Error::Eval(format!(
                "{} has {} key events, expected {events}",
                v.id,
                v.key_events.len()
            )));
        }
        let y = progression_targets(&v.key_events, v.len())?;
        let t = v.len() as f64;
        for i in 0..v.len() {
            xs.extend_from_slice(v.embeddings.row(i));
            if modified {
                xs.push(0.001 * i as f64 / t);
            }
            ys.extend_from_slice(y.row(i));
        }
    }
    let n = ys.len() / events;
    Ok((Tensor2::from_vec(n, d, xs)?, Tensor2::from_vec(n, events, ys)?))
}

/// Fits on `train`, reports mean R² on `test`.
pub fn phase_progression(
    train: &[EvalVideo],
    test: &[EvalVideo],
    modified: bool,
    ridge: f64,
) -> Result<f64> {
    let (x, y) = design(train, modified)?;
    let (tx, ty) = design(test, modified)?;
    let reg = LinearRegressor::fit(&x, &y, ridge)?;
    mean_r2(&ty, &reg.predict(&tx)?)
}
