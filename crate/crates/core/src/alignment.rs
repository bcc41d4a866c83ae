//! Differentiable temporal alignment between two embedding sequences.
//!
//! The pairwise cost is the negative log of a row-wise softmax over cosine
//! similarities scaled by `1/beta`. The cumulative alignment cost follows the
//! DTW recurrence with `min` replaced by the log-sum-exp smooth minimum
//! `-γ ln Σ exp(-a_k/γ)`. The first row and column are accumulated directly
//! (a single predecessor), which matches the usual infinite-sentinel boundary
//! without putting infinities through `exp`.

use crate::error::{Error, Result};
use crate::nn::softmax_in_place;
use crate::tensor::{dot, l2_norm, Tensor2};

const MIN_ROW_NORM: f64 = 1e-12;

/// Sentinel stored in the unreachable boundary cells of the cumulative table.
pub const UNREACHABLE: f64 = f64::MAX;

/// Pairwise matching costs between an `m`-frame and an `n`-frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub c: Tensor2,
}

impl CostMatrix {
    pub fn new(c: Tensor2) -> Self {
        Self { c }
    }

    pub fn m(&self) -> usize {
        self.c.rows()
    }

    pub fn n(&self) -> usize {
        self.c.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// `(m+1)×(n+1)` cumulative table; `r[(0,0)] = 0`, other boundary cells
    /// hold [`UNREACHABLE`].
    pub r: Tensor2,
    pub loss: f64,
    /// `∂loss/∂c`, `m×n`.
    pub grad_c: Tensor2,
    pub gamma: f64,
}

/// For each reference frame, the index of the most similar target frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncMap {
    pub target_len: usize,
    pub map: Vec<usize>,
}

impl SyncMap {
    pub fn reference_len(&self) -> usize {
        self.map.len()
    }
}

/// Scales each row to unit L2 norm.
pub fn normalize_rows(x: &Tensor2) -> Result<Tensor2> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = l2_norm(row);
        if !(n > MIN_ROW_NORM) {
            return Err(Error::Degenerate(format!("row {r} has norm {n}")));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Gradient through [`normalize_rows`] given the input and its normalized form.
fn normalize_rows_backward(x: &Tensor2, x_hat: &Tensor2, d_hat: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let n = l2_norm(x.row(r));
        let xh = x_hat.row(r);
        let g = d_hat.row(r);
        let proj = dot(xh, g);
        for ((d, &gv), &xv) in dx.row_mut(r).iter_mut().zip(g).zip(xh) {
            *d = (gv - xv * proj) / n;
        }
    }
    dx
}

/// Intermediates of the cost computation needed for backpropagation.
struct CostCache {
    x_hat: Tensor2,
    y_hat: Tensor2,
    /// Row softmax of the scaled similarities.
    prob: Tensor2,
}

fn cost_matrix_cached(x: &Tensor2, y: &Tensor2, beta: f64) -> Result<(CostMatrix, CostCache)> {
    if x.cols() != y.cols() {
        return Err(Error::dim(format!(
            "embedding widths differ: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::Degenerate("empty sequence".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let x_hat = normalize_rows(x)?;
    let y_hat = normalize_rows(y)?;
    let mut prob = x_hat.matmul_t(&y_hat)?;
    let mut c = Tensor2::zeros(x.rows(), y.rows());
    for i in 0..prob.rows() {
        let row = prob.row_mut(i);
        row.iter_mut().for_each(|v| *v /= beta);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (cv, sv) in c.row_mut(i).iter_mut().zip(row.iter()) {
            // -log softmax is non-negative; clamp rounding below zero
            *cv = (lse - sv).max(0.0);
        }
        softmax_in_place(row);
    }
    Ok((CostMatrix { c }, CostCache { x_hat, y_hat, prob }))
}

/// `c_ij = -log softmax_j(x̂_i·ŷ_j / beta)` over unit-normalized rows.
pub fn cost_matrix(x: &Tensor2, y: &Tensor2, beta: f64) -> Result<CostMatrix> {
    cost_matrix_cached(x, y, beta).map(|(c, _)| c)
}

/// `-γ ln Σ exp(-v_k/γ)`, evaluated around the minimum for stability.
pub fn smooth_min(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::dim("smooth_min of an empty list"));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    Ok(smooth_min3(values, gamma))
}

#[inline]
fn smooth_min3(values: &[f64], gamma: f64) -> f64 {
    let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|v| (-(v - m) / gamma).exp()).sum();
    m - gamma * s.ln()
}

/// Soft-DTW forward pass; the returned result also carries `∂loss/∂c`.
pub fn dtw_forward(c: &CostMatrix, gamma: f64) -> Result<AlignmentResult> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let (m, n) = (c.m(), c.n());
    if m == 0 || n == 0 {
        return Err(Error::Degenerate("empty cost matrix".into()));
    }
    let mut r = Tensor2::filled(m + 1, n + 1, UNREACHABLE);
    r[(0, 0)] = 0.0;
    r[(1, 1)] = c.get(0, 0);
    for j in 2..=n {
        r[(1, j)] = c.get(0, j - 1) + r[(1, j - 1)];
    }
    for i in 2..=m {
        r[(i, 1)] = c.get(i - 1, 0) + r[(i - 1, 1)];
        for j in 2..=n {
            let preds = [r[(i - 1, j - 1)], r[(i - 1, j)], r[(i, j - 1)]];
            r[(i, j)] = c.get(i - 1, j - 1) + smooth_min3(&preds, gamma);
        }
    }
    let loss = r[(m, n)];
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("alignment loss is {loss}")));
    }
    let mut res = AlignmentResult {
        r,
        loss,
        grad_c: Tensor2::zeros(m, n),
        gamma,
    };
    res.grad_c = dtw_backward(&res, c)?;
    Ok(res)
}

/// Reverse-mode pass through the soft-DTW recurrence.
///
/// Each interior cell hands its adjoint to its three predecessors in
/// proportion to `softmax(-a/γ)`; boundary cells have one predecessor.
pub fn dtw_backward(res: &AlignmentResult, c: &CostMatrix) -> Result<Tensor2> {
    let (m, n) = (c.m(), c.n());
    if res.r.shape() != (m + 1, n + 1) {
        return Err(Error::dim(format!(
            "table {}x{} does not match cost matrix {m}x{n}",
            res.r.rows(),
            res.r.cols()
        )));
    }
    let gamma = res.gamma;
    let r = &res.r;
    let mut adj = Tensor2::zeros(m + 1, n + 1);
    adj[(m, n)] = 1.0;
    let mut grad = Tensor2::zeros(m, n);
    for i in (1..=m).rev() {
        for j in (1..=n).rev() {
            let e = adj[(i, j)];
            grad[(i - 1, j - 1)] = e;
            if e == 0.0 {
                continue;
            }
            match (i, j) {
                (1, 1) => {}
                (1, _) => adj[(1, j - 1)] += e,
                (_, 1) => adj[(i - 1, 1)] += e,
                _ => {
                    let mut w = [
                        -r[(i - 1, j - 1)] / gamma,
                        -r[(i - 1, j)] / gamma,
                        -r[(i, j - 1)] / gamma,
                    ];
                    softmax_in_place(&mut w);
                    adj[(i - 1, j - 1)] += e * w[0];
                    adj[(i - 1, j)] += e * w[1];
                    adj[(i, j - 1)] += e * w[2];
                }
            }
        }
    }
    Ok(grad)
}

/// Exact minimum-cost monotone alignment path (0-based cells).
///
/// Steps are diagonal, down or right; ties prefer the diagonal, then the
/// vertical predecessor.
pub fn hard_dtw(c: &CostMatrix) -> (f64, Vec<(usize, usize)>) {
    let (m, n) = (c.m(), c.n());
    if m == 0 || n == 0 {
        return (0.0, Vec::new());
    }
    let mut d = Tensor2::filled(m + 1, n + 1, f64::INFINITY);
    d[(0, 0)] = 0.0;
    for i in 1..=m {
        for j in 1..=n {
            let best = d[(i - 1, j - 1)].min(d[(i - 1, j)]).min(d[(i, j - 1)]);
            d[(i, j)] = c.get(i - 1, j - 1) + best;
        }
    }
    let mut path = vec![(m - 1, n - 1)];
    let (mut i, mut j) = (m, n);
    while (i, j) != (1, 1) {
        let diag = d[(i - 1, j - 1)];
        let up = d[(i - 1, j)];
        let left = d[(i, j - 1)];
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i - 1, j - 1));
    }
    path.reverse();
    (d[(m, n)], path)
}

/// Loss and embedding gradients of the soft alignment between `x` and `y`.
#[derive(Debug, Clone)]
pub struct AlignLoss {
    pub loss: f64,
    pub dx: Tensor2,
    pub dy: Tensor2,
}

/// Soft alignment cost of `x` against `y` with gradients for both inputs.
///
/// The cost is asymmetric in its arguments (row-wise softmax).
pub fn align_loss(x: &Tensor2, y: &Tensor2, beta: f64, gamma: f64) -> Result<AlignLoss> {
    let (cost, cache) = cost_matrix_cached(x, y, beta)?;
    let res = dtw_forward(&cost, gamma)?;
    let g = &res.grad_c;

    // c_ij = lse_i - s_ij  ⇒  ∂/∂s_ij = p_ij·Σ_k g_ik - g_ij
    let mut ds = Tensor2::zeros(g.rows(), g.cols());
    for i in 0..g.rows() {
        let row_sum: f64 = g.row(i).iter().sum();
        for ((d, &gv), &pv) in ds.row_mut(i).iter_mut().zip(g.row(i)).zip(cache.prob.row(i)) {
            *d = (pv * row_sum - gv) / beta;
        }
    }
    let dx_hat = ds.matmul(&cache.y_hat)?;
    let dy_hat = ds.t_matmul(&cache.x_hat)?;
    Ok(AlignLoss {
        loss: res.loss,
        dx: normalize_rows_backward(x, &cache.x_hat, &dx_hat),
        dy: normalize_rows_backward(y, &cache.y_hat, &dy_hat),
    })
}

/// Nearest neighbour (cosine) in `y` for every row of `x`; ties go to the
/// lowest index.
pub fn sync_map(x: &Tensor2, y: &Tensor2) -> Result<SyncMap> {
    if x.cols() != y.cols() {
        return Err(Error::dim(format!(
            "embedding widths differ: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    if y.rows() == 0 {
        return Err(Error::Degenerate("empty target sequence".into()));
    }
    let sim = normalize_rows(x)?.matmul_t(&normalize_rows(y)?)?;
    let map = sim.iter_rows().map(argmax_first).collect();
    Ok(SyncMap {
        target_len: y.rows(),
        map,
    })
}

/// Index of the largest value, first occurrence on ties.
pub(crate) fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}
