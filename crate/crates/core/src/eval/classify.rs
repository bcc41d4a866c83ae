//! One-vs-rest linear SVM and macro-F1.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor2};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    /// L2 strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step; epoch `e` uses `lr / (1 + e / 10)`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 200,
            lr: 0.1,
            seed: 0,
        }
    }
}

/// One-vs-rest hinge-loss classifier trained by per-sample subgradient steps.
///
/// Inputs are centred on the training mean and divided by the mean training
/// row norm, which keeps the model equivariant to rotations of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `d × P`.
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub lambda: f64,
    center: Vec<f64>,
    scale: f64,
}

impl LinearClassifier {
    /// Trains on rows of `x` with labels in `0..classes`. Every class must
    /// appear at least once.
    pub fn train(x: &Tensor2, labels: &[usize], classes: usize, cfg: &SvmConfig) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::dim(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let mut seen = vec![false; classes];
        for &l in labels {
            if l >= classes {
                return Err(Error::Eval(format!("label {l} outside 0..{classes}")));
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Eval(format!(
                "class {c} has no training example"
            )));
        }
        let d = x.cols();
        let center = x.mean_rows().into_vec();
        let mut scale = x
            .iter_rows()
            .map(|r| r.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / x.rows() as f64;
        if !(scale > 0.0) {
            scale = 1.0;
        }
        let xs: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|r| r.iter().zip(&center).map(|(a, c)| (a - c) / scale).collect())
            .collect();

        let mut w = vec![vec![0.0; d]; classes];
        let mut b = vec![0.0; classes];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let lr = cfg.lr / (1.0 + epoch as f64 / 10.0);
            let shrink = 1.0 - lr * cfg.lambda;
            for &i in &order {
                let xi = &xs[i];
                for c in 0..classes {
                    let y = if labels[i] == c { 1.0 } else { -1.0 };
                    let margin = y * (dot(&w[c], xi) + b[c]);
                    for v in w[c].iter_mut() {
                        *v *= shrink;
                    }
                    if margin < 1.0 {
                        for (v, xv) in w[c].iter_mut().zip(xi) {
                            *v += lr * y * xv;
                        }
                        b[c] += lr * y;
                    }
                }
            }
        }
        let mut weights = Tensor2::zeros(d, classes);
        for (c, wc) in w.iter().enumerate() {
            for (j, v) in wc.iter().enumerate() {
                weights[(j, c)] = *v;
            }
        }
        Ok(Self {
            weights,
            bias: b,
            lambda: cfg.lambda,
            center,
            scale,
        })
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Per-class scores of one input row.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let xs: Vec<f64> = row
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) / self.scale)
            .collect();
        (0..self.classes())
            .map(|c| {
                let mut s = self.bias[c];
                for (j, v) in xs.iter().enumerate() {
                    s += v * self.weights[(j, c)];
                }
                s
            })
            .collect()
    }

    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>> {
        if x.cols() != self.weights.rows() {
            return Err(Error::dim(format!(
                "classifier expects width {}, got {}",
                self.weights.rows(),
                x.cols()
            )));
        }
        Ok(x
            .iter_rows()
            .map(|r| crate::alignment::argmax_first(&self.scores(r)))
            .collect())
    }
}

/// Macro-averaged F1 over every label present in `truth` or `pred`.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::dim(format!(
            "{} labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Eval("F1 of an empty test set".into()));
    }
    let labels: BTreeSet<usize> = truth.iter().chain(pred).copied().collect();
    let total: f64 = labels
        .iter()
        .map(|&l| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&t, &p) in truth.iter().zip(pred) {
                match (t == l, p == l) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Trains on `(train_x, train_y)` and returns macro-F1 on the test rows.
pub fn classification_f1(
    train_x: &Tensor2,
    train_y: &[usize],
    test_x: &Tensor2,
    test_y: &[usize],
    classes: usize,
    cfg: &SvmConfig,
) -> Result<f64> {
    let clf = LinearClassifier::train(train_x, train_y, classes, cfg)?;
    macro_f1(test_y, &clf.predict(test_x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn f1_hand_computed() {
        // class 0: tp 1, fp 1, fn 1 -> 0.5
        // class 1: tp 2, fp 0, fn 1 -> 0.8
        // class 2: tp 1, fp 1, fn 0 -> 2/3
        let truth = [0, 0, 1, 1, 1, 2];
        let pred = [0, 2, 1, 1, 0, 2];
        let f = macro_f1(&truth, &pred).unwrap();
        assert!((f - (0.5 + 0.8 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert_eq!(macro_f1(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn f1_counts_predicted_only_labels() {
        // label 2 never true: contributes F1 0
        let f = macro_f1(&[0, 0, 1], &[0, 2, 1]).unwrap();
        assert!((f - (2.0 / 3.0 + 1.0 + 0.0) / 3.0).abs() < 1e-12);
    }

    fn clusters(n: usize, seed: u64) -> (Tensor2, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            rows.push(centers[c].map(|v| v + rng.random_range(-0.5..0.5)));
            labels.push(c);
        }
        (Tensor2::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_clusters() {
        let (x, y) = clusters(60, 1);
        let (tx, ty) = clusters(30, 2);
        let f = classification_f1(&x, &y, &tx, &ty, 3, &SvmConfig::default()).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn shuffled_labels_are_chance() {
        // balanced predictions scored against randomly permuted truth
        let (x, y) = clusters(60, 3);
        let (tx, mut ty) = clusters(3000, 4);
        ty.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
        let f = classification_f1(&x, &y, &tx, &ty, 3, &SvmConfig::default()).unwrap();
        assert!((f - 1.0 / 3.0).abs() < 0.05, "{f}");
    }

    #[test]
    fn missing_class_is_named() {
        let (x, _) = clusters(6, 4);
        match LinearClassifier::train(&x, &[0, 0, 1, 1, 0, 1], 3, &SvmConfig::default()) {
            Err(Error::Eval(m)) => assert!(m.contains("class 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let (x, y) = clusters(30, 5);
        let a = LinearClassifier::train(&x, &y, 3, &SvmConfig::default()).unwrap();
        let b = LinearClassifier::train(&x, &y, 3, &SvmConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights.shape(), (3, 3));
    }
}
