//! Downstream evaluation of frozen frame embeddings.

pub mod classify;
pub mod progression;
pub mod retrieval;

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{phase_labels, View};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub use classify::{classification_f1, macro_f1, LinearClassifier, SvmConfig};
pub use progression::{phase_progression, progression_targets, LinearRegressor};
pub use retrieval::{ap_at_k, kendall_tau, map_at_k, retrieve, tau_of_map, RetrievalScope};

/// Embeddings of one labelled video.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalVideo {
    pub id: String,
    pub view: View,
    /// `T × d`.
    pub embeddings: Tensor2,
    pub key_events: Vec<usize>,
}

impl EvalVideo {
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<usize> {
        phase_labels(&self.key_events, self.len())
    }
}

/// Stacks embeddings and phase labels of several videos.
pub fn stack(videos: &[&EvalVideo]) -> Result<(Tensor2, Vec<usize>)> {
    let d = videos
        .first()
        .map(|v| v.embeddings.cols())
        .ok_or_else(|| Error::Eval("no videos selected".into()))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for v in videos {
        if v.embeddings.cols() != d {
            return Err(Error::dim(format!(
                "{} has width {}, expected {d}",
                v.id,
                v.embeddings.cols()
            )));
        }
        data.extend_from_slice(v.embeddings.data());
        labels.extend(v.labels());
    }
    Ok((Tensor2::from_vec(labels.len(), d, data)?, labels))
}

fn phase_count(videos: &[EvalVideo]) -> usize {
    videos.iter().map(|v| v.key_events.len() + 1).max().unwrap_or(1)
}

/// Regular phase classification: train on all training videos.
pub fn phase_classification(train: &[EvalVideo], test: &[EvalVideo], cfg: &SvmConfig) -> Result<f64> {
    let classes = phase_count(train).max(phase_count(test));
    let (x, y) = stack(&train.iter().collect::<Vec<_>>())?;
    let (tx, ty) = stack(&test.iter().collect::<Vec<_>>())?;
    classification_f1(&x, &y, &tx, &ty, classes, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossView {
    Ego2Exo,
    Exo2Ego,
}

/// Trains on one view's training videos and tests on the other view.
pub fn cross_view_classification(
    train: &[EvalVideo],
    test: &[EvalVideo],
    direction: CrossView,
    cfg: &SvmConfig,
) -> Result<f64> {
    let (from, to) = match direction {
        CrossView::Ego2Exo => (View::Ego, View::Exo),
        CrossView::Exo2Ego => (View::Exo, View::Ego),
    };
    let tr: Vec<EvalVideo> = train.iter().filter(|v| v.view == from).cloned().collect();
    let te: Vec<EvalVideo> = test.iter().filter(|v| v.view == to).cloned().collect();
    if tr.is_empty() || te.is_empty() {
        return Err(Error::Eval(format!(
            "cross-view {from}->{to} needs videos of both views"
        )));
    }
    phase_classification(&tr, &te, cfg)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Trains on `⌈fraction · #videos⌉` randomly chosen training videos,
/// `repeats` times. Returns mean and standard deviation of F1.
pub fn few_shot(
    train: &[EvalVideo],
    test: &[EvalVideo],
    fraction: f64,
    repeats: usize,
    cfg: &SvmConfig,
) -> Result<(f64, f64)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("few-shot fraction {fraction} is outside (0, 1]")));
    }
    if repeats == 0 {
        return Err(Error::Config("few-shot repeats must be positive".into()));
    }
    let n = ((fraction * train.len() as f64).ceil() as usize).min(train.len());
    if n == 0 {
        return Err(Error::Eval("few-shot selection is empty".into()));
    }
    let classes = phase_count(train).max(phase_count(test));
    let (tx, ty) = stack(&test.iter().collect::<Vec<_>>())?;
    let mut scores = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut idx = sample(&mut rng, train.len(), n).into_vec();
        idx.sort_unstable();
        let chosen: Vec<&EvalVideo> = idx.iter().map(|&i| &train[i]).collect();
        let (x, y) = stack(&chosen)?;
        scores.push(classification_f1(&x, &y, &tx, &ty, classes, cfg)?);
    }
    Ok(mean_std(&scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub svm: SvmConfig,
    pub few_shot_fractions: Vec<f64>,
    pub few_shot_repeats: usize,
    pub map_ks: Vec<usize>,
    pub ridge: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            svm: SvmConfig::default(),
            few_shot_fractions: vec![0.1, 0.5, 1.0],
            few_shot_repeats: 10,
            map_ks: vec![5, 10, 15],
            ridge: 1e-6,
        }
    }
}

/// Every metric for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub f1_regular: f64,
    pub f1_ego2exo: f64,
    pub f1_exo2ego: f64,
    /// `(fraction, mean, std)`.
    pub f1_few_shot: Vec<(f64, f64, f64)>,
    /// `(k, scope, mAP)`.
    pub map: Vec<(usize, RetrievalScope, f64)>,
    pub progression_r2: f64,
    pub progression_modified_r2: f64,
    pub kendall_tau: f64,
}

impl MetricsReport {
    pub fn map_at(&self, k: usize, scope: RetrievalScope) -> Option<f64> {
        self.map
            .iter()
            .find(|(kk, s, _)| *kk == k && *s == scope)
            .map(|m| m.2)
    }

    /// Metric names and values in report order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("f1.regular".to_string(), self.f1_regular),
            ("f1.ego2exo".to_string(), self.f1_ego2exo),
            ("f1.exo2ego".to_string(), self.f1_exo2ego),
        ];
        for (frac, mean, std) in &self.f1_few_shot {
            out.push((format!("f1.few_shot.{frac}"), *mean));
            out.push((format!("f1.few_shot.{frac}.std"), *std));
        }
        for (k, scope, v) in &self.map {
            out.push((format!("map@{k}.{scope}"), *v));
        }
        out.push(("progression.r2".into(), self.progression_r2));
        out.push(("progression_modified.r2".into(), self.progression_modified_r2));
        out.push(("kendall.tau".into(), self.kendall_tau));
        out
    }

    /// One `key=value` line per metric.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k}={v}").expect("string write");
        }
        s
    }
}

/// Runs every evaluation. Classification and progression train on `train`;
/// retrieval and τ use `test` only. Returns the report and any warnings.
pub fn evaluate(train: &[EvalVideo], test: &[EvalVideo], cfg: &EvalConfig) -> Result<(MetricsReport, Vec<String>)> {
    let f1_regular = phase_classification(train, test, &cfg.svm)?;
    let f1_ego2exo = cross_view_classification(train, test, CrossView::Ego2Exo, &cfg.svm)?;
    let f1_exo2ego = cross_view_classification(train, test, CrossView::Exo2Ego, &cfg.svm)?;
    let mut f1_few_shot = Vec::new();
    for &frac in &cfg.few_shot_fractions {
        let (m, s) = if frac == 1.0 {
            (f1_regular, 0.0)
        } else {
            few_shot(train, test, frac, cfg.few_shot_repeats, &cfg.svm)?
        };
        f1_few_shot.push((frac, m, s));
    }
    let mut map = Vec::new();
    for &k in &cfg.map_ks {
        for scope in RetrievalScope::ALL {
            map.push((k, scope, map_at_k(test, k, scope)?));
        }
    }
    let progression_r2 = phase_progression(train, test, false, cfg.ridge)?;
    let progression_modified_r2 = phase_progression(train, test, true, cfg.ridge)?;
    let (kendall_tau, warnings) = kendall_tau(test)?;
    Ok((
        MetricsReport {
            f1_regular,
            f1_ego2exo,
            f1_exo2ego,
            f1_few_shot,
            map,
            progression_r2,
            progression_modified_r2,
            kendall_tau,
        },
        warnings,
    ))
}

/// Per-run rows plus mean and std rows, columns in report order.
pub fn reports_to_csv(runs: &[(String, MetricsReport)]) -> String {
    let mut s = String::new();
    let Some((_, first)) = runs.first() else {
        return s;
    };
    let names: Vec<String> = first.entries().into_iter().map(|e| e.0).collect();
    writeln!(s, "run,{}", names.join(",")).expect("string write");
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (name, r) in runs {
        let vals: Vec<f64> = r.entries().into_iter().map(|e| e.1).collect();
        for (c, v) in columns.iter_mut().zip(&vals) {
            c.push(*v);
        }
        let cells: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{name},{}", cells.join(",")).expect("string write");
    }
    let stats: Vec<(f64, f64)> = columns.iter().map(|c| mean_std(c)).collect();
    let means: Vec<String> = stats.iter().map(|m| m.0.to_string()).collect();
    let stds: Vec<String> = stats.iter().map(|m| m.1.to_string()).collect();
    writeln!(s, "mean,{}", means.join(",")).expect("string write");
    writeln!(s, "std,{}", stds.join(",")).expect("string write");
    s
}
