//! Shared helpers and brute-force reference implementations for the
//! integration tests. None of these reuse library internals.

#![allow(dead_code)]

use ae2::data::View;
use ae2::encoder::{EncoderConfig, FrameFeatures, Identity, RegionToken};
use ae2::eval::EvalVideo;
use ae2::tensor::Tensor2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

pub fn tiny_encoder_config() -> EncoderConfig {
    EncoderConfig {
        global_dim: 5,
        region_dim: 3,
        hidden_dim: 8,
        layers: 1,
        heads: 2,
        max_regions: 3,
        embed_dim: 6,
        global_only: false,
    }
}

pub fn random_frames(n: usize, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Vec<FrameFeatures> {
    let ids = [Identity::LeftHand, Identity::RightHand, Identity::Object];
    (0..n)
        .map(|_| {
            let regions = rng.random_range(0..=cfg.max_regions);
            FrameFeatures {
                global: (0..cfg.global_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                regions: (0..regions)
                    .map(|k| {
                        let x: f64 = rng.random_range(0.0..0.6);
                        let y: f64 = rng.random_range(0.0..0.6);
                        RegionToken {
                            bbox: [x, y, x + 0.3, y + 0.25],
                            confidence: rng.random_range(0.0..1.0),
                            feature: (0..cfg.region_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                            identity: ids[k % 3],
                        }
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Every monotone path from `(0,0)` to `(m-1,n-1)` with unit steps; returns
/// the minimum path cost, each cost accumulated from the start cell.
pub fn brute_force_dtw(c: &Tensor2) -> f64 {
    fn walk(c: &Tensor2, i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + c[(i, j)];
        let (m, n) = c.shape();
        if i == m - 1 && j == n - 1 {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < m && j + 1 < n {
            walk(c, i + 1, j + 1, acc, best);
        }
        if i + 1 < m {
            walk(c, i + 1, j, acc, best);
        }
        if j + 1 < n {
            walk(c, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(c, 0, 0, 0.0, &mut best);
    best
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn labels_of(v: &EvalVideo) -> Vec<usize> {
    (0..v.embeddings.rows())
        .map(|t| v.key_events.iter().filter(|&&e| e <= t).count())
        .collect()
}

/// mAP@k by rank counting: a gallery frame is in the top k when fewer than
/// k frames beat it (higher similarity, or equal similarity and earlier).
pub fn brute_force_map(videos: &[EvalVideo], k: usize, cross: Option<View>) -> f64 {
    let mut total = 0.0;
    let mut queries = 0usize;
    for (qi, q) in videos.iter().enumerate() {
        if let Some(view) = cross {
            if q.view != view {
                continue;
            }
        }
        let ql = labels_of(q);
        let gallery: Vec<(Vec<f64>, usize)> = videos
            .iter()
            .enumerate()
            .filter(|(ci, c)| match cross {
                None => *ci != qi,
                Some(_) => c.view != q.view,
            })
            .flat_map(|(_, c)| {
                let l = labels_of(c);
                (0..c.embeddings.rows())
                    .map(move |f| (c.embeddings.row(f).to_vec(), l[f]))
                    .collect::<Vec<_>>()
            })
            .collect();
        for f in 0..q.embeddings.rows() {
            let sims: Vec<f64> = gallery.iter().map(|(g, _)| cos(q.embeddings.row(f), g)).collect();
            let mut hits = 0usize;
            for (a, (_, label)) in gallery.iter().enumerate() {
                let beaten_by = (0..gallery.len())
                    .filter(|&b| sims[b] > sims[a] || (sims[b] == sims[a] && b < a))
                    .count();
                if beaten_by < k && *label == ql[f] {
                    hits += 1;
                }
            }
            total += hits as f64 / k as f64;
            queries += 1;
        }
    }
    total / queries as f64
}

/// Mean τ over ordered pairs, nearest neighbours by explicit cosine.
pub fn brute_force_tau(videos: &[EvalVideo]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (ui, u) in videos.iter().enumerate() {
        for (vi, v) in videos.iter().enumerate() {
            if ui == vi {
                continue;
            }
            let map: Vec<usize> = (0..u.embeddings.rows())
                .map(|i| {
                    let mut best = 0;
                    let mut best_s = f64::NEG_INFINITY;
                    for j in 0..v.embeddings.rows() {
                        let s = cos(u.embeddings.row(i), v.embeddings.row(j));
                        if s > best_s {
                            best_s = s;
                            best = j;
                        }
                    }
                    best
                })
                .collect();
            let n = map.len();
            let (mut conc, mut disc) = (0i64, 0i64);
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        if map[i] < map[j] {
                            conc += 1;
                        } else if map[i] > map[j] {
                            disc += 1;
                        }
                    }
                }
            }
            total += (conc - disc) as f64 / (n * (n - 1) / 2) as f64;
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Macro-F1 from an explicit confusion matrix over the labels that occur.
pub fn brute_force_f1(truth: &[usize], pred: &[usize]) -> f64 {
    let k = truth.iter().chain(pred).max().map_or(0, |m| m + 1);
    let mut conf = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        conf[t][p] += 1;
    }
    let mut sum = 0.0;
    let mut labels = 0;
    for c in 0..k {
        let row: usize = conf[c].iter().sum();
        let col: usize = (0..k).map(|r| conf[r][c]).sum();
        if row + col == 0 {
            continue;
        }
        let tp = conf[c][c] as f64;
        let precision = if col == 0 { 0.0 } else { tp / col as f64 };
        let recall = if row == 0 { 0.0 } else { tp / row as f64 };
        sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        labels += 1;
    }
    sum / labels as f64
}

pub fn eval_video(id: &str, view: View, emb: Tensor2, key_events: Vec<usize>) -> EvalVideo {
    EvalVideo {
        id: id.into(),
        view,
        embeddings: emb,
        key_events,
    }
}
