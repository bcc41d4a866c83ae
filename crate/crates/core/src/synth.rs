//! Synthetic unpaired ego/exo datasets with known key events.
//!
//! Every video follows a latent progress curve `p(t)`, a random monotone
//! warp of `[0, 1]`. The action signal `s(p)` interpolates `P + 1` anchor
//! vectors shared by all videos. The global token mixes `(1 - ρ)·s(p)` with
//! a large per-frame nuisance; informative region tokens carry `ρ·s(p)`; a
//! low-confidence distractor region carries nuisance only. The views differ
//! in `ρ` and in their random mixing maps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::files::quantize;
use crate::data::{
    validate_key_events, write_features, DatasetManifest, FeatureDims, ManifestEntry, Split,
    VideoRecord, View,
};
use crate::encoder::{FrameFeatures, Identity, RegionToken};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Videos per view for train, val and test.
    pub videos_per_split: [usize; 3],
    pub t_min: usize,
    pub t_max: usize,
    pub phases: usize,
    pub signal_dim: usize,
    pub global_dim: usize,
    pub region_dim: usize,
    pub max_regions: usize,
    pub noise: f64,
    pub rho_ego: f64,
    pub rho_exo: f64,
    pub repetition_prob: f64,
    /// Dimension and scale of the nuisance mixed into the global token and
    /// carried by distractor regions.
    pub nuisance_dim: usize,
    pub nuisance_scale: f64,
    /// Probability that each informative region is detected in a frame.
    pub detect_prob: f64,
    /// Random monotone warp of progress (off: `p(t) = t / (T - 1)`).
    pub time_warp: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            videos_per_split: [40, 8, 12],
            t_min: 24,
            t_max: 48,
            phases: 3,
            signal_dim: 4,
            global_dim: 16,
            region_dim: 8,
            max_regions: 4,
            noise: 0.1,
            rho_ego: 0.5,
            rho_exo: 0.9,
            repetition_prob: 0.25,
            nuisance_dim: 16,
            nuisance_scale: 2.0,
            detect_prob: 0.9,
            time_warp: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.phases == 0 {
            return bad("phase count must be positive".into());
        }
        if self.t_min < self.phases + 1 {
            return bad(format!(
                "t_min {} must be at least phases + 1 = {}",
                self.t_min,
                self.phases + 1
            ));
        }
        if self.t_max < self.t_min {
            return bad(format!("t_max {} is below t_min {}", self.t_max, self.t_min));
        }
        for (name, v) in [
            ("signal_dim", self.signal_dim),
            ("global_dim", self.global_dim),
            ("region_dim", self.region_dim),
            ("max_regions", self.max_regions),
            ("nuisance_dim", self.nuisance_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("rho_ego", self.rho_ego),
            ("rho_exo", self.rho_exo),
            ("repetition_prob", self.repetition_prob),
            ("detect_prob", self.detect_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        for (name, v) in [("noise", self.noise), ("nuisance_scale", self.nuisance_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            global_dim: self.global_dim,
            max_regions: self.max_regions,
            region_dim: self.region_dim,
        }
    }

    fn rho(&self, view: View) -> f64 {
        match view {
            View::Ego => self.rho_ego,
            View::Exo => self.rho_exo,
        }
    }
}

/// Ground truth kept alongside each generated video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTruth {
    pub progress: Vec<f64>,
    /// `(start, len)` of the inserted repeat, if any.
    pub repeat: Option<(usize, usize)>,
}

impl VideoTruth {
    /// True when no segment was repeated, i.e. progress never goes back.
    pub fn is_monotone(&self) -> bool {
        self.repeat.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub videos: Vec<VideoRecord>,
    pub truth: Vec<VideoTruth>,
}

/// Key event `j` (for `j = 1..P`) is the first frame with `p >= j / P`.
pub fn key_events_from_progress(progress: &[f64], phases: usize) -> Vec<usize> {
    (1..phases)
        .filter_map(|j| {
            let thr = j as f64 / phases as f64;
            progress.iter().position(|&p| p >= thr)
        })
        .collect()
}

/// Piecewise-linear interpolation between `anchors` rows at `p ∈ [0, 1]`.
pub fn interpolate(anchors: &Tensor2, p: f64) -> Vec<f64> {
    let segs = anchors.rows() - 1;
    let x = p.clamp(0.0, 1.0) * segs as f64;
    let i = (x.floor() as usize).min(segs.saturating_sub(1));
    let w = x - i as f64;
    let a = anchors.row(i);
    let b = anchors.row((i + 1).min(segs));
    a.iter().zip(b).map(|(a, b)| (1.0 - w) * a + w * b).collect()
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor2::from_vec(rows, cols, data).expect("shape")
}

fn normal_vec(n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `m · x` for a row-major `m`.
fn apply(m: &Tensor2, x: &[f64]) -> Vec<f64> {
    m.iter_rows()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Fixed random maps of one view.
struct ViewMaps {
    global: Tensor2,
    regions: Vec<Tensor2>,
    distractor: Tensor2,
}

impl ViewMaps {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let gin = cfg.signal_dim + cfg.nuisance_dim;
        Self {
            global: gaussian(cfg.global_dim, gin, 1.0 / (gin as f64).sqrt(), rng),
            regions: (0..3)
                .map(|_| {
                    gaussian(cfg.region_dim, cfg.signal_dim, 1.0 / (cfg.signal_dim as f64).sqrt(), rng)
                })
                .collect(),
            distractor: gaussian(
                cfg.region_dim,
                cfg.nuisance_dim,
                1.0 / (cfg.nuisance_dim as f64).sqrt(),
                rng,
            ),
        }
    }
}

fn warp(len: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let linear = || -> Vec<f64> {
        if len == 1 {
            return vec![0.0];
        }
        (0..len).map(|t| t as f64 / (len - 1) as f64).collect()
    };
    if !cfg.time_warp || len < 3 {
        return linear();
    }
    for _ in 0..100 {
        let mut p: Vec<f64> = (0..len - 2).map(|_| rng.random::<f64>()).collect();
        p.sort_by(f64::total_cmp);
        p.insert(0, 0.0);
        p.push(1.0);
        let ev = key_events_from_progress(&p, cfg.phases);
        if ev.len() == cfg.phases - 1 && validate_key_events(&ev, len).is_ok() {
            return p;
        }
    }
    linear()
}

/// Picks a segment inside one phase of `base` and repeats it in place.
fn insert_repeat(
    base: &[f64],
    events: &[usize],
    seg: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<f64>, usize)> {
    let mut bounds = vec![0];
    bounds.extend_from_slice(events);
    bounds.push(base.len());
    let fits: Vec<(usize, usize)> = bounds
        .windows(2)
        .filter(|w| w[1] - w[0] >= seg)
        .map(|w| (w[0], w[1]))
        .collect();
    if fits.is_empty() {
        return None;
    }
    let (lo, hi) = fits[rng.random_range(0..fits.len())];
    let start = rng.random_range(lo..=hi - seg);
    let mut out = base[..start + seg].to_vec();
    out.extend_from_slice(&base[start..]);
    Some((out, start + seg))
}

fn make_box(center: [f64; 2], size: [f64; 2], rng: &mut ChaCha8Rng) -> [f64; 4] {
    let cx = (center[0] + 0.02 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0);
    let cy = (center[1] + 0.02 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0);
    [
        quantize((cx - size[0] / 2.0).clamp(0.0, 1.0)),
        quantize((cy - size[1] / 2.0).clamp(0.0, 1.0)),
        quantize((cx + size[0] / 2.0).clamp(0.0, 1.0)),
        quantize((cy + size[1] / 2.0).clamp(0.0, 1.0)),
    ]
}

const INFORMATIVE: [Identity; 3] = [Identity::LeftHand, Identity::RightHand, Identity::Object];

fn generate_video(
    cfg: &SynthConfig,
    view: View,
    anchors: &Tensor2,
    maps: &ViewMaps,
    rng: &mut ChaCha8Rng,
) -> (Vec<FrameFeatures>, Vec<usize>, VideoTruth) {
    let len = rng.random_range(cfg.t_min..=cfg.t_max);
    let seg = (len / 6).max(2);
    let want_repeat = rng.random_bool(cfg.repetition_prob) && len >= cfg.t_min.max(seg + 4 * cfg.phases);
    let (progress, events, repeat) = if want_repeat {
        let base = warp(len - seg, cfg, rng);
        let base_events = key_events_from_progress(&base, cfg.phases);
        match insert_repeat(&base, &base_events, seg, rng) {
            Some((p, end)) => {
                let events = base_events
                    .iter()
                    .map(|&e| if e >= end { e + seg } else { e })
                    .collect();
                (p, events, Some((end, seg)))
            }
            None => {
                let p = warp(len, cfg, rng);
                let e = key_events_from_progress(&p, cfg.phases);
                (p, e, None)
            }
        }
    } else {
        let p = warp(len, cfg, rng);
        let e = key_events_from_progress(&p, cfg.phases);
        (p, e, None)
    };

    let rho = cfg.rho(view);
    let box_scale = match view {
        View::Ego => [0.15, 0.35],
        View::Exo => [0.04, 0.12],
    };
    let offset = normal_vec(cfg.nuisance_dim, 1.0, rng);
    let n_slots = cfg.max_regions;
    let layout: Vec<([f64; 2], [f64; 2])> = (0..n_slots)
        .map(|_| {
            let c = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            let s = [
                rng.random_range(box_scale[0]..box_scale[1]),
                rng.random_range(box_scale[0]..box_scale[1]),
            ];
            (c, s)
        })
        .collect();

    let frames = progress
        .iter()
        .map(|&p| {
            let s = interpolate(anchors, p);
            let jitter = normal_vec(cfg.nuisance_dim, 1.0, rng);
            let nuisance: Vec<f64> = offset
                .iter()
                .zip(&jitter)
                .map(|(o, j)| cfg.nuisance_scale * (o + j))
                .collect();
            let mut gin: Vec<f64> = s.iter().map(|v| (1.0 - rho) * v).collect();
            gin.extend_from_slice(&nuisance);
            let global = apply(&maps.global, &gin)
                .into_iter()
                .map(|v| quantize(v + cfg.noise * rng.sample::<f64, _>(StandardNormal)))
                .collect();

            let sig: Vec<f64> = s.iter().map(|v| rho * v).collect();
            let mut regions = Vec::new();
            for (slot, &(c, size)) in layout.iter().enumerate() {
                let informative = slot < INFORMATIVE.len();
                let present = if informative {
                    rng.random_bool(cfg.detect_prob)
                } else {
                    rng.random_bool(0.5)
                };
                if !present {
                    continue;
                }
                let (feature, confidence, identity) = if informative {
                    (
                        apply(&maps.regions[slot], &sig),
                        rng.random_range(0.7..1.0),
                        INFORMATIVE[slot],
                    )
                } else {
                    let u = normal_vec(cfg.nuisance_dim, cfg.nuisance_scale, rng);
                    (apply(&maps.distractor, &u), rng.random_range(0.0..0.3), Identity::Object)
                };
                regions.push(RegionToken {
                    bbox: make_box(c, size, rng),
                    confidence: quantize(confidence),
                    feature: feature
                        .into_iter()
                        .map(|v| quantize(v + cfg.noise * rng.sample::<f64, _>(StandardNormal)))
                        .collect(),
                    identity,
                });
            }
            FrameFeatures { global, regions }
        })
        .collect();
    (frames, events, VideoTruth { progress, repeat })
}

/// Generates a dataset in memory. Identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let anchors = gaussian(cfg.phases + 1, cfg.signal_dim, 1.0, &mut rng);
    let maps = [ViewMaps::new(cfg, &mut rng), ViewMaps::new(cfg, &mut rng)];
    let mut videos = Vec::new();
    let mut truth = Vec::new();
    for (si, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
        for (vi, view) in [View::Ego, View::Exo].into_iter().enumerate() {
            for i in 0..cfg.videos_per_split[si] {
                let (frames, events, t) = generate_video(cfg, view, &anchors, &maps[vi], &mut rng);
                videos.push(VideoRecord {
                    id: format!("{view}_{split}_{i:03}"),
                    view,
                    split,
                    frames,
                    key_events: Some(events),
                });
                truth.push(t);
            }
        }
    }
    Ok(SynthDataset {
        config: cfg.clone(),
        videos,
        truth,
    })
}

impl SynthDataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .videos
                .iter()
                .map(|v| ManifestEntry {
                    id: v.id.clone(),
                    view: v.view,
                    split: v.split,
                    frame_count: v.len(),
                    feature_file: PathBuf::from("features").join(format!("{}.ae2f", v.id)),
                    key_events: v.key_events.clone(),
                })
                .collect(),
        }
    }

    /// Generation report: one `key=value` per line.
    pub fn report(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        kv("seed", c.seed.to_string());
        kv("videos", self.videos.len().to_string());
        for split in [Split::Train, Split::Val, Split::Test] {
            for view in [View::Ego, View::Exo] {
                let n = self
                    .videos
                    .iter()
                    .filter(|v| v.split == split && v.view == view)
                    .count();
                kv(&format!("videos.{split}.{view}"), n.to_string());
            }
        }
        kv(
            "frames",
            self.videos.iter().map(VideoRecord::len).sum::<usize>().to_string(),
        );
        kv(
            "repeated_videos",
            self.truth.iter().filter(|t| !t.is_monotone()).count().to_string(),
        );
        kv("phases", c.phases.to_string());
        kv("frame_range", format!("{}..{}", c.t_min, c.t_max));
        kv("rho_ego", c.rho_ego.to_string());
        kv("rho_exo", c.rho_exo.to_string());
        kv("noise", c.noise.to_string());
        kv("nuisance_scale", c.nuisance_scale.to_string());
        kv("repetition_prob", c.repetition_prob.to_string());
        s
    }

    /// Writes `manifest.txt`, `report.txt` and `features/*.ae2f` under `dir`.
    /// Returns the manifest path. An existing manifest is only replaced when
    /// `force` is set.
    pub fn write(&self, dir: &Path, force: bool) -> Result<PathBuf> {
        let manifest_path = dir.join("manifest.txt");
        if manifest_path.exists() && !force {
            return Err(Error::Config(format!(
                "{} already exists (use --force to overwrite)",
                manifest_path.display()
            )));
        }
        let manifest = self.manifest();
        let dims = self.config.dims();
        for (v, e) in self.videos.iter().zip(&manifest.entries) {
            write_features(&dir.join(&e.feature_file), &v.frames, dims)?;
        }
        manifest.write(&manifest_path)?;
        crate::data::write_file(&dir.join("report.txt"), self.report().as_bytes())?;
        Ok(manifest_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn small() -> SynthConfig {
        SynthConfig {
            videos_per_split: [3, 1, 2],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn linear_threshold() {
        let p: Vec<f64> = (0..10).map(|t| t as f64 / 9.0).collect();
        assert_eq!(key_events_from_progress(&p, 2), vec![5]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = small();
        c.t_min = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small();
        c.rho_exo = 1.5;
        assert!(c.validate().is_err());
        let mut c = small();
        c.t_max = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.videos, b.videos);
        assert_eq!(a.truth, b.truth);
        let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.videos, c.videos);
    }

    #[test]
    fn counts_and_labels() {
        let cfg = SynthConfig {
            repetition_prob: 0.5,
            videos_per_split: [10, 2, 4],
            ..SynthConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.videos.len(), 32);
        for (v, t) in d.videos.iter().zip(&d.truth) {
            assert!((cfg.t_min..=cfg.t_max).contains(&v.len()));
            assert_eq!(t.progress.len(), v.len());
            let ev = v.key_events.as_ref().unwrap();
            assert_eq!(ev.len(), cfg.phases - 1);
            validate_key_events(ev, v.len()).unwrap();
            let labels = v.labels().unwrap();
            for p in 0..cfg.phases {
                assert!(labels.contains(&p), "{} misses phase {p}", v.id);
            }
            // labels agree with the latent progress
            for (l, p) in labels.iter().zip(&t.progress) {
                assert_eq!(*l, ((p * cfg.phases as f64).floor() as usize).min(cfg.phases - 1));
            }
            assert!(v.frames.iter().all(|f| f.regions.len() <= cfg.max_regions));
        }
        assert!(d.truth.iter().any(|t| !t.is_monotone()));
        assert!(d.truth.iter().any(|t| t.is_monotone()));
    }

    #[test]
    fn repeat_duplicates_progress() {
        let cfg = SynthConfig {
            repetition_prob: 1.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        for t in &d.truth {
            if let Some((end, len)) = t.repeat {
                assert_eq!(t.progress[end - len..end], t.progress[end..end + len]);
            }
        }
    }

    #[test]
    fn noiseless_regions_depend_only_on_progress() {
        let cfg = SynthConfig {
            noise: 0.0,
            rho_ego: 1.0,
            rho_exo: 1.0,
            detect_prob: 1.0,
            repetition_prob: 1.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        let mut checked = 0;
        for (v, t) in d.videos.iter().zip(&d.truth) {
            if let Some((end, len)) = t.repeat {
                for i in end - len..end {
                    let a = &v.frames[i].regions;
                    let b = &v.frames[i + len].regions;
                    for (ra, rb) in a.iter().zip(b).take(INFORMATIVE.len()) {
                        assert_eq!(ra.identity, rb.identity);
                        assert_eq!(ra.feature, rb.feature);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn confidences_separate_informative_from_distractors() {
        let d = generate(&small()).unwrap();
        for f in d.videos.iter().flat_map(|v| &v.frames) {
            for r in &f.regions {
                let c = r.confidence;
                assert!((0.7..1.0).contains(&c) || (0.0..0.3).contains(&c));
                assert!(r.bbox[0] <= r.bbox[2] && r.bbox[1] <= r.bbox[3]);
            }
        }
    }

    #[test]
    fn write_round_trips_and_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate(&small()).unwrap();
        let m = d.write(dir.path(), false).unwrap();
        let loaded = Dataset::load(&m).unwrap();
        assert_eq!(loaded.videos, d.videos);
        assert!(matches!(d.write(dir.path(), false), Err(Error::Config(_))));
        d.write(dir.path(), true).unwrap();
    }
}
