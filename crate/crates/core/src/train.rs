//! Self-supervised training over unpaired video pairs.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamState;
use crate::alignment::align_loss;
use crate::checkpoint::{BestModel, Checkpoint, TrainState};
use crate::data::sampling::{distinct_pair, subsample_weighted};
use crate::data::{write_file, Dataset, FeatureDims, Split, VideoRecord};
use crate::encoder::{Encoder, EncoderConfig, FrameFeatures};
use crate::error::{Error, Result};
use crate::eval::{phase_classification, EvalVideo, SvmConfig};
use crate::objective::{reg_loss, total_loss, LossBreakdown, NegativeMode, ObjectiveConfig};
use crate::tensor::Tensor2;

/// Rule for picking the saved "best" checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckpointSelection {
    /// Lowest validation total loss.
    #[default]
    Loss,
    /// Highest validation phase-classification F1 (needs labels).
    ValF1,
}

impl fmt::Display for CheckpointSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::Loss => "loss",
            Self::ValF1 => "val_f1",
        })
    }
}

impl FromStr for CheckpointSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(Self::Loss),
            "val_f1" => Ok(Self::ValF1),
            _ => Err(Error::Config(format!("unknown checkpoint selection {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_pairs: usize,
    pub frames_per_seq: usize,
    /// Frames per sequence for the regularizer's positive pair. Equal to
    /// `frames_per_seq` means the alignment pair is reused.
    pub pos_frames: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_regions: usize,
    pub embed_dim: usize,
    pub negative_mode: NegativeMode,
    pub seed: u64,
    pub checkpoint_selection: CheckpointSelection,
    pub global_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            gamma: 0.1,
            lambda: 1.0,
            lr: 3e-3,
            weight_decay: 1e-5,
            epochs: 300,
            batch_pairs: 4,
            frames_per_seq: 32,
            pos_frames: 32,
            hidden_dim: 32,
            layers: 1,
            heads: 2,
            max_regions: 4,
            embed_dim: 128,
            negative_mode: NegativeMode::FullReverse,
            seed: 0,
            checkpoint_selection: CheckpointSelection::Loss,
            global_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("lr", self.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("wd", self.weight_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be non-negative")));
            }
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_pairs", self.batch_pairs),
            ("frames_per_seq", self.frames_per_seq),
            ("pos_frames", self.pos_frames),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.frames_per_seq < 2 || self.pos_frames < 2 {
            return Err(Error::Config("sequences need at least 2 frames".into()));
        }
        self.encoder_config(FeatureDims {
            global_dim: 1,
            max_regions: self.max_regions,
            region_dim: 1,
        })
        .validate()
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
            negative_mode: self.negative_mode,
        }
    }

    pub fn encoder_config(&self, dims: FeatureDims) -> EncoderConfig {
        EncoderConfig {
            global_dim: dims.global_dim,
            region_dim: dims.region_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            heads: self.heads,
            max_regions: self.max_regions,
            embed_dim: self.embed_dim,
            global_only: self.global_only,
        }
    }
}

/// Per-epoch means of the training loss terms plus validation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub align: f64,
    pub reg: f64,
    pub total: f64,
    pub val_total: Option<f64>,
    pub val_f1: Option<f64>,
    /// This epoch became the best checkpoint.
    pub best: bool,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("epoch,align,reg,total,val_total,val_f1,best\n");
    for e in log {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            e.epoch,
            e.align,
            e.reg,
            e.total,
            opt(e.val_total),
            opt(e.val_f1),
            u8::from(e.best)
        )
        .expect("string write");
    }
    s
}

fn select(frames: &[FrameFeatures], idx: &[usize]) -> Vec<FrameFeatures> {
    idx.iter().map(|&i| frames[i].clone()).collect()
}

/// Fixed validation pairs drawn once per run.
#[derive(Debug, Clone)]
struct ValPair {
    a: Vec<FrameFeatures>,
    b: Vec<FrameFeatures>,
}

pub struct Trainer {
    cfg: TrainConfig,
    dims: FeatureDims,
    encoder: Encoder,
    adam: AdamState,
    epochs_done: usize,
    best: Option<BestModel>,
    log: Vec<EpochLog>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, dims: FeatureDims) -> Result<Self> {
        cfg.validate()?;
        let encoder = Encoder::new(cfg.encoder_config(dims), cfg.seed)?;
        let adam = AdamState::new(&encoder.params, cfg.lr, cfg.weight_decay);
        Ok(Self {
            cfg,
            dims,
            encoder,
            adam,
            epochs_done: 0,
            best: None,
            log: Vec::new(),
        })
    }

    /// Resumes from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(ckpt.config.clone(), ckpt.dims)?;
        t.encoder.params.set_flat_values(&ckpt.params)?;
        if let Some(s) = &ckpt.state {
            t.adam.restore(s.adam_step, &s.m, &s.v)?;
            t.epochs_done = s.epochs_done as usize;
            t.best = s.best.clone();
        }
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// Current weights plus everything needed to resume.
    pub fn checkpoint(&self) -> Checkpoint {
        let (m, v) = self.adam.flat_moments();
        Checkpoint {
            config: self.cfg.clone(),
            dims: self.dims,
            params: self.encoder.params.flat_values(),
            state: Some(TrainState {
                epochs_done: self.epochs_done as u64,
                adam_step: self.adam.step_count(),
                m,
                v,
                best: self.best.clone(),
            }),
        }
    }

    /// The selected model (falls back to the current weights before any
    /// validation score exists).
    pub fn best_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            dims: self.dims,
            params: self
                .best
                .as_ref()
                .map(|b| b.params.clone())
                .unwrap_or_else(|| self.encoder.params.flat_values()),
            state: None,
        }
    }

    pub fn best(&self) -> Option<&BestModel> {
        self.best.as_ref()
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    fn val_pairs(&self, val: &[&VideoRecord]) -> Result<Vec<ValPair>> {
        if val.len() < 2 {
            return Ok(Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(0);
        (0..val.len())
            .map(|_| {
                let (a, b) = distinct_pair(val.len(), &mut rng);
                let ia = subsample_weighted(&val[a].frames, self.cfg.frames_per_seq, &mut rng)?;
                let ib = subsample_weighted(&val[b].frames, self.cfg.frames_per_seq, &mut rng)?;
                Ok(ValPair {
                    a: select(&val[a].frames, &ia),
                    b: select(&val[b].frames, &ib),
                })
            })
            .collect()
    }

    fn val_loss(&self, pairs: &[ValPair]) -> Result<f64> {
        let obj = self.cfg.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(u64::MAX);
        let mut total = 0.0;
        for p in pairs {
            let x = self.encoder.encode_video(&p.a)?;
            let y = self.encoder.encode_video(&p.b)?;
            total += total_loss(&x, &y, &obj, &mut rng)?.breakdown.total;
        }
        Ok(total / pairs.len() as f64)
    }

    fn val_f1(&self, train: &[&VideoRecord], val: &[&VideoRecord]) -> Result<Option<f64>> {
        let labelled = |vs: &[&VideoRecord]| -> Result<Option<Vec<EvalVideo>>> {
            vs.iter()
                .map(|v| {
                    Ok(v.key_events.clone().map(|k| -> Result<EvalVideo> {
                        Ok(EvalVideo {
                            id: v.id.clone(),
                            view: v.view,
                            embeddings: self.encoder.encode_video(&v.frames)?,
                            key_events: k,
                        })
                    }))
                })
                .collect::<Result<Option<Vec<_>>>>()?
                .map(|v| v.into_iter().collect::<Result<Vec<_>>>())
                .transpose()
        };
        let (Some(tr), Some(va)) = (labelled(train)?, labelled(val)?) else {
            return Ok(None);
        };
        if va.is_empty() {
            return Ok(None);
        }
        let svm = SvmConfig {
            epochs: 50,
            seed: self.cfg.seed,
            ..SvmConfig::default()
        };
        phase_classification(&tr, &va, &svm).map(Some)
    }

    /// Loss and parameter gradient for one pair; gradients are scaled by `w`.
    fn pair_step(
        &mut self,
        a: &[FrameFeatures],
        b: &[FrameFeatures],
        pos: Option<(&[FrameFeatures], &[FrameFeatures])>,
        w: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossBreakdown> {
        let obj = self.cfg.objective();
        let (x, cx) = self.encoder.forward(a)?;
        let (y, cy) = self.encoder.forward(b)?;
        let Some((pa, pb)) = pos else {
            let t = total_loss(&x, &y, &obj, rng)?;
            if t.breakdown.total.is_finite() {
                self.encoder.backward_cached(&cx, &t.dx.scale(w))?;
                self.encoder.backward_cached(&cy, &t.dy.scale(w))?;
            }
            return Ok(t.breakdown);
        };
        let al = align_loss(&x, &y, obj.beta, obj.gamma)?;
        let mut reg = 0.0;
        if al.loss.is_finite() {
            self.encoder.backward_cached(&cx, &al.dx.scale(w))?;
            self.encoder.backward_cached(&cy, &al.dy.scale(w))?;
        }
        if obj.lambda != 0.0 {
            let (px, cpx) = self.encoder.forward(pa)?;
            let (py, cpy) = self.encoder.forward(pb)?;
            let r = reg_loss(&px, &py, obj.beta, obj.gamma, obj.negative_mode, rng)?;
            reg = r.value;
            if r.active && r.value.is_finite() {
                self.encoder.backward_cached(&cpx, &r.dx.scale(w * obj.lambda))?;
                self.encoder.backward_cached(&cpy, &r.dy.scale(w * obj.lambda))?;
            }
        }
        Ok(LossBreakdown {
            align: al.loss,
            reg,
            total: al.loss + obj.lambda * reg,
            lambda: obj.lambda,
        })
    }

    /// One pass of `#train videos` pair draws in batches of `batch_pairs`.
    pub fn run_epoch(&mut self, train: &[&VideoRecord], val: &[&VideoRecord]) -> Result<EpochLog> {
        if train.len() < 2 {
            return Err(Error::Config(format!(
                "training needs at least 2 videos, got {}",
                train.len()
            )));
        }
        let epoch = self.epochs_done;
        let mut rng = self.epoch_rng(epoch);
        let n_pairs = train.len();
        let separate_pos = self.cfg.pos_frames != self.cfg.frames_per_seq;
        let (mut sa, mut sr, mut st) = (0.0, 0.0, 0.0);
        let mut done = 0;
        while done < n_pairs {
            let batch = self.cfg.batch_pairs.min(n_pairs - done);
            let w = 1.0 / batch as f64;
            for _ in 0..batch {
                let (ia, ib) = distinct_pair(train.len(), &mut rng);
                let (va, vb) = (train[ia], train[ib]);
                let a = select(&va.frames, &subsample_weighted(&va.frames, self.cfg.frames_per_seq, &mut rng)?);
                let b = select(&vb.frames, &subsample_weighted(&vb.frames, self.cfg.frames_per_seq, &mut rng)?);
                let pos = if separate_pos {
                    Some((
                        select(&va.frames, &subsample_weighted(&va.frames, self.cfg.pos_frames, &mut rng)?),
                        select(&vb.frames, &subsample_weighted(&vb.frames, self.cfg.pos_frames, &mut rng)?),
                    ))
                } else {
                    None
                };
                let l = self.pair_step(
                    &a,
                    &b,
                    pos.as_ref().map(|(p, q)| (p.as_slice(), q.as_slice())),
                    w,
                    &mut rng,
                )?;
                if !l.total.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, step {}, pair ({}, {}): align={} reg={}",
                        self.adam.step_count(),
                        va.id,
                        vb.id,
                        l.align,
                        l.reg
                    )));
                }
                sa += l.align;
                sr += l.reg;
                st += l.total;
            }
            self.adam.step(&mut self.encoder.params)?;
            done += batch;
        }
        self.epochs_done += 1;

        let pairs = self.val_pairs(val)?;
        let val_total = if pairs.is_empty() {
            None
        } else {
            Some(self.val_loss(&pairs)?)
        };
        let val_f1 = match self.cfg.checkpoint_selection {
            CheckpointSelection::ValF1 => self.val_f1(train, val)?,
            CheckpointSelection::Loss => None,
        };
        // higher score is better
        let score = match self.cfg.checkpoint_selection {
            CheckpointSelection::Loss => val_total.map(|v| -v),
            CheckpointSelection::ValF1 => val_f1,
        }
        .unwrap_or(-(st / n_pairs as f64));
        let improved = self.best.as_ref().is_none_or(|b| score > b.score);
        if improved {
            self.best = Some(BestModel {
                score,
                epoch: epoch as u64,
                params: self.encoder.params.flat_values(),
            });
        }
        let entry = EpochLog {
            epoch,
            align: sa / n_pairs as f64,
            reg: sr / n_pairs as f64,
            total: st / n_pairs as f64,
            val_total,
            val_f1,
            best: improved,
        };
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Runs epochs until `cfg.epochs` have completed in total.
    pub fn fit(&mut self, train: &[&VideoRecord], val: &[&VideoRecord]) -> Result<()> {
        while self.epochs_done < self.cfg.epochs {
            self.run_epoch(train, val)?;
        }
        Ok(())
    }
}

/// Files written by [`train_dataset`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub best: PathBuf,
    pub last: PathBuf,
    pub log: PathBuf,
}

/// Trains on the dataset's train split (validation on val) and writes
/// `best.ckpt`, `last.ckpt` and `train_log.csv` into `out_dir`. With
/// `resume`, training continues from that checkpoint.
pub fn train_dataset(
    data: &Dataset,
    cfg: TrainConfig,
    out_dir: &Path,
    resume: Option<&Checkpoint>,
) -> Result<(Trainer, TrainOutput)> {
    let train = data.training_videos(Split::Train)?;
    let val: Vec<&VideoRecord> = data.split(Split::Val).filter(|v| v.len() >= 2).collect();
    let mut trainer = match resume {
        Some(c) => {
            check_dims(c, data.dims)?;
            let mut c = c.clone();
            c.config.epochs = cfg.epochs;
            Trainer::resume(&c)?
        }
        None => Trainer::new(cfg, data.dims)?,
    };
    trainer.fit(&train, &val)?;
    let out = TrainOutput {
        best: out_dir.join("best.ckpt"),
        last: out_dir.join("last.ckpt"),
        log: out_dir.join("train_log.csv"),
    };
    trainer.best_checkpoint().write(&out.best)?;
    trainer.checkpoint().write(&out.last)?;
    write_file(&out.log, log_to_csv(trainer.log()).as_bytes())?;
    Ok((trainer, out))
}

/// Fails when a checkpoint was trained on different input dimensions.
pub fn check_dims(ckpt: &Checkpoint, dims: FeatureDims) -> Result<()> {
    if ckpt.dims.global_dim != dims.global_dim || ckpt.dims.region_dim != dims.region_dim {
        return Err(Error::Config(format!(
            "checkpoint expects global/region dims {}/{}, data has {}/{}",
            ckpt.dims.global_dim, ckpt.dims.region_dim, dims.global_dim, dims.region_dim
        )));
    }
    if dims.max_regions > ckpt.config.max_regions && !ckpt.config.global_only {
        return Err(Error::Config(format!(
            "data has {} region slots, checkpoint encoder accepts {}",
            dims.max_regions, ckpt.config.max_regions
        )));
    }
    Ok(())
}

/// Rebuilds the encoder stored in a checkpoint.
pub fn load_encoder(ckpt: &Checkpoint) -> Result<Encoder> {
    let mut enc = Encoder::new(ckpt.config.encoder_config(ckpt.dims), ckpt.config.seed)?;
    enc.params.set_flat_values(&ckpt.params)?;
    Ok(enc)
}

/// Embeds every video with `encoder`, keeping labels.
pub fn embed_videos(encoder: &Encoder, videos: &[&VideoRecord]) -> Result<Vec<(String, Tensor2)>> {
    videos
        .iter()
        .map(|v| Ok((v.id.clone(), encoder.encode_video(&v.frames)?)))
        .collect()
}
