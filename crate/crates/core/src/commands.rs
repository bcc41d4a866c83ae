//! The command-line workflows as library calls: generate, train, embed,
//! evaluate, align and retrieve.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::alignment::{cost_matrix, dtw_forward, hard_dtw, sync_map, SyncMap};
use crate::checkpoint::Checkpoint;
use crate::config::{read_kv, synth_from_pairs};
use crate::data::{
    read_embeddings, write_embeddings, write_file, Dataset, DatasetManifest, Split,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, reports_to_csv, retrieve, EvalConfig, EvalVideo, MetricsReport, RetrievalScope};
use crate::synth::generate;
use crate::tensor::Tensor2;
use crate::train::{check_dims, load_encoder, train_dataset, TrainConfig, TrainOutput};

/// Seed override from the `AE2_SEED` environment variable.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("AE2_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("AE2_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Summary of a generated dataset.
#[derive(Debug, Clone)]
pub struct GenSummary {
    pub manifest: PathBuf,
    pub videos: usize,
    pub frames: usize,
}

/// Generates a dataset into `out_dir`. `overrides` are applied after the
/// config file.
pub fn cmd_gen(
    config: Option<&Path>,
    overrides: &[(String, String)],
    out_dir: &Path,
    force: bool,
) -> Result<GenSummary> {
    let mut pairs = match config {
        Some(p) => read_kv(p)?,
        None => Vec::new(),
    };
    if let Some(seed) = env_seed()? {
        pairs.push(("seed".into(), seed.to_string()));
    }
    pairs.extend_from_slice(overrides);
    let cfg = synth_from_pairs(&pairs)?;
    let data = generate(&cfg)?;
    let manifest = data.write(out_dir, force)?;
    Ok(GenSummary {
        manifest,
        videos: data.videos.len(),
        frames: data.videos.iter().map(|v| v.len()).sum(),
    })
}

pub fn load_train_config(config: Option<&Path>, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let mut pairs = match config {
        Some(p) => read_kv(p)?,
        None => Vec::new(),
    };
    if let Some(seed) = env_seed()? {
        pairs.push(("seed".into(), seed.to_string()));
    }
    pairs.extend_from_slice(overrides);
    TrainConfig::from_pairs(&pairs)
}

pub fn cmd_train(
    manifest: &Path,
    cfg: TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutput> {
    let data = Dataset::load(manifest)?;
    let ckpt = resume.map(Checkpoint::read).transpose()?;
    let (_, out) = train_dataset(&data, cfg, out_dir, ckpt.as_ref())?;
    Ok(out)
}

fn parse_split(split: &str) -> Result<Option<Split>> {
    if split == "all" {
        Ok(None)
    } else {
        split.parse().map(Some)
    }
}

/// Writes `<id>.ae2e` for every video of `split` (or `"all"`). Returns the
/// written paths.
pub fn cmd_embed(manifest: &Path, checkpoint: &Path, split: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let split = parse_split(split)?;
    let data = Dataset::load(manifest)?;
    let ckpt = Checkpoint::read(checkpoint)?;
    check_dims(&ckpt, data.dims)?;
    let encoder = load_encoder(&ckpt)?;
    let mut written = Vec::new();
    for v in data.videos.iter().filter(|v| split.is_none_or(|s| v.split == s)) {
        let path = out_dir.join(format!("{}.ae2e", v.id));
        write_embeddings(&path, &encoder.encode_video(&v.frames)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Loads the embeddings of every labelled video of `split`.
pub fn load_eval_videos(manifest: &DatasetManifest, emb_dir: &Path, split: Split) -> Result<Vec<EvalVideo>> {
    manifest
        .entries
        .iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let path = emb_dir.join(format!("{}.ae2e", e.id));
            let embeddings = read_embeddings(&path)?;
            if embeddings.rows() != e.frame_count {
                return Err(Error::Format {
                    path,
                    offset: 8,
                    msg: format!(
                        "{} rows, manifest says {} frames",
                        embeddings.rows(),
                        e.frame_count
                    ),
                });
            }
            let key_events = e
                .key_events
                .clone()
                .ok_or_else(|| Error::Eval(format!("{} has no key events", e.id)))?;
            Ok(EvalVideo {
                id: e.id.clone(),
                view: e.view,
                embeddings,
                key_events,
            })
        })
        .collect()
}

/// Evaluates train/test embeddings and writes `metrics.txt` and
/// `metrics.csv` into `out_dir`.
pub fn cmd_eval(
    manifest: &Path,
    emb_dir: &Path,
    out_dir: &Path,
    cfg: &EvalConfig,
) -> Result<(MetricsReport, Vec<String>)> {
    let m = DatasetManifest::read(manifest)?;
    let train = load_eval_videos(&m, emb_dir, Split::Train)?;
    let test = load_eval_videos(&m, emb_dir, Split::Test)?;
    let (report, warnings) = evaluate(&train, &test, cfg)?;
    write_file(&out_dir.join("metrics.txt"), report.to_text().as_bytes())?;
    let csv = reports_to_csv(&[(format!("seed{}", cfg.svm.seed), report.clone())]);
    write_file(&out_dir.join("metrics.csv"), csv.as_bytes())?;
    Ok((report, warnings))
}

/// Alignment of two embedding sequences.
#[derive(Debug, Clone)]
pub struct AlignOutput {
    pub cost: Tensor2,
    pub soft_loss: f64,
    pub hard_cost: f64,
    pub path: Vec<(usize, usize)>,
    pub sync: SyncMap,
}

impl AlignOutput {
    /// `kind,i,j,cost,sync`: one `cost` row per cell (`sync = 1` where `j`
    /// is the nearest neighbour of `i`), then one `path` row per step.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,i,j,cost,sync\n");
        for i in 0..self.cost.rows() {
            for j in 0..self.cost.cols() {
                let sync = u8::from(self.sync.map[i] == j);
                writeln!(s, "cost,{i},{j},{},{sync}", self.cost[(i, j)]).expect("string write");
            }
        }
        for &(i, j) in &self.path {
            writeln!(s, "path,{i},{j},{},", self.cost[(i, j)]).expect("string write");
        }
        s
    }
}

pub fn align_embeddings(a: &Tensor2, b: &Tensor2, beta: f64, gamma: f64) -> Result<AlignOutput> {
    let c = cost_matrix(a, b, beta)?;
    let soft = dtw_forward(&c, gamma)?;
    let (hard_cost, path) = hard_dtw(&c);
    Ok(AlignOutput {
        cost: c.c.clone(),
        soft_loss: soft.loss,
        hard_cost,
        path,
        sync: sync_map(a, b)?,
    })
}

pub fn cmd_align(a: &Path, b: &Path, beta: f64, gamma: f64, csv_out: Option<&Path>) -> Result<AlignOutput> {
    let out = align_embeddings(&read_embeddings(a)?, &read_embeddings(b)?, beta, gamma)?;
    if let Some(p) = csv_out {
        write_file(p, out.to_csv().as_bytes())?;
    }
    Ok(out)
}

/// Tab-separated top-`k` retrieval dump for the test split.
pub fn cmd_retrieve(manifest: &Path, emb_dir: &Path, k: usize, scope: RetrievalScope) -> Result<String> {
    let m = DatasetManifest::read(manifest)?;
    let test = load_eval_videos(&m, emb_dir, Split::Test)?;
    let results = retrieve(&test, k, scope)?;
    let mut s = String::from("query\tframe\tlabel\trank\tmatch\tmatch_frame\tmatch_label\tsimilarity\n");
    for r in &results {
        for (rank, h) in r.hits.iter().enumerate() {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                test[r.video].id,
                r.frame,
                r.label,
                rank + 1,
                test[h.video].id,
                h.frame,
                h.label,
                h.similarity
            )
            .expect("string write");
        }
    }
    Ok(s)
}
