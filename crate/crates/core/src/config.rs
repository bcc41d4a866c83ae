//! Flat `key=value` configuration files.
//!
//! Blank lines and `#` comments are ignored; a `#` after a value starts a
//! comment too. Every key is optional.

use std::path::Path;
use std::str::FromStr;

use crate::data::read_file;
use crate::error::{Error, Result};
use crate::synth::SynthConfig;
use crate::train::{CheckpointSelection, TrainConfig};

/// `(key, value)` pairs in file order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    parse_kv(&text)
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl TrainConfig {
    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "beta" => self.beta = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "lambda" => self.lambda = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "wd" | "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_pairs" => self.batch_pairs = parse_value(key, v)?,
            "frames_per_seq" => self.frames_per_seq = parse_value(key, v)?,
            "pos_frames" => self.pos_frames = parse_value(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "layers" => self.layers = parse_value(key, v)?,
            "heads" => self.heads = parse_value(key, v)?,
            "K" | "max_regions" => self.max_regions = parse_value(key, v)?,
            "embed_dim" => self.embed_dim = parse_value(key, v)?,
            "negative_mode" => self.negative_mode = v.parse()?,
            "seed" => self.seed = parse_value(key, v)?,
            "checkpoint_selection" => self.checkpoint_selection = v.parse::<CheckpointSelection>()?,
            "global_only" => self.global_only = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_kv(text)?)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("lambda", self.lambda.to_string()),
            ("lr", self.lr.to_string()),
            ("wd", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_pairs", self.batch_pairs.to_string()),
            ("frames_per_seq", self.frames_per_seq.to_string()),
            ("pos_frames", self.pos_frames.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("K", self.max_regions.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("negative_mode", self.negative_mode.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_selection", self.checkpoint_selection.to_string()),
            ("global_only", self.global_only.to_string()),
        ] {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

/// Sets one generator field by name.
pub fn set_synth(cfg: &mut SynthConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "seed" => cfg.seed = parse_value(key, v)?,
        "train_videos" => cfg.videos_per_split[0] = parse_value(key, v)?,
        "val_videos" => cfg.videos_per_split[1] = parse_value(key, v)?,
        "test_videos" => cfg.videos_per_split[2] = parse_value(key, v)?,
        "t_min" => cfg.t_min = parse_value(key, v)?,
        "t_max" => cfg.t_max = parse_value(key, v)?,
        "phases" => cfg.phases = parse_value(key, v)?,
        "signal_dim" => cfg.signal_dim = parse_value(key, v)?,
        "global_dim" => cfg.global_dim = parse_value(key, v)?,
        "region_dim" => cfg.region_dim = parse_value(key, v)?,
        "K" | "max_regions" => cfg.max_regions = parse_value(key, v)?,
        "noise" | "sigma" => cfg.noise = parse_value(key, v)?,
        "rho_ego" => cfg.rho_ego = parse_value(key, v)?,
        "rho_exo" => cfg.rho_exo = parse_value(key, v)?,
        "repetition_prob" => cfg.repetition_prob = parse_value(key, v)?,
        "nuisance_dim" => cfg.nuisance_dim = parse_value(key, v)?,
        "nuisance_scale" => cfg.nuisance_scale = parse_value(key, v)?,
        "detect_prob" => cfg.detect_prob = parse_value(key, v)?,
        "time_warp" => cfg.time_warp = parse_bool(key, v)?,
        _ => return Err(Error::Config(format!("unknown generator key {key:?}"))),
    }
    Ok(())
}

pub fn synth_from_pairs(pairs: &[(String, String)]) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    for (k, v) in pairs {
        set_synth(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_comments_and_errors() {
        let p = parse_kv("# c\n\nlr = 0.01 # inline\nseed=3\n").unwrap();
        assert_eq!(p, vec![("lr".into(), "0.01".into()), ("seed".into(), "3".into())]);
        assert!(matches!(parse_kv("oops\n"), Err(Error::Config(_))));
    }

    #[test]
    fn train_config_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.set("lr", "0.003").unwrap();
        cfg.set("negative_mode", "random_shuffle").unwrap();
        cfg.set("checkpoint_selection", "val_f1").unwrap();
        assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("epochs", "-1").is_err());
        assert!(TrainConfig::from_text("heads=3\nhidden_dim=32\n").is_err());
    }

    #[test]
    fn synth_keys() {
        let pairs = parse_kv("seed=9\ntrain_videos=2\nrho_exo=1.0\n").unwrap();
        let c = synth_from_pairs(&pairs).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.videos_per_split[0], 2);
        assert!(synth_from_pairs(&parse_kv("t_min=2").unwrap()).is_err());
    }
}
