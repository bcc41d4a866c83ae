//! Model checkpoints (`AE2C`).
//!
//! ```text
//! "AE2C" u32 version=1
//! u32 n, n bytes of UTF-8 config echo (training keys plus input dims)
//! u64 P, P × f64 parameters
//! u8 has_state; if 1:
//!     u64 epochs_done, u64 adam_step, P × f64 m, P × f64 v,
//!     u8 has_best; if 1: f64 best_score, u64 best_epoch, P × f64 best_params
//! ```
//!
//! Everything is little-endian. The optional state lets training resume
//! exactly where it stopped.

use std::path::Path;

use crate::config::{parse_kv, parse_value};
use crate::data::{put_f64, put_u32, put_u64, read_file, write_file, ByteReader, FeatureDims};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AE2C";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Best-so-far model under the selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BestModel {
    pub score: f64,
    pub epoch: u64,
    pub params: Vec<f64>,
}

/// Optimizer and schedule state needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epochs_done: u64,
    pub adam_step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub best: Option<BestModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub dims: FeatureDims,
    pub params: Vec<f64>,
    pub state: Option<TrainState>,
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        put_f64(out, x);
    }
}

fn read_vec(r: &mut ByteReader, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| r.f64()).collect()
}

impl Checkpoint {
    fn config_echo(&self) -> String {
        let mut s = self.config.to_text();
        s.push_str(&format!(
            "global_dim={}\nregion_dim={}\nfeature_slots={}\n",
            self.dims.global_dim, self.dims.region_dim, self.dims.max_regions
        ));
        s
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.params.len();
        let mut out = Vec::with_capacity(64 + n * 8 * 5);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        let echo = self.config_echo();
        put_u32(&mut out, echo.len() as u32);
        out.extend_from_slice(echo.as_bytes());
        put_u64(&mut out, n as u64);
        put_vec(&mut out, &self.params);
        match &self.state {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                put_u64(&mut out, s.epochs_done);
                put_u64(&mut out, s.adam_step);
                put_vec(&mut out, &s.m);
                put_vec(&mut out, &s.v);
                match &s.best {
                    None => out.push(0),
                    Some(b) => {
                        out.push(1);
                        put_f64(&mut out, b.score);
                        put_u64(&mut out, b.epoch);
                        put_vec(&mut out, &b.params);
                    }
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, path);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 4,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let echo_len = r.u32()? as usize;
        let echo_off = r.offset();
        let echo = std::str::from_utf8(r.take(echo_len)?).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            offset: echo_off,
            msg: "config echo is not UTF-8".into(),
        })?;
        let bad_echo = |e: Error| Error::Format {
            path: path.to_path_buf(),
            offset: echo_off,
            msg: format!("config echo: {e}"),
        };
        let mut pairs = parse_kv(echo).map_err(bad_echo)?;
        let mut dim = |name: &str| -> Result<usize> {
            let i = pairs
                .iter()
                .position(|(k, _)| k == name)
                .ok_or_else(|| bad_echo(Error::Config(format!("missing {name}"))))?;
            let (k, v) = pairs.remove(i);
            parse_value(&k, &v).map_err(bad_echo)
        };
        let dims = FeatureDims {
            global_dim: dim("global_dim")?,
            region_dim: dim("region_dim")?,
            max_regions: dim("feature_slots")?,
        };
        let config = TrainConfig::from_pairs(&pairs).map_err(bad_echo)?;
        let n = r.u64()? as usize;
        let params = read_vec(&mut r, n)?;
        let state = match r.u8()? {
            0 => None,
            1 => {
                let epochs_done = r.u64()?;
                let adam_step = r.u64()?;
                let m = read_vec(&mut r, n)?;
                let v = read_vec(&mut r, n)?;
                let best = match r.u8()? {
                    0 => None,
                    1 => Some(BestModel {
                        score: r.f64()?,
                        epoch: r.u64()?,
                        params: read_vec(&mut r, n)?,
                    }),
                    other => return Err(r.error(format!("bad best flag {other}"))),
                };
                Some(TrainState {
                    epochs_done,
                    adam_step,
                    m,
                    v,
                    best,
                })
            }
            other => return Err(r.error(format!("bad state flag {other}"))),
        };
        r.finish()?;
        Ok(Self {
            config,
            dims,
            params,
            state,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(state: bool) -> Checkpoint {
        Checkpoint {
            config: TrainConfig::default(),
            dims: FeatureDims {
                global_dim: 3,
                max_regions: 2,
                region_dim: 4,
            },
            params: vec![0.1, -2.5, f64::MIN_POSITIVE],
            state: state.then(|| TrainState {
                epochs_done: 7,
                adam_step: 140,
                m: vec![1.0, 2.0, 3.0],
                v: vec![4.0, 5.0, 6.0],
                best: Some(BestModel {
                    score: 0.25,
                    epoch: 5,
                    params: vec![9.0, 8.0, 7.0],
                }),
            }),
        }
    }

    #[test]
    fn round_trip_bitwise() {
        for state in [false, true] {
            let c = sample(state);
            let bytes = c.encode();
            let back = Checkpoint::decode(&bytes, Path::new("c")).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.encode(), bytes);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = sample(true).encode();
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(
            Checkpoint::decode(&bad, Path::new("c")),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1], Path::new("c")).is_err());
    }
}
