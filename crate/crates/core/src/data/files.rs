//! Binary feature (`AE2F`) and embedding (`AE2E`) files.
//!
//! Feature file, little-endian:
//!
//! ```text
//! "AE2F" u32 version=1 u32 T u32 Dg u32 K u32 Dr
//! per frame:  Dg × f32 global
//!             K slots × { 4 × f32 box, f32 confidence, u8 identity, u8 present, Dr × f32 feature }
//! ```
//!
//! Absent slots have `present = 0` and an all-zero payload. Present regions
//! occupy the leading slots in order.
//!
//! Embedding file: `"AE2E" u32 version=1 u32 T u32 d` then `T × d × f32`.
//!
//! Values are stored as `f32`; anything already representable in `f32`
//! round-trips exactly.

use std::path::Path;

use super::binio::{put_f32, put_u32, read_file, to_u32, write_file, ByteReader};
use crate::encoder::{FrameFeatures, Identity, RegionToken};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const FEATURE_MAGIC: &[u8; 4] = b"AE2F";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"AE2E";
pub const FORMAT_VERSION: u32 = 1;

/// Shape header of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub global_dim: usize,
    pub max_regions: usize,
    pub region_dim: usize,
}

pub fn encode_features(frames: &[FrameFeatures], dims: FeatureDims) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, to_u32(frames.len(), "frame count")?);
    put_u32(&mut out, to_u32(dims.global_dim, "global dim")?);
    put_u32(&mut out, to_u32(dims.max_regions, "region slots")?);
    put_u32(&mut out, to_u32(dims.region_dim, "region dim")?);
    for (t, f) in frames.iter().enumerate() {
        if f.global.len() != dims.global_dim {
            return Err(Error::dim(format!(
                "frame {t}: global has {} values, header says {}",
                f.global.len(),
                dims.global_dim
            )));
        }
        if f.regions.len() > dims.max_regions {
            return Err(Error::dim(format!(
                "frame {t}: {} regions exceed {} slots",
                f.regions.len(),
                dims.max_regions
            )));
        }
        for &v in &f.global {
            put_f32(&mut out, v);
        }
        for slot in 0..dims.max_regions {
            match f.regions.get(slot) {
                Some(r) => {
                    if r.feature.len() != dims.region_dim {
                        return Err(Error::dim(format!(
                            "frame {t} region {slot}: feature has {} values, header says {}",
                            r.feature.len(),
                            dims.region_dim
                        )));
                    }
                    for &v in &r.bbox {
                        put_f32(&mut out, v);
                    }
                    put_f32(&mut out, r.confidence);
                    out.push(r.identity.code());
                    out.push(1);
                    for &v in &r.feature {
                        put_f32(&mut out, v);
                    }
                }
                None => {
                    out.extend(std::iter::repeat_n(0u8, 5 * 4));
                    out.push(0);
                    out.push(0);
                    out.extend(std::iter::repeat_n(0u8, dims.region_dim * 4));
                }
            }
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<(Vec<FrameFeatures>, FeatureDims)> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(FEATURE_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: r.offset() - 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let t = r.u32()? as usize;
    let dims = FeatureDims {
        global_dim: r.u32()? as usize,
        max_regions: r.u32()? as usize,
        region_dim: r.u32()? as usize,
    };
    let mut frames = Vec::with_capacity(t.min(1 << 16));
    for _ in 0..t {
        let global = (0..dims.global_dim)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let mut regions = Vec::new();
        for _ in 0..dims.max_regions {
            let mut bbox = [0.0; 4];
            for b in &mut bbox {
                *b = r.f32()? as f64;
            }
            let confidence = r.f32()? as f64;
            let id_off = r.offset();
            let code = r.u8()?;
            let present = r.u8()?;
            let feature = (0..dims.region_dim)
                .map(|_| r.f32().map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            match present {
                0 => {}
                1 => {
                    let identity = Identity::from_code(code).map_err(|_| Error::Format {
                        path: path.to_path_buf(),
                        offset: id_off,
                        msg: format!("identity code {code} out of range"),
                    })?;
                    regions.push(RegionToken {
                        bbox,
                        confidence,
                        feature,
                        identity,
                    });
                }
                other => {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        offset: id_off + 1,
                        msg: format!("present flag {other} is not 0 or 1"),
                    })
                }
            }
        }
        frames.push(FrameFeatures { global, regions });
    }
    r.finish()?;
    Ok((frames, dims))
}

pub fn write_features(path: &Path, frames: &[FrameFeatures], dims: FeatureDims) -> Result<()> {
    write_file(path, &encode_features(frames, dims)?)
}

pub fn read_features(path: &Path) -> Result<(Vec<FrameFeatures>, FeatureDims)> {
    decode_features(&read_file(path)?, path)
}

pub fn encode_embeddings(x: &Tensor2) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + x.len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, to_u32(x.rows(), "frame count")?);
    put_u32(&mut out, to_u32(x.cols(), "embedding dim")?);
    for &v in x.data() {
        put_f32(&mut out, v);
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<Tensor2> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(EMBEDDING_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: r.offset() - 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let t = r.u32()? as usize;
    let d = r.u32()? as usize;
    let mut data = Vec::with_capacity((t * d).min(1 << 24));
    for _ in 0..t * d {
        data.push(r.f32()? as f64);
    }
    r.finish()?;
    Tensor2::from_vec(t, d, data)
}

pub fn write_embeddings(path: &Path, x: &Tensor2) -> Result<()> {
    write_file(path, &encode_embeddings(x)?)
}

pub fn read_embeddings(path: &Path) -> Result<Tensor2> {
    decode_embeddings(&read_file(path)?, path)
}

/// Rounds through `f32`, the on-disk precision.
pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}
