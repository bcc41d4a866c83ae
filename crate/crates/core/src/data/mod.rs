//! Videos, labels, manifests and the on-disk formats.

mod binio;
pub mod files;
pub mod manifest;
pub mod sampling;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use binio::{read_file, write_file};
pub(crate) use binio::{put_f64, put_u32, put_u64, ByteReader};

use crate::encoder::FrameFeatures;
use crate::error::{Error, Result};

pub use files::{read_embeddings, read_features, write_embeddings, write_features, FeatureDims};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use sampling::{make_pair, subsample_uniform, subsample_weighted, PairSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    Ego,
    Exo,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            View::Ego => "ego",
            View::Exo => "exo",
        })
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ego" => Ok(View::Ego),
            "exo" => Ok(View::Exo),
            _ => Err(Error::Config(format!("unknown view {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// Checks that key events are strictly ascending and inside `[0, len)`.
pub fn validate_key_events(key_events: &[usize], len: usize) -> Result<()> {
    for (i, &e) in key_events.iter().enumerate() {
        if e >= len {
            return Err(Error::Config(format!("key event {e} outside a {len}-frame video")));
        }
        if i > 0 && key_events[i - 1] >= e {
            return Err(Error::Config("key events must be strictly ascending".into()));
        }
    }
    Ok(())
}

/// Phase of `frame`: the number of key events at or before it.
pub fn phase_of(key_events: &[usize], frame: usize) -> usize {
    key_events.partition_point(|&e| e <= frame)
}

/// Per-frame phase labels for a video of `len` frames.
pub fn phase_labels(key_events: &[usize], len: usize) -> Vec<usize> {
    (0..len).map(|t| phase_of(key_events, t)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub view: View,
    pub split: Split,
    pub frames: Vec<FrameFeatures>,
    pub key_events: Option<Vec<usize>>,
}

impl VideoRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of phases, when labelled.
    pub fn phase_count(&self) -> Option<usize> {
        self.key_events.as_ref().map(|k| k.len() + 1)
    }

    pub fn phase_of(&self, frame: usize) -> Option<usize> {
        self.key_events.as_ref().map(|k| phase_of(k, frame))
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.key_events.as_ref().map(|k| phase_labels(k, self.len()))
    }
}

/// A manifest with every feature file loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub videos: Vec<VideoRecord>,
    pub dims: FeatureDims,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self::from_manifest(&manifest, &root)
    }

    pub fn from_manifest(manifest: &DatasetManifest, root: &Path) -> Result<Self> {
        let mut videos = Vec::with_capacity(manifest.entries.len());
        let mut dims: Option<FeatureDims> = None;
        for e in &manifest.entries {
            let path = root.join(&e.feature_file);
            let (frames, d) = read_features(&path)?;
            if frames.len() != e.frame_count {
                return Err(Error::Format {
                    path,
                    offset: 8,
                    msg: format!(
                        "manifest says {} frames for {}, file holds {}",
                        e.frame_count,
                        e.id,
                        frames.len()
                    ),
                });
            }
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Format {
                        path,
                        offset: 12,
                        msg: format!("feature dims {d:?} differ from {prev:?}"),
                    })
                }
                _ => {}
            }
            for f in &frames {
                f.validate(d.max_regions)?;
            }
            videos.push(VideoRecord {
                id: e.id.clone(),
                view: e.view,
                split: e.split,
                frames,
                key_events: e.key_events.clone(),
            });
        }
        let dims = dims.ok_or_else(|| Error::Config("manifest lists no videos".into()))?;
        Ok(Self {
            root: root.to_path_buf(),
            videos,
            dims,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoRecord> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    /// Videos of a split that can be used for training (two or more frames).
    pub fn training_videos(&self, split: Split) -> Result<Vec<&VideoRecord>> {
        let vids: Vec<_> = self.split(split).collect();
        for v in &vids {
            if v.len() < 2 {
                return Err(Error::Degenerate(format!(
                    "video {} has {} frames; training needs at least 2",
                    v.id,
                    v.len()
                )));
            }
        }
        Ok(vids)
    }
}
