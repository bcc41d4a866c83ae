//! Line-oriented dataset manifest.
//!
//! One video per line, tab-separated `key:value` fields (tabs shown as
//! spaces):
//!
//! ```text
//! id:ego_train_000  view:ego  split:train  frame_count:31  feature_file:features/ego_train_000.ae2f  key_events:7,15
//! ```
//!
//! `key_events` is optional. Blank lines and lines starting with `#` are
//! ignored. Feature paths are relative to the manifest's directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_file, validate_key_events, write_file, Split, View};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub view: View,
    pub split: Split,
    pub frame_count: usize,
    pub feature_file: PathBuf,
    pub key_events: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let line_start = offset;
            offset += line.len() as u64;
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() || body.trim_start().starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Format {
                path: path.to_path_buf(),
                offset: line_start,
                msg,
            };
            let mut id = None;
            let mut view = None;
            let mut split = None;
            let mut frame_count = None;
            let mut feature_file = None;
            let mut key_events = None;
            for field in body.split('\t').filter(|f| !f.is_empty()) {
                let (k, v) = field
                    .split_once(':')
                    .ok_or_else(|| err(format!("field {field:?} is not key:value")))?;
                match k {
                    "id" => id = Some(v.to_string()),
                    "view" => view = Some(v.parse::<View>().map_err(|e| err(e.to_string()))?),
                    "split" => split = Some(v.parse::<Split>().map_err(|e| err(e.to_string()))?),
                    "frame_count" => {
                        frame_count = Some(
                            v.parse::<usize>()
                                .map_err(|_| err(format!("bad frame_count {v:?}")))?,
                        )
                    }
                    "feature_file" => feature_file = Some(PathBuf::from(v)),
                    "key_events" => {
                        let ev = if v.is_empty() {
                            Vec::new()
                        } else {
                            v.split(',')
                                .map(|s| s.trim().parse::<usize>())
                                .collect::<std::result::Result<Vec<_>, _>>()
                                .map_err(|_| err(format!("bad key_events {v:?}")))?
                        };
                        key_events = Some(ev);
                    }
                    other => return Err(err(format!("unknown field {other:?}"))),
                }
            }
            let missing = |name: &str| err(format!("missing field {name}"));
            let entry = ManifestEntry {
                id: id.ok_or_else(|| missing("id"))?,
                view: view.ok_or_else(|| missing("view"))?,
                split: split.ok_or_else(|| missing("split"))?,
                frame_count: frame_count.ok_or_else(|| missing("frame_count"))?,
                feature_file: feature_file.ok_or_else(|| missing("feature_file"))?,
                key_events,
            };
            if let Some(k) = &entry.key_events {
                validate_key_events(k, entry.frame_count).map_err(|e| err(e.to_string()))?;
            }
            if !seen.insert(entry.id.clone()) {
                return Err(err(format!("duplicate id {}", entry.id)));
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            write!(
                s,
                "id:{}\tview:{}\tsplit:{}\tframe_count:{}\tfeature_file:{}",
                e.id,
                e.view,
                e.split,
                e.frame_count,
                e.feature_file.display()
            )
            .expect("string write");
            if let Some(k) = &e.key_events {
                let list: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                write!(s, "\tkey_events:{}", list.join(",")).expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: e.utf8_error().valid_up_to() as u64,
            msg: "manifest is not UTF-8".into(),
        })?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text().as_bytes())
    }
}
