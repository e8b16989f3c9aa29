//! Frame sampling, clip registry and on-disk layout.
//!
//! ```text
//! <root>/index.json                  clip_id -> frame count
//! <root>/clips/<clip_id>/frame_00000.jpg
//! <root>/banks/<owner_id>.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::{Bank, Evidence};

pub const BANK_SCHEMA_VERSION: u32 = 1;
const INDEX_FILE: &str = "index.json";
const FRAME_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("unknown clip `{0}`")]
    UnknownClip(String),
    #[error("frame {frame} out of range for clip `{clip_id}` ({frame_count} frames)")]
    FrameOutOfRange {
        clip_id: String,
        frame: u32,
        frame_count: u32,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: schema version {found}, expected {expected}")]
    SchemaVersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `min(n, total)` distinct, increasing indices spread uniformly over
/// `0..total`, both endpoints included once two or more frames are kept.
///
/// Index `i` of `k` is `round_half_up(i * (total - 1) / (k - 1))`, computed in
/// integers.
pub fn sample_frames(total: usize, n: usize) -> Vec<u32> {
    assert!(total >= 1 && n >= 1, "sample_frames needs total >= 1 and n >= 1");
    let k = n.min(total);
    if k == 1 {
        return vec![0];
    }
    let (num, den) = ((total - 1) as u64, (k - 1) as u64);
    let mut out: Vec<u32> = Vec::with_capacity(k);
    for i in 0..k as u64 {
        // floor(i*num/den + 1/2)
        let idx = ((2 * i * num + den) / (2 * den)) as u32;
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRef {
    pub clip_id: String,
    pub path: PathBuf,
    pub frame_count: u32,
    #[serde(default = "default_ext")]
    pub ext: String,
}

fn default_ext() -> String {
    "jpg".to_string()
}

impl ClipRef {
    pub fn frame_path(&self, frame_index: u32) -> PathBuf {
        self.path.join(format!("frame_{frame_index:05}.{}", self.ext))
    }
}

/// A single resolvable frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaRef {
    pub clip_id: String,
    pub frame_index: u32,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexFile {
    clips: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    frame_count: u32,
    #[serde(default = "default_ext")]
    ext: String,
}

#[derive(Debug, Clone)]
pub struct MediaStore {
    root: PathBuf,
    clips: BTreeMap<String, ClipRef>,
}

impl MediaStore {
    /// Opens the store at `root`, reading its clip index if one exists.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, MediaError> {
        let root = root.into();
        let index_path = root.join(INDEX_FILE);
        let mut store = Self {
            root,
            clips: BTreeMap::new(),
        };
        if index_path.exists() {
            let raw = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
            let index: IndexFile = serde_json::from_str(&raw).map_err(|source| MediaError::Json {
                path: index_path.clone(),
                source,
            })?;
            for (clip_id, entry) in index.clips {
                store.insert(clip_id, entry.frame_count, entry.ext);
            }
        }
        Ok(store)
    }

    /// An empty store that exists only in memory.
    pub fn in_memory(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            clips: BTreeMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn insert(&mut self, clip_id: String, frame_count: u32, ext: String) {
        let path = self.root.join("clips").join(&clip_id);
        self.clips.insert(
            clip_id.clone(),
            ClipRef {
                clip_id,
                path,
                frame_count,
                ext,
            },
        );
    }

    /// Registers a clip without touching disk.
    pub fn register(&mut self, clip_id: impl Into<String>, frame_count: u32) {
        assert!(frame_count >= 1, "clips have at least one frame");
        self.insert(clip_id.into(), frame_count, default_ext());
    }

    pub fn clip(&self, clip_id: &str) -> Result<&ClipRef, MediaError> {
        self.clips
            .get(clip_id)
            .ok_or_else(|| MediaError::UnknownClip(clip_id.to_string()))
    }

    pub fn clips(&self) -> impl Iterator<Item = &ClipRef> {
        self.clips.values()
    }

    fn check_frame(&self, clip_id: &str, frame: u32) -> Result<&ClipRef, MediaError> {
        let clip = self.clip(clip_id)?;
        if frame >= clip.frame_count {
            return Err(MediaError::FrameOutOfRange {
                clip_id: clip_id.to_string(),
                frame,
                frame_count: clip.frame_count,
            });
        }
        Ok(clip)
    }

    /// Every frame an evidence item points at: one for a frame, the whole
    /// inclusive range for a span.
    pub fn resolve(&self, evidence: &Evidence) -> Result<Vec<MediaRef>, MediaError> {
        let (clip_id, start, end) = match evidence {
            Evidence::Frame { clip_id, frame_index } => (clip_id, *frame_index, *frame_index),
            Evidence::Span {
                clip_id,
                start_frame,
                end_frame,
            } => (clip_id, *start_frame, *end_frame),
        };
        self.check_frame(clip_id, start)?;
        let clip = self.check_frame(clip_id, end)?;
        Ok((start..=end)
            .map(|f| MediaRef {
                clip_id: clip_id.clone(),
                frame_index: f,
                path: clip.frame_path(f),
            })
            .collect())
    }

    pub fn frame_path(&self, clip_id: &str, frame_index: u32) -> Result<PathBuf, MediaError> {
        Ok(self.check_frame(clip_id, frame_index)?.frame_path(frame_index))
    }

    /// Uniformly sampled frames of a registered clip.
    pub fn sample(&self, clip_id: &str, n: usize) -> Result<Vec<u32>, MediaError> {
        let clip = self.clip(clip_id)?;
        Ok(sample_frames(clip.frame_count as usize, n))
    }

    /// Copies a directory of pre-extracted frames (sorted by file name) into
    /// the store as `clips/<clip_id>/frame_%05d.<ext>` and records it in the
    /// index. Re-ingesting a clip replaces it.
    pub fn ingest_frames(&mut self, clip_id: &str, frames_dir: &Path) -> Result<&ClipRef, MediaError> {
        let mut frames: Vec<PathBuf> = fs::read_dir(frames_dir)
            .map_err(io_err(frames_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && frame_ext(p).is_some())
            .collect();
        frames.sort();
        if frames.is_empty() {
            return Err(MediaError::Invalid {
                path: frames_dir.to_path_buf(),
                reason: "no frame images (jpg/png) found".into(),
            });
        }
        let ext = frame_ext(&frames[0]).unwrap();
        if let Some(odd) = frames.iter().find(|p| frame_ext(p).as_deref() != Some(ext.as_str())) {
            return Err(MediaError::Invalid {
                path: odd.clone(),
                reason: format!("mixed frame formats in clip (expected .{ext})"),
            });
        }
        let dest = self.root.join("clips").join(clip_id);
        if dest.exists() {
            fs::remove_dir_all(&dest).map_err(io_err(&dest))?;
        }
        fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        for (i, src) in frames.iter().enumerate() {
            let target = dest.join(format!("frame_{i:05}.{ext}"));
            fs::copy(src, &target).map_err(io_err(&target))?;
        }
        self.insert(clip_id.to_string(), frames.len() as u32, ext);
        self.write_index()?;
        Ok(&self.clips[clip_id])
    }

    /// Ingests every subdirectory of `clips_dir` as a clip named after it.
    pub fn ingest_dir(&mut self, clips_dir: &Path) -> Result<Vec<ClipRef>, MediaError> {
        let mut dirs: Vec<PathBuf> = fs::read_dir(clips_dir)
            .map_err(io_err(clips_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        let mut out = Vec::new();
        for dir in dirs {
            let clip_id = dir.file_name().unwrap().to_string_lossy().into_owned();
            out.push(self.ingest_frames(&clip_id, &dir)?.clone());
        }
        Ok(out)
    }

    pub fn write_index(&self) -> Result<(), MediaError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let index = IndexFile {
            clips: self
                .clips
                .iter()
                .map(|(k, c)| {
                    (
                        k.clone(),
                        IndexEntry {
                            frame_count: c.frame_count,
                            ext: c.ext.clone(),
                        },
                    )
                })
                .collect(),
        };
        let path = self.root.join(INDEX_FILE);
        let mut text = serde_json::to_string_pretty(&index).expect("index serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn bank_path(&self, owner_id: &str) -> PathBuf {
        self.root.join("banks").join(format!("{owner_id}.json"))
    }
}

fn frame_ext(path: &Path) -> Option<String> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    FRAME_EXTENSIONS.contains(&ext.as_str()).then_some(ext)
}

#[derive(Serialize)]
struct BankFileOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    bank: &'a Bank,
}

#[derive(Deserialize)]
struct BankFileIn {
    schema_version: u32,
    #[serde(flatten)]
    bank: Bank,
}

/// Canonical JSON for a bank: fixed key order, two-space indent, trailing newline.
pub fn bank_to_json(bank: &Bank) -> String {
    let mut text = serde_json::to_string_pretty(&BankFileOut {
        schema_version: BANK_SCHEMA_VERSION,
        bank,
    })
    .expect("bank serializes");
    text.push('\n');
    text
}

pub fn save_bank(bank: &Bank, path: &Path) -> Result<(), MediaError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bank_to_json(bank)).map_err(io_err(path))
}

pub fn load_bank(path: &Path) -> Result<Bank, MediaError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let json_err = |source| MediaError::Json {
        path: path.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(json_err)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != BANK_SCHEMA_VERSION {
        return Err(MediaError::SchemaVersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: BANK_SCHEMA_VERSION,
        });
    }
    let file: BankFileIn = serde_json::from_value(value).map_err(json_err)?;
    debug_assert_eq!(file.schema_version, BANK_SCHEMA_VERSION);
    file.bank.check_invariants().map_err(|e| MediaError::Invalid {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(file.bank)
}
