//! Deterministic replay: transcripts of `(canonical prompt hash, response)`
//! pairs, the backend that replays them, and a recorder that produces them.
//!
//! Transcript files hold one record per line, `<hex sha-256> <base64 response>`.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use sha2::{Digest, Sha256};

use super::{validate_prompt, Backend, Decoding, GatewayError, PromptSegment, DEFAULT_MEDIA_LIMIT};

/// Hex SHA-256 over the segment kinds, raw text bytes and media
/// `(clip_id, frame_index)` tuples, in order. Captions do not participate.
pub fn canonical_hash(segments: &[PromptSegment]) -> String {
    let mut hasher = Sha256::new();
    for seg in segments {
        match seg {
            PromptSegment::Text { content } => {
                hasher.update(b"T");
                hasher.update((content.len() as u64).to_le_bytes());
                hasher.update(content.as_bytes());
            }
            PromptSegment::Media {
                clip_id, frame_index, ..
            } => {
                hasher.update(b"M");
                hasher.update((clip_id.len() as u64).to_le_bytes());
                hasher.update(clip_id.as_bytes());
                hasher.update(u64::from(*frame_index).to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

fn preview(segments: &[PromptSegment]) -> String {
    let text = super::text_projection(segments);
    let mut p: String = text.chars().take(120).collect();
    if text.chars().count() > 120 {
        p.push('…');
    }
    p
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: BTreeMap<String, String>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.records.get(key).map(String::as_str)
    }

    /// Adds a record. Re-recording the same key with a different response is
    /// an error since replay must stay a pure function of the prompt.
    pub fn insert(&mut self, key: String, response: String) -> Result<(), GatewayError> {
        if let Some(existing) = self.records.get(&key) {
            if *existing != response {
                return Err(GatewayError::Transcript {
                    path: "<memory>".into(),
                    reason: format!("conflicting responses recorded for {key}"),
                });
            }
            return Ok(());
        }
        self.records.insert(key, response);
        Ok(())
    }

    pub fn record(&mut self, segments: &[PromptSegment], response: impl Into<String>) -> Result<(), GatewayError> {
        self.insert(canonical_hash(segments), response.into())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut t = Transcript::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, payload) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| format!("line {}: expected `<hash> <base64>`", lineno + 1))?;
            if key.len() != 64 || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(format!("line {}: malformed hash `{key}`", lineno + 1));
            }
            let bytes = BASE64
                .decode(payload.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let response = String::from_utf8(bytes).map_err(|e| format!("line {}: {e}", lineno + 1))?;
            t.insert(key.to_ascii_lowercase(), response)
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let err = |reason: String| GatewayError::Transcript {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Transcript::parse(&text).map_err(err)
    }

    /// Records sorted by key, so equal transcripts serialize identically.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.records {
            out.push_str(k);
            out.push(' ');
            out.push_str(&BASE64.encode(v.as_bytes()));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| GatewayError::Transcript {
                path: parent.display().to_string(),
                reason: e.to_string(),
            })?;
        }
        fs::write(path, self.to_text()).map_err(|e| GatewayError::Transcript {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Replays a transcript. A pure function of the canonical prompt.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    model: String,
    media_limit: usize,
    transcript: Transcript,
}

impl ScriptedBackend {
    pub fn new(model: impl Into<String>, transcript: Transcript) -> Self {
        Self {
            model: model.into(),
            media_limit: DEFAULT_MEDIA_LIMIT,
            transcript,
        }
    }

    pub fn from_file(model: impl Into<String>, path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(model, Transcript::load(path)?))
    }

    pub fn with_media_limit(mut self, limit: usize) -> Self {
        self.media_limit = limit;
        self
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

impl Backend for ScriptedBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn media_limit(&self) -> usize {
        self.media_limit
    }

    fn complete(&self, segments: &[PromptSegment], _decoding: Decoding) -> Result<String, GatewayError> {
        validate_prompt(segments, self.media_limit)?;
        let key = canonical_hash(segments);
        self.transcript
            .get(&key)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::NoScriptEntry {
                key,
                preview: preview(segments),
            })
    }
}

type Responder = dyn Fn(&[PromptSegment]) -> Result<String, GatewayError> + Send + Sync;

/// Backend driven by a closure.
pub struct FnBackend {
    model: String,
    media_limit: usize,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        model: impl Into<String>,
        respond: impl Fn(&[PromptSegment]) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model: model.into(),
            media_limit: DEFAULT_MEDIA_LIMIT,
            respond: Box::new(respond),
        }
    }

    pub fn with_media_limit(mut self, limit: usize) -> Self {
        self.media_limit = limit;
        self
    }
}

impl Backend for FnBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn media_limit(&self) -> usize {
        self.media_limit
    }

    fn complete(&self, segments: &[PromptSegment], _decoding: Decoding) -> Result<String, GatewayError> {
        validate_prompt(segments, self.media_limit)?;
        (self.respond)(segments)
    }
}

/// Wraps a backend and records every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    transcript: Mutex<Transcript>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            transcript: Mutex::new(Transcript::new()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().unwrap().clone()
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript.into_inner().unwrap()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn media_limit(&self) -> usize {
        self.inner.media_limit()
    }

    fn complete(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<String, GatewayError> {
        let response = self.inner.complete(segments, decoding)?;
        self.transcript
            .lock()
            .unwrap()
            .record(segments, response.clone())?;
        Ok(response)
    }
}
