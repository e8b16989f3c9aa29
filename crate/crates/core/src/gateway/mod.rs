//! Multimodal model backends and the structured-output parsers that read
//! their replies.
//!
//! Every backend implements [`Backend::complete`] over an ordered list of
//! [`PromptSegment`]s. Three implementations ship here: [`RemoteBackend`]
//! (HTTP), [`ScriptedBackend`] (transcript replay keyed by
//! [`canonical_hash`]), and [`FnBackend`] (a closure, for authoring fixtures).

pub mod parse;
mod remote;
mod transcript;

use serde::{Deserialize, Serialize};

pub use parse::{BoundingBox, OptionLetter, ParseError, TriageOutcome, YesNo};
pub use remote::{Provider, RemoteBackend, RemoteConfig};
pub use transcript::{canonical_hash, FnBackend, RecordingBackend, ScriptedBackend, Transcript};

/// Media limit applied when a backend does not configure one.
pub const DEFAULT_MEDIA_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptSegment {
    Text {
        content: String,
    },
    Media {
        clip_id: String,
        frame_index: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        caption: Option<String>,
    },
}

impl PromptSegment {
    pub fn text(content: impl Into<String>) -> Self {
        PromptSegment::Text {
            content: content.into(),
        }
    }

    pub fn media(clip_id: impl Into<String>, frame_index: u32) -> Self {
        PromptSegment::Media {
            clip_id: clip_id.into(),
            frame_index,
            caption: None,
        }
    }

    pub fn media_with_caption(clip_id: impl Into<String>, frame_index: u32, caption: impl Into<String>) -> Self {
        PromptSegment::Media {
            clip_id: clip_id.into(),
            frame_index,
            caption: Some(caption.into()),
        }
    }

    pub fn is_media(&self) -> bool {
        matches!(self, PromptSegment::Media { .. })
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            PromptSegment::Text { content } => Some(content),
            PromptSegment::Media { .. } => None,
        }
    }
}

/// Concatenation of all text segments, in order.
pub fn text_projection(segments: &[PromptSegment]) -> String {
    segments.iter().filter_map(PromptSegment::as_text).collect()
}

pub fn media_count(segments: &[PromptSegment]) -> usize {
    segments.iter().filter(|s| s.is_media()).count()
}

/// Decoding mode requested from a backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    /// Greedy / temperature-zero decoding.
    #[default]
    Deterministic,
    Sampled,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("prompt carries {media} media segments, backend limit is {limit}")]
    BudgetExceeded { media: usize, limit: usize },
    #[error("no scripted response for prompt {key} (starts: {preview:?})")]
    NoScriptEntry { key: String, preview: String },
    #[error("prompt is empty or has an empty text segment")]
    EmptyPrompt,
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("media: {0}")]
    Media(#[from] crate::media::MediaError),
    #[error("transcript {path}: {reason}")]
    Transcript { path: String, reason: String },
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport { retryable: true, .. })
    }
}

/// Checks the preconditions shared by every backend.
pub fn validate_prompt(segments: &[PromptSegment], media_limit: usize) -> Result<(), GatewayError> {
    if segments.is_empty() || segments.iter().any(|s| matches!(s, PromptSegment::Text { content } if content.is_empty())) {
        return Err(GatewayError::EmptyPrompt);
    }
    let media = media_count(segments);
    if media > media_limit {
        return Err(GatewayError::BudgetExceeded {
            media,
            limit: media_limit,
        });
    }
    Ok(())
}

/// A frozen multimodal model.
pub trait Backend: Send + Sync {
    /// Identifier recorded in traces and used as a cache key.
    fn model_name(&self) -> &str;

    fn media_limit(&self) -> usize {
        DEFAULT_MEDIA_LIMIT
    }

    fn complete(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<String, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn media_limit(&self) -> usize {
        (**self).media_limit()
    }
    fn complete(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<String, GatewayError> {
        (**self).complete(segments, decoding)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn media_limit(&self) -> usize {
        (**self).media_limit()
    }
    fn complete(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<String, GatewayError> {
        (**self).complete(segments, decoding)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn media_limit(&self) -> usize {
        (**self).media_limit()
    }
    fn complete(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<String, GatewayError> {
        (**self).complete(segments, decoding)
    }
}
