//! HTTP backend for hosted multimodal models.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{validate_prompt, Backend, Decoding, GatewayError, PromptSegment, DEFAULT_MEDIA_LIMIT};
use crate::media::MediaStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// `POST {endpoint}/chat/completions` with OpenAI-style content parts.
    /// Also what vLLM and most local servers expose.
    #[default]
    OpenAi,
    /// `POST {endpoint}/models/{model}:generateContent`.
    Gemini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub provider: Provider,
    pub media_limit: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Name of the environment variable holding the API key. Keys are never
    /// read from config files.
    pub api_key_env: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: String::new(),
            provider: Provider::OpenAi,
            media_limit: DEFAULT_MEDIA_LIMIT,
            timeout_secs: 120,
            max_retries: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 16_000,
            api_key_env: None,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    media: MediaStore,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<set>"))
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, media: MediaStore) -> Result<Self, GatewayError> {
        if config.model.is_empty() {
            return Err(GatewayError::Config("remote backend needs a model name".into()));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| GatewayError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            media,
            agent,
        })
    }

    fn url(&self) -> String {
        let base = self.config.endpoint.trim_end_matches('/');
        match self.config.provider {
            Provider::OpenAi => format!("{base}/chat/completions"),
            Provider::Gemini => format!("{base}/models/{}:generateContent", self.config.model),
        }
    }

    fn image_b64(&self, clip_id: &str, frame_index: u32) -> Result<(String, &'static str), GatewayError> {
        let path = self.media.frame_path(clip_id, frame_index)?;
        let bytes = std::fs::read(&path).map_err(|source| crate::media::MediaError::Io {
            path: path.clone(),
            source,
        })?;
        Ok((base64::engine::general_purpose::STANDARD.encode(bytes), mime_for(&path)))
    }

    fn body(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<Value, GatewayError> {
        let temperature = match decoding {
            Decoding::Deterministic => 0.0,
            Decoding::Sampled => 1.0,
        };
        let mut parts = Vec::with_capacity(segments.len());
        for seg in segments {
            match seg {
                PromptSegment::Text { content } => parts.push(self.text_part(content)),
                PromptSegment::Media {
                    clip_id,
                    frame_index,
                    caption,
                } => {
                    if let Some(caption) = caption {
                        parts.push(self.text_part(&format!("[{caption}]")));
                    }
                    let (data, mime) = self.image_b64(clip_id, *frame_index)?;
                    parts.push(match self.config.provider {
                        Provider::OpenAi => json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:{mime};base64,{data}")}
                        }),
                        Provider::Gemini => json!({"inline_data": {"mime_type": mime, "data": data}}),
                    });
                }
            }
        }
        Ok(match self.config.provider {
            Provider::OpenAi => json!({
                "model": self.config.model,
                "temperature": temperature,
                "messages": [{"role": "user", "content": parts}],
            }),
            Provider::Gemini => json!({
                "contents": [{"role": "user", "parts": parts}],
                "generationConfig": {"temperature": temperature},
            }),
        })
    }

    fn text_part(&self, text: &str) -> Value {
        match self.config.provider {
            Provider::OpenAi => json!({"type": "text", "text": text}),
            Provider::Gemini => json!({"text": text}),
        }
    }

    fn send_once(&self, body: &Value) -> Result<String, GatewayError> {
        let mut req = self.agent.post(self.url());
        if let Some(key) = &self.api_key {
            req = match self.config.provider {
                Provider::OpenAi => req.header("Authorization", format!("Bearer {key}")),
                Provider::Gemini => req.header("x-goog-api-key", key),
            };
        }
        let mut resp = req.send_json(body).map_err(|e| GatewayError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| GatewayError::Transport {
            message: format!("reading response body: {e}"),
            retryable: true,
        })?;
        if !(200..300).contains(&status) {
            let snippet: String = text.chars().take(200).collect();
            return Err(GatewayError::Transport {
                message: format!("HTTP {status}: {snippet}"),
                retryable: status == 429 || status >= 500,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Transport {
            message: format!("response is not JSON: {e}"),
            retryable: false,
        })?;
        extract_text(self.config.provider, &value).ok_or_else(|| GatewayError::Transport {
            message: "response carries no text content".into(),
            retryable: false,
        })
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        _ => "image/jpeg",
    }
}

fn extract_text(provider: Provider, v: &Value) -> Option<String> {
    match provider {
        Provider::OpenAi => v["choices"][0]["message"]["content"].as_str().map(str::to_string),
        Provider::Gemini => {
            let parts = v["candidates"][0]["content"]["parts"].as_array()?;
            let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            (!text.is_empty()).then_some(text)
        }
    }
}

impl Backend for RemoteBackend {
    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn media_limit(&self) -> usize {
        self.config.media_limit
    }

    fn complete(&self, segments: &[PromptSegment], decoding: Decoding) -> Result<String, GatewayError> {
        validate_prompt(segments, self.config.media_limit)?;
        let body = self.body(segments, decoding)?;
        let mut backoff = self.config.initial_backoff_ms;
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    tracing::warn!(attempt, backoff_ms = backoff, error = %e, "retrying model call");
                    std::thread::sleep(Duration::from_millis(backoff));
                    backoff = (backoff.saturating_mul(2)).min(self.config.max_backoff_ms);
                }
                other => return other,
            }
        }
    }
}
