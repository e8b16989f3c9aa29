use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctxbank::gateway::{Backend, RemoteBackend, RemoteConfig, ScriptedBackend, DEFAULT_MEDIA_LIMIT};
use ctxbank::media::MediaStore;
use ctxbank::pipeline::{PipelineConfig, ReviseFallback, TemplateSet};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Scripted,
}

/// Run configuration file. Every field can be overridden by a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: Option<BackendKind>,
    pub transcript: Option<PathBuf>,
    pub model: Option<String>,
    pub templates: Option<PathBuf>,
    pub span_frames: Option<usize>,
    pub context_frames: Option<usize>,
    pub query_frames: Option<usize>,
    pub media_limit: Option<usize>,
    pub revise_fallback: Option<ReviseFallback>,
    pub media_root: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub remote: Option<RemoteConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Run configuration (TOML); flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Transcript replayed by the scripted backend.
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Prompt template set (TOML); the built-in set otherwise.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    /// Frames shown per behavior span (at least 2).
    #[arg(long, global = true)]
    pub span_frames: Option<usize>,
    /// Policy for REVISEs withdrawn at verification: add, confirm or drop.
    #[arg(long, global = true)]
    pub revise_fallback: Option<ReviseFallback>,
    #[arg(long, global = true)]
    pub media_root: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Simultaneous backend calls during evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

/// Configuration after applying flags over the file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub backend: BackendKind,
    pub transcript: Option<PathBuf>,
    pub model: Option<String>,
    pub templates: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub media_limit: usize,
    pub media_root: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    pub remote: RemoteConfig,
}

impl Settings {
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let file = match &o.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let defaults = PipelineConfig::default();
        let s = Settings {
            backend: o.backend.or(file.backend).unwrap_or(BackendKind::Scripted),
            transcript: o.transcript.clone().or(file.transcript),
            model: o.model.clone().or(file.model),
            templates: o.templates.clone().or(file.templates),
            pipeline: PipelineConfig {
                context_frames: file.context_frames.unwrap_or(defaults.context_frames),
                query_frames: file.query_frames.unwrap_or(defaults.query_frames),
                span_frames: o.span_frames.or(file.span_frames).unwrap_or(defaults.span_frames),
                revise_fallback: o.revise_fallback.or(file.revise_fallback).unwrap_or_default(),
            },
            media_limit: file.media_limit.unwrap_or(DEFAULT_MEDIA_LIMIT),
            media_root: o.media_root.clone().or(file.media_root).unwrap_or_else(|| PathBuf::from("media")),
            out: o.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            jobs: o.jobs.or(file.jobs).unwrap_or(1),
            remote: file.remote.unwrap_or_default(),
        };
        if s.pipeline.span_frames < 2 {
            bail!("--span-frames must be at least 2 (got {})", s.pipeline.span_frames);
        }
        if s.pipeline.context_frames == 0 || s.pipeline.query_frames == 0 {
            bail!("context_frames and query_frames must be positive");
        }
        if s.jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        Ok(s)
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match &self.templates {
            Some(p) => TemplateSet::load(p).with_context(|| format!("loading templates {}", p.display())),
            None => Ok(TemplateSet::builtin()),
        }
    }

    pub fn media(&self) -> Result<MediaStore> {
        MediaStore::open(&self.media_root).with_context(|| format!("opening media store {}", self.media_root.display()))
    }

    pub fn backend(&self, media: &MediaStore) -> Result<Box<dyn Backend>> {
        match self.backend {
            BackendKind::Scripted => {
                let Some(path) = &self.transcript else {
                    bail!("the scripted backend needs a transcript: pass --transcript <file> or set `transcript` in the config");
                };
                let model = self.model.clone().unwrap_or_else(|| "scripted".into());
                let b = ScriptedBackend::from_file(model, path)
                    .with_context(|| format!("loading transcript {}", path.display()))?
                    .with_media_limit(self.media_limit);
                Ok(Box::new(b))
            }
            BackendKind::Remote => {
                let mut cfg = self.remote.clone();
                if let Some(m) = &self.model {
                    cfg.model = m.clone();
                }
                if self.media_limit != DEFAULT_MEDIA_LIMIT {
                    cfg.media_limit = self.media_limit;
                }
                Ok(Box::new(RemoteBackend::new(cfg, media.clone())?))
            }
        }
    }
}
