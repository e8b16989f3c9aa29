//! Versioned prompt templates and the composer that fills them.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::PromptSegment;

const DEFAULT_TOML: &str = include_str!("../../templates/default.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatTemplates {
    pub cues: String,
    pub decisions: String,
    pub verification: String,
    pub binary: String,
    pub mcq: String,
    pub bbox: String,
    pub triage: String,
    pub triage_entity: String,
    pub decisive: String,
    pub reminder: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Templates {
    pub wearer_extraction: String,
    pub phase_extraction: String,
    pub merge: String,
    pub verification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage2Templates {
    pub ego_call1: String,
    pub ego_call2: String,
    pub entity_call1: String,
    pub entity_call2: String,
    pub behavior_err: String,
    pub behavior_qa: String,
    pub decide_adaptive: String,
    pub decide_entity: String,
    pub decide_text_only: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionTemplates {
    pub per_id: String,
    pub obj_id: String,
    pub obj_det: String,
    pub beh_err: String,
    pub ego_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisTemplates {
    pub person: String,
    pub object: String,
    pub beh_err: String,
    pub beh_qa: String,
    pub ego: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeTemplates {
    pub person: String,
    pub object: String,
    pub behavior: String,
    pub ego: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageTemplates {
    pub person: String,
    pub object: String,
    pub beh_err: String,
    pub beh_qa: String,
    pub ego_one: String,
    pub ego_many: String,
}

/// A complete set of prompts. `id` is recorded in every trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub id: String,
    pub format: FormatTemplates,
    pub stage1: Stage1Templates,
    pub stage2: Stage2Templates,
    pub questions: QuestionTemplates,
    pub visual: AxisTemplates,
    pub describe: DescribeTemplates,
    pub language: LanguageTemplates,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template set: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("template set has an empty id")]
    MissingId,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_TOML).expect("built-in template set parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let set: TemplateSet = toml::from_str(text)?;
        if set.id.trim().is_empty() {
            return Err(TemplateError::MissingId);
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

static PLACEHOLDER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([A-Za-z][A-Za-z ]*)\]").unwrap());

/// Value bound to a placeholder.
#[derive(Debug, Clone)]
pub enum Slot {
    Text(String),
    Segments(Vec<PromptSegment>),
}

impl From<&str> for Slot {
    fn from(s: &str) -> Self {
        Slot::Text(s.to_string())
    }
}

impl From<String> for Slot {
    fn from(s: String) -> Self {
        Slot::Text(s)
    }
}

impl From<Vec<PromptSegment>> for Slot {
    fn from(v: Vec<PromptSegment>) -> Self {
        Slot::Segments(v)
    }
}

/// Accumulates segments, merging adjacent text.
#[derive(Debug, Default, Clone)]
pub struct PromptBuilder {
    segments: Vec<PromptSegment>,
}

impl PromptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        if s.is_empty() {
            return self;
        }
        if let Some(PromptSegment::Text { content }) = self.segments.last_mut() {
            content.push_str(s);
        } else {
            self.segments.push(PromptSegment::text(s));
        }
        self
    }

    /// Appends `s` on its own line.
    pub fn line(&mut self, s: &str) -> &mut Self {
        self.ensure_newline();
        self.text(s);
        self.text("\n")
    }

    fn ensure_newline(&mut self) {
        if let Some(PromptSegment::Text { content }) = self.segments.last() {
            if !content.ends_with('\n') {
                self.text("\n");
            }
        }
    }

    pub fn segments(&mut self, segs: impl IntoIterator<Item = PromptSegment>) -> &mut Self {
        for s in segs {
            match s {
                PromptSegment::Text { content } => {
                    self.text(&content);
                }
                media => self.segments.push(media),
            }
        }
        self
    }

    pub fn compose(&mut self, template: &str, vars: &[(&str, Slot)]) -> &mut Self {
        let mut last = 0;
        for cap in PLACEHOLDER_RE.captures_iter(template) {
            let whole = cap.get(0).unwrap();
            let Some((_, slot)) = vars.iter().find(|(k, _)| *k == &cap[1]) else {
                continue;
            };
            self.text(&template[last..whole.start()]);
            match slot {
                Slot::Text(t) => {
                    self.text(t);
                }
                Slot::Segments(segs) => {
                    self.segments(segs.iter().cloned());
                }
            }
            last = whole.end();
        }
        self.text(&template[last..]);
        self
    }

    pub fn build(&mut self) -> Vec<PromptSegment> {
        std::mem::take(&mut self.segments)
    }
}

/// Text-only substitution.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    PLACEHOLDER_RE
        .replace_all(template, |cap: &regex::Captures<'_>| {
            vars.iter()
                .find(|(k, _)| *k == &cap[1])
                .map_or_else(|| cap[0].to_string(), |(_, v)| v.to_string())
        })
        .into_owned()
}

/// One-shot [`PromptBuilder::compose`].
pub fn compose(template: &str, vars: &[(&str, Slot)]) -> Vec<PromptSegment> {
    PromptBuilder::new().compose(template, vars).build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::text_projection;

    #[test]
    fn builtin_set_loads() {
        let set = TemplateSet::builtin();
        assert_eq!(set.id, "default-v1");
        assert!(set.questions.ego_id.contains("none of those are evidence of identity"));
        assert!(TemplateSet::from_toml("id = \"\"").is_err());
    }

    #[test]
    fn fill_leaves_unknown_and_inserted_brackets_alone() {
        let out = fill("Is [person] in [place]?", &[("person", "[e_001] Alice")]);
        assert_eq!(out, "Is [e_001] Alice in [place]?");
    }

    #[test]
    fn compose_splices_segments() {
        let segs = compose(
            "Memory:\n[bank text]Query:\n[query media]\n[question]",
            &[
                ("bank text", Slot::Segments(vec![PromptSegment::text("A\n"), PromptSegment::media("c", 1)])),
                ("query media", Slot::Segments(vec![PromptSegment::media("q", 0)])),
                ("question", "Is it me?".into()),
            ],
        );
        assert_eq!(segs.len(), 5);
        assert_eq!(segs[0], PromptSegment::text("Memory:\nA\n"));
        assert_eq!(text_projection(&segs), "Memory:\nA\nQuery:\n\nIs it me?");
    }
}
