//! Bank construction, query answering, and the context-regime baselines.

mod construct;
mod query;
mod regime;
pub mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bank::{BankError, EntryId, MemoryType};
use crate::gateway::parse::{BoundingBox, OptionLetter, ParseError, YesNo};
use crate::gateway::{Decoding, GatewayError, PromptSegment};
use crate::media::MediaError;

pub use construct::{build_bank, extract_cues, merge_candidates, ConstructionLog, DecisionRecord, ExtractionPreset, ItemLog};
pub use query::{answer_query, CallRecord, Prediction, QueryOutcome, Trace};
pub use regime::{context_media, BuiltBank, Pipeline, PipelineConfig};
pub use templates::TemplateSet;

/// Where a context item or query gets its pixels from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediaSource {
    Clip { clip_id: String },
    Frame { clip_id: String, frame_index: u32 },
}

impl MediaSource {
    pub fn clip_id(&self) -> &str {
        match self {
            MediaSource::Clip { clip_id } | MediaSource::Frame { clip_id, .. } => clip_id,
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            MediaSource::Clip { .. } => Modality::Video,
            MediaSource::Frame { .. } => Modality::Image,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    Image,
    Video,
}

/// One reference observation with its language declaration.
///
/// `declaration` is the value substituted into the axis templates: a person's
/// name, an object noun, a procedure step, or the wearer's action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub item_id: String,
    pub declaration: String,
    pub media: MediaSource,
}

impl ContextItem {
    pub fn modality(&self) -> Modality {
        self.media.modality()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "PerID")]
    PerId,
    PerRel,
    #[serde(rename = "ObjID")]
    ObjId,
    ObjDet,
    BehErr,
    #[serde(rename = "BehQA")]
    BehQa,
    #[serde(rename = "EgoID")]
    EgoId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Persons,
    Objects,
    Behavior,
    EgoWearer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    Binary,
    Mcq,
    Box,
}

impl Task {
    /// Report column order.
    pub const ALL: [Task; 7] = [
        Task::PerId,
        Task::PerRel,
        Task::ObjId,
        Task::ObjDet,
        Task::BehErr,
        Task::BehQa,
        Task::EgoId,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::PerId => "PerID",
            Task::PerRel => "PerRel",
            Task::ObjId => "ObjID",
            Task::ObjDet => "ObjDet",
            Task::BehErr => "BehErr",
            Task::BehQa => "BehQA",
            Task::EgoId => "EgoID",
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Task::PerId | Task::PerRel => Axis::Persons,
            Task::ObjId | Task::ObjDet => Axis::Objects,
            Task::BehErr | Task::BehQa => Axis::Behavior,
            Task::EgoId => Axis::EgoWearer,
        }
    }

    pub fn answer_kind(self) -> AnswerKind {
        match self {
            Task::PerRel | Task::BehQa => AnswerKind::Mcq,
            Task::ObjDet => AnswerKind::Box,
            _ => AnswerKind::Binary,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    YesNo(YesNo),
    Option(OptionLetter),
    Box(BoundingBox),
}

impl fmt::Display for Gold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gold::YesNo(v) => v.fmt(f),
            Gold::Option(v) => v.fmt(f),
            Gold::Box(b) => b.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetTag {
    General,
    BehaviorCentric,
}

impl SubsetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsetTag::General => "general",
            SubsetTag::BehaviorCentric => "behavior-centric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub instance_id: String,
    pub task: Task,
    /// Bank owner; defaults to `user`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_id: Option<String>,
    /// Placeholder value for the query templates (person, object, step, action).
    pub subject: String,
    /// Free-text question. Required for PerRel and BehQA; the other tasks use
    /// the fixed question template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub query_media: MediaSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<ImageSize>,
    pub context: Vec<ContextItem>,
    pub gold: Gold,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_tag: Option<SubsetTag>,
}

impl QueryInstance {
    pub fn owner(&self) -> &str {
        self.owner_id.as_deref().unwrap_or("user")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextK {
    One,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BankMode {
    DescriptorsOnly,
    AllEvidence,
    Adaptive,
}

impl BankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BankMode::DescriptorsOnly => "descriptors-only",
            BankMode::AllEvidence => "all-evidence",
            BankMode::Adaptive => "adaptive",
        }
    }
}

impl FromStr for BankMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "descriptors-only" | "descriptors" | "text" => Ok(BankMode::DescriptorsOnly),
            "all-evidence" | "all" => Ok(BankMode::AllEvidence),
            "adaptive" => Ok(BankMode::Adaptive),
            other => Err(format!("unknown bank mode `{other}` (descriptors-only, all-evidence, adaptive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    NoContext,
    LanguageCtx(ContextK),
    VisualCtx(ContextK),
    Bank(BankMode),
}

impl Regime {
    /// The five prompting baselines, in report order.
    pub const BASELINES: [Regime; 5] = [
        Regime::NoContext,
        Regime::LanguageCtx(ContextK::One),
        Regime::LanguageCtx(ContextK::Max),
        Regime::VisualCtx(ContextK::One),
        Regime::VisualCtx(ContextK::Max),
    ];
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = |k: &ContextK| match k {
            ContextK::One => "1",
            ContextK::Max => "max",
        };
        match self {
            Regime::NoContext => f.write_str("no-context"),
            Regime::LanguageCtx(n) => write!(f, "language-ctx:{}", k(n)),
            Regime::VisualCtx(n) => write!(f, "visual-ctx:{}", k(n)),
            Regime::Bank(mode) => write!(f, "bank:{}", mode.as_str()),
        }
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = s.split_once(':').map_or((s.as_str(), None), |(h, a)| (h, Some(a)));
        let k = |arg: Option<&str>| match arg {
            Some("1") => Ok(ContextK::One),
            Some("max") | Some("kmax") => Ok(ContextK::Max),
            _ => Err(format!("regime `{s}` needs `:1` or `:max`")),
        };
        match head {
            "no-context" | "none" => Ok(Regime::NoContext),
            "language-ctx" | "language" => k(arg).map(Regime::LanguageCtx),
            "visual-ctx" | "visual" => k(arg).map(Regime::VisualCtx),
            "bank" => arg.unwrap_or("adaptive").parse().map(Regime::Bank),
            _ => Err(format!("unknown regime `{s}`")),
        }
    }
}

impl Serialize for Regime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// What to do with a REVISE the verification step withdrew.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviseFallback {
    #[default]
    Add,
    Confirm,
    Drop,
}

impl FromStr for ReviseFallback {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" => Ok(ReviseFallback::Add),
            "confirm" => Ok(ReviseFallback::Confirm),
            "drop" => Ok(ReviseFallback::Drop),
            other => Err(format!("unknown revise fallback `{other}` (add, confirm, drop)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("{stage} for {item}: {source}")]
    Parse {
        item: String,
        stage: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("bank construction failed for {}", .failures.iter().map(|(i, e)| format!("{i} ({e})")).collect::<Vec<_>>().join(", "))]
    Build { failures: Vec<(String, String)> },
    #[error("{0}")]
    Invalid(String),
}

/// Segments sent in one model call, with the reply.
pub(crate) fn call(
    backend: &dyn crate::gateway::Backend,
    segments: &[PromptSegment],
) -> Result<String, GatewayError> {
    backend.complete(segments, Decoding::Deterministic)
}

pub(crate) fn entry_types(bank: &crate::bank::Bank, ids: &[EntryId]) -> Vec<MemoryType> {
    ids.iter().filter_map(|id| bank.entry(*id)).map(|e| e.memory_type).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_strings_round_trip() {
        let all = [
            "no-context",
            "language-ctx:1",
            "language-ctx:max",
            "visual-ctx:1",
            "visual-ctx:max",
            "bank:descriptors-only",
            "bank:all-evidence",
            "bank:adaptive",
        ];
        for s in all {
            let r: Regime = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert!("visual-ctx".parse::<Regime>().is_err());
        assert!("bank:magic".parse::<Regime>().is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let q: QueryInstance = serde_json::from_str(
            r#"{"instance_id":"q1","task":"EgoID","subject":"washing dishes",
                "query_media":{"kind":"clip","clip_id":"query_01"},
                "context":[{"item_id":"i1","declaration":"washing dishes","media":{"kind":"clip","clip_id":"ref_01"}}],
                "gold":"Yes","subset_tag":"behavior-centric"}"#,
        )
        .unwrap();
        assert_eq!(q.task, Task::EgoId);
        assert_eq!(q.gold, Gold::YesNo(YesNo::Yes));
        assert_eq!(q.subset_tag, Some(SubsetTag::BehaviorCentric));
        assert_eq!(q.context[0].modality(), Modality::Video);
        let g: Gold = serde_json::from_str(r#""C""#).unwrap();
        assert_eq!(g, Gold::Option(OptionLetter::C));
        let g: Gold = serde_json::from_str(r#"{"x1":1,"y1":2,"x2":3,"y2":4}"#).unwrap();
        assert!(matches!(g, Gold::Box(_)));
    }
}
