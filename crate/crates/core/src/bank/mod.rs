//! The context bank: typed memory entries `(type, descriptor, evidence)` with
//! stable IDs, support counts and a provenance log, plus the merge state
//! machine that folds candidate cues into it.
//!
//! A [`Bank`] is treated as an immutable snapshot: [`Bank::apply`] returns a
//! new bank and leaves the receiver untouched.

mod ids;
pub mod view;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ids::{CandidateId, EntryId, IdParseError};
pub use view::{render_hybrid_view, render_text_view, span_frame_indices};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MemoryType {
    Appearance,
    OwnedObjects,
    Behavior,
}

impl MemoryType {
    /// Rendering order used by every bank view.
    pub const ALL: [MemoryType; 3] = [
        MemoryType::Appearance,
        MemoryType::OwnedObjects,
        MemoryType::Behavior,
    ];

    /// Static types are grounded to a single frame, behavior to a span.
    pub fn is_static(self) -> bool {
        !matches!(self, MemoryType::Behavior)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryType::Appearance => "APPEARANCE",
            MemoryType::OwnedObjects => "OWNED_OBJECTS",
            MemoryType::Behavior => "BEHAVIOR",
        }
    }

    /// Lower-case phrase used inside prompts ("reconciling new appearance cues").
    pub fn phrase(self) -> &'static str {
        match self {
            MemoryType::Appearance => "appearance",
            MemoryType::OwnedObjects => "owned-object",
            MemoryType::Behavior => "behavior",
        }
    }
}

impl fmt::Display for MemoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MemoryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_uppercase(),
            })
            .collect();
        match norm.as_str() {
            "APPEARANCE" => Ok(MemoryType::Appearance),
            "OWNED_OBJECTS" | "OWNED_OBJECT" | "OBJECTS" | "OBJECT" => Ok(MemoryType::OwnedObjects),
            "BEHAVIOR" | "BEHAVIOUR" | "MOTION" => Ok(MemoryType::Behavior),
            _ => Err(format!("unknown memory type `{s}`")),
        }
    }
}

/// Visual grounding of a cue. Frame indices address the stored frame
/// sequence of the clip.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Evidence {
    Frame {
        clip_id: String,
        frame_index: u32,
    },
    Span {
        clip_id: String,
        start_frame: u32,
        end_frame: u32,
    },
}

impl Evidence {
    pub fn frame(clip_id: impl Into<String>, frame_index: u32) -> Self {
        Evidence::Frame {
            clip_id: clip_id.into(),
            frame_index,
        }
    }

    pub fn span(clip_id: impl Into<String>, start_frame: u32, end_frame: u32) -> Result<Self, BankError> {
        if start_frame > end_frame {
            return Err(BankError::InvalidSpan {
                start: start_frame,
                end: end_frame,
            });
        }
        Ok(Evidence::Span {
            clip_id: clip_id.into(),
            start_frame,
            end_frame,
        })
    }

    pub fn clip_id(&self) -> &str {
        match self {
            Evidence::Frame { clip_id, .. } | Evidence::Span { clip_id, .. } => clip_id,
        }
    }

    pub fn is_frame(&self) -> bool {
        matches!(self, Evidence::Frame { .. })
    }

    /// Whether this evidence shape is legal for `memory_type`.
    pub fn fits(&self, memory_type: MemoryType) -> bool {
        match self {
            Evidence::Frame { .. } => memory_type.is_static(),
            Evidence::Span {
                start_frame,
                end_frame,
                ..
            } => !memory_type.is_static() && start_frame <= end_frame,
        }
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evidence::Frame {
                clip_id,
                frame_index,
            } => write!(f, "{clip_id} frame {frame_index}"),
            Evidence::Span {
                clip_id,
                start_frame,
                end_frame,
            } => write!(f, "{clip_id} span {start_frame}-{end_frame}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCue {
    pub candidate_id: CandidateId,
    pub memory_type: MemoryType,
    pub descriptor: String,
    pub anchor: Evidence,
}

impl CandidateCue {
    pub fn new(
        candidate_id: CandidateId,
        memory_type: MemoryType,
        descriptor: impl Into<String>,
        anchor: Evidence,
    ) -> Result<Self, BankError> {
        let descriptor = descriptor.into();
        if descriptor.trim().is_empty() {
            return Err(BankError::EmptyDescriptor);
        }
        if !anchor.fits(memory_type) {
            return Err(BankError::EvidenceTyping { memory_type });
        }
        Ok(Self {
            candidate_id,
            memory_type,
            descriptor,
            anchor,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryStatus {
    Active,
    Retracted,
}

/// Kind of a merge decision. `Drop` discards a redundant candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionKind {
    Add,
    Confirm,
    Revise,
    Retract,
    Drop,
}

impl DecisionKind {
    pub fn needs_target(self) -> bool {
        matches!(self, DecisionKind::Confirm | DecisionKind::Revise | DecisionKind::Retract)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Add => "ADD",
            DecisionKind::Confirm => "CONFIRM",
            DecisionKind::Revise => "REVISE",
            DecisionKind::Retract => "RETRACT",
            DecisionKind::Drop => "DROP",
        }
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DecisionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ADD" => Ok(DecisionKind::Add),
            "CONFIRM" => Ok(DecisionKind::Confirm),
            "REVISE" => Ok(DecisionKind::Revise),
            "RETRACT" => Ok(DecisionKind::Retract),
            "DROP" => Ok(DecisionKind::Drop),
            other => Err(format!("unknown decision kind `{other}`")),
        }
    }
}

/// One entry of an entry's provenance log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub op: DecisionKind,
    pub candidate_id: CandidateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_descriptor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub entry_id: EntryId,
    pub memory_type: MemoryType,
    pub descriptor: String,
    pub evidence: Vec<Evidence>,
    pub support_count: u32,
    pub status: EntryStatus,
    pub history: Vec<HistoryRecord>,
}

impl BankEntry {
    pub fn is_active(&self) -> bool {
        self.status == EntryStatus::Active
    }

    /// Evidence shown when the entry is inlined into a prompt: the most
    /// recent observation, which grounds the current descriptor.
    pub fn primary_evidence(&self) -> &Evidence {
        self.evidence.last().expect("bank entries always carry evidence")
    }

    pub fn count_ops(&self, op: DecisionKind) -> usize {
        self.history.iter().filter(|h| h.op == op).count()
    }

    /// Confirmed or revised after creation.
    pub fn was_updated(&self) -> bool {
        self.history
            .iter()
            .any(|h| matches!(h.op, DecisionKind::Confirm | DecisionKind::Revise))
    }
}

/// A merge decision for one candidate cue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub kind: DecisionKind,
    pub candidate_id: CandidateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<EntryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_descriptor: Option<String>,
}

impl MergeDecision {
    /// Builds a decision from loose parts, checking that the target and
    /// revised descriptor are present exactly when the kind requires them.
    pub fn from_parts(
        kind: DecisionKind,
        candidate_id: CandidateId,
        target: Option<EntryId>,
        revised_descriptor: Option<String>,
    ) -> Result<Self, BankError> {
        let decision = Self {
            kind,
            candidate_id,
            target,
            revised_descriptor,
        };
        decision.validate()?;
        Ok(decision)
    }

    pub fn add(candidate_id: CandidateId) -> Self {
        Self {
            kind: DecisionKind::Add,
            candidate_id,
            target: None,
            revised_descriptor: None,
        }
    }

    pub fn drop(candidate_id: CandidateId) -> Self {
        Self {
            kind: DecisionKind::Drop,
            candidate_id,
            target: None,
            revised_descriptor: None,
        }
    }

    pub fn confirm(candidate_id: CandidateId, target: EntryId) -> Self {
        Self {
            kind: DecisionKind::Confirm,
            candidate_id,
            target: Some(target),
            revised_descriptor: None,
        }
    }

    pub fn retract(candidate_id: CandidateId, target: EntryId) -> Self {
        Self {
            kind: DecisionKind::Retract,
            candidate_id,
            target: Some(target),
            revised_descriptor: None,
        }
    }

    pub fn revise(candidate_id: CandidateId, target: EntryId, descriptor: impl Into<String>) -> Self {
        Self {
            kind: DecisionKind::Revise,
            candidate_id,
            target: Some(target),
            revised_descriptor: Some(descriptor.into()),
        }
    }

    pub fn validate(&self) -> Result<(), BankError> {
        let malformed = |reason: &str| BankError::MalformedDecision {
            candidate_id: self.candidate_id,
            reason: reason.to_string(),
        };
        if self.kind.needs_target() != self.target.is_some() {
            return Err(malformed(if self.kind.needs_target() {
                "missing target entry"
            } else {
                "unexpected target entry"
            }));
        }
        let has_revision = self
            .revised_descriptor
            .as_deref()
            .is_some_and(|d| !d.trim().is_empty());
        match (self.kind == DecisionKind::Revise, has_revision, self.revised_descriptor.is_some()) {
            (true, false, _) => Err(malformed("REVISE without revised descriptor")),
            (false, _, true) => Err(malformed("revised descriptor on non-REVISE decision")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MergeDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.candidate_id, self.kind)?;
        if let Some(target) = self.target {
            write!(f, " {target}")?;
        }
        if let Some(d) = &self.revised_descriptor {
            write!(f, " -> {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BankError {
    #[error("unknown or retracted target entry {0}")]
    UnknownTarget(EntryId),
    #[error("{kind} across memory types: candidate is {candidate}, entry {target} is {entry}")]
    TypeMismatch {
        kind: DecisionKind,
        target: EntryId,
        candidate: MemoryType,
        entry: MemoryType,
    },
    #[error("malformed decision for {candidate_id}: {reason}")]
    MalformedDecision { candidate_id: CandidateId, reason: String },
    #[error("requested entry {0} is not an active bank entry")]
    UnknownRequestedId(EntryId),
    #[error("span start {start} is after end {end}")]
    InvalidSpan { start: u32, end: u32 },
    #[error("descriptor must not be empty")]
    EmptyDescriptor,
    #[error("{memory_type} cues require {} evidence", if .memory_type.is_static() { "FRAME" } else { "SPAN" })]
    EvidenceTyping { memory_type: MemoryType },
    #[error("bank invariant violated: {0}")]
    Invariant(String),
}

/// Which counter [`Bank::mint_ids`] advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    Candidate,
    Entry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bank {
    pub owner_id: String,
    pub next_candidate_seq: u32,
    pub next_entry_seq: u32,
    pub entries: Vec<BankEntry>,
}

impl Bank {
    pub fn new(owner_id: impl Into<String>) -> Self {
        Self {
            owner_id: owner_id.into(),
            next_candidate_seq: 1,
            next_entry_seq: 1,
            entries: Vec::new(),
        }
    }

    pub fn entry(&self, id: EntryId) -> Option<&BankEntry> {
        self.entries.iter().find(|e| e.entry_id == id)
    }

    pub fn active_entry(&self, id: EntryId) -> Option<&BankEntry> {
        self.entry(id).filter(|e| e.is_active())
    }

    pub fn active(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter().filter(|e| e.is_active())
    }

    pub fn active_of(&self, memory_type: MemoryType) -> impl Iterator<Item = &BankEntry> {
        self.active().filter(move |e| e.memory_type == memory_type)
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    pub fn active_ids(&self) -> Vec<EntryId> {
        self.active().map(|e| e.entry_id).collect()
    }

    pub fn mint_candidate_ids(&mut self, count: usize) -> Vec<CandidateId> {
        let start = self.next_candidate_seq;
        self.next_candidate_seq += count as u32;
        (start..self.next_candidate_seq).map(CandidateId::new).collect()
    }

    pub fn mint_entry_ids(&mut self, count: usize) -> Vec<EntryId> {
        let start = self.next_entry_seq;
        self.next_entry_seq += count as u32;
        (start..self.next_entry_seq).map(EntryId::new).collect()
    }

    /// Mints `count` fresh identifiers of `kind`, rendered as strings.
    pub fn mint_ids(&mut self, kind: IdKind, count: usize) -> Vec<String> {
        match kind {
            IdKind::Candidate => self.mint_candidate_ids(count).iter().map(ToString::to_string).collect(),
            IdKind::Entry => self.mint_entry_ids(count).iter().map(ToString::to_string).collect(),
        }
    }

    /// Applies one merge decision, returning the updated bank.
    pub fn apply(&self, decision: &MergeDecision, candidate: &CandidateCue) -> Result<Bank, BankError> {
        let mut next = self.clone();
        next.apply_in_place(decision, candidate)?;
        Ok(next)
    }

    /// In-place variant of [`Bank::apply`]. On error the bank is unchanged.
    pub fn apply_in_place(&mut self, decision: &MergeDecision, candidate: &CandidateCue) -> Result<(), BankError> {
        decision.validate()?;
        if decision.candidate_id != candidate.candidate_id {
            return Err(BankError::MalformedDecision {
                candidate_id: decision.candidate_id,
                reason: format!("decision is for {} but candidate is {}", decision.candidate_id, candidate.candidate_id),
            });
        }
        if !candidate.anchor.fits(candidate.memory_type) {
            return Err(BankError::EvidenceTyping {
                memory_type: candidate.memory_type,
            });
        }

        let record = |op| HistoryRecord {
            op,
            candidate_id: candidate.candidate_id,
            prior_descriptor: None,
        };

        match decision.kind {
            DecisionKind::Drop => Ok(()),
            DecisionKind::Add => {
                let entry_id = self.mint_entry_ids(1)[0];
                self.entries.push(BankEntry {
                    entry_id,
                    memory_type: candidate.memory_type,
                    descriptor: candidate.descriptor.clone(),
                    evidence: vec![candidate.anchor.clone()],
                    support_count: 1,
                    status: EntryStatus::Active,
                    history: vec![record(DecisionKind::Add)],
                });
                Ok(())
            }
            kind => {
                let target = decision.target.expect("validated");
                let entry = self
                    .entries
                    .iter_mut()
                    .find(|e| e.entry_id == target && e.is_active())
                    .ok_or(BankError::UnknownTarget(target))?;
                if kind != DecisionKind::Retract && entry.memory_type != candidate.memory_type {
                    return Err(BankError::TypeMismatch {
                        kind,
                        target,
                        candidate: candidate.memory_type,
                        entry: entry.memory_type,
                    });
                }
                match kind {
                    DecisionKind::Confirm => {
                        entry.support_count += 1;
                        entry.evidence.push(candidate.anchor.clone());
                        entry.history.push(record(DecisionKind::Confirm));
                    }
                    DecisionKind::Revise => {
                        let revised = decision.revised_descriptor.clone().expect("validated");
                        let prior = std::mem::replace(&mut entry.descriptor, revised);
                        entry.evidence.push(candidate.anchor.clone());
                        entry.history.push(HistoryRecord {
                            op: DecisionKind::Revise,
                            candidate_id: candidate.candidate_id,
                            prior_descriptor: Some(prior),
                        });
                    }
                    DecisionKind::Retract => {
                        entry.status = EntryStatus::Retracted;
                        entry.history.push(record(DecisionKind::Retract));
                    }
                    DecisionKind::Add | DecisionKind::Drop => unreachable!(),
                }
                Ok(())
            }
        }
    }

    /// Checks the structural invariants of a bank (used after loading).
    pub fn check_invariants(&self) -> Result<(), BankError> {
        let fail = |msg: String| Err(BankError::Invariant(msg));
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.entry_id) {
                return fail(format!("duplicate entry id {}", e.entry_id));
            }
            if e.entry_id.seq() >= self.next_entry_seq {
                return fail(format!("entry {} not below entry counter {}", e.entry_id, self.next_entry_seq));
            }
            if e.descriptor.trim().is_empty() {
                return fail(format!("entry {} has empty descriptor", e.entry_id));
            }
            if e.evidence.is_empty() {
                return fail(format!("entry {} has no evidence", e.entry_id));
            }
            if let Some(bad) = e.evidence.iter().find(|ev| !ev.fits(e.memory_type)) {
                return fail(format!("entry {} carries ill-typed evidence {bad}", e.entry_id));
            }
            let confirms = e.count_ops(DecisionKind::Confirm);
            let revises = e.count_ops(DecisionKind::Revise);
            if e.support_count as usize != 1 + confirms {
                return fail(format!("entry {} support {} != 1 + {confirms} confirms", e.entry_id, e.support_count));
            }
            if e.evidence.len() != 1 + confirms + revises {
                return fail(format!("entry {} evidence length mismatch", e.entry_id));
            }
            let retracted = e.count_ops(DecisionKind::Retract) > 0;
            if retracted != (e.status == EntryStatus::Retracted) {
                return fail(format!("entry {} status disagrees with history", e.entry_id));
            }
            for h in &e.history {
                if h.candidate_id.seq() >= self.next_candidate_seq {
                    return fail(format!("history of {} cites unissued {}", e.entry_id, h.candidate_id));
                }
            }
        }
        Ok(())
    }
}
