//! Stage I: cue extraction and merging into the bank.

use serde::{Deserialize, Serialize};

use super::regime::Pipeline;
use super::templates::{PromptBuilder, Slot};
use super::{call, ContextItem, MediaSource, PipelineError, ReviseFallback};
use crate::bank::view::evidence_segments;
use crate::bank::{Bank, CandidateCue, CandidateId, DecisionKind, EntryId, MemoryType, MergeDecision};
use crate::gateway::parse::{parse_candidates, parse_merge_decisions, parse_verifications, ParseError};
use crate::gateway::PromptSegment;

/// Which extraction prompt Stage I uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionPreset {
    /// Cues about the camera wearer (all three memory types).
    Wearer,
    /// Temporal phases of a procedure (behavior entries).
    Phases,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLog {
    pub item_id: String,
    pub candidates: usize,
    /// Candidates per memory type, in `MemoryType::ALL` order.
    pub by_type: [usize; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub item_id: String,
    pub candidate_id: CandidateId,
    pub memory_type: MemoryType,
    /// What the merge reply asked for.
    pub proposed: DecisionKind,
    /// What was applied after verification and fallback.
    pub applied: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<EntryId>,
    /// Verification verdict, for proposed REVISEs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
}

/// Everything the bank statistics need from one construction run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionLog {
    pub owner_id: String,
    pub template_set: String,
    pub items: Vec<ItemLog>,
    pub decisions: Vec<DecisionRecord>,
    pub final_entries: usize,
    /// Active entries per memory type at the end of construction.
    pub final_by_type: [usize; 3],
    /// Active entries with at least one CONFIRM or REVISE.
    pub updated_entries: usize,
}

impl ConstructionLog {
    pub fn new(owner_id: &str, template_set: &str) -> Self {
        Self {
            owner_id: owner_id.to_string(),
            template_set: template_set.to_string(),
            items: Vec::new(),
            decisions: Vec::new(),
            final_entries: 0,
            final_by_type: [0; 3],
            updated_entries: 0,
        }
    }

    pub fn total_candidates(&self) -> usize {
        self.items.iter().map(|i| i.candidates).sum()
    }

    pub fn count_applied(&self, kind: DecisionKind) -> usize {
        self.decisions.iter().filter(|d| d.applied == kind).count()
    }

    /// Records the final bank summary.
    pub fn finish(&mut self, bank: &Bank) {
        self.final_entries = bank.active_count();
        for (i, t) in MemoryType::ALL.into_iter().enumerate() {
            self.final_by_type[i] = bank.active_of(t).count();
        }
        self.updated_entries = bank.active().filter(|e| e.was_updated()).count();
    }
}

fn type_index(t: MemoryType) -> usize {
    MemoryType::ALL.iter().position(|x| *x == t).unwrap()
}

/// Frames shown for an item, with `<item> frame N` captions.
pub(crate) fn item_frames(p: &Pipeline<'_>, item_id: &str, media: &MediaSource, n: usize) -> Result<Vec<PromptSegment>, PipelineError> {
    let frames = match media {
        MediaSource::Clip { clip_id } => p.media.sample(clip_id, n)?,
        MediaSource::Frame { clip_id, frame_index } => {
            p.media.frame_path(clip_id, *frame_index)?;
            vec![*frame_index]
        }
    };
    Ok(frames
        .into_iter()
        .map(|f| PromptSegment::media_with_caption(media.clip_id(), f, format!("{item_id} frame {f}")))
        .collect())
}

/// Sends `segments`; if `parse` fails, resends once with the format reminder.
fn call_with_retry<T>(
    p: &Pipeline<'_>,
    segments: Vec<PromptSegment>,
    item: &str,
    stage: &'static str,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<T, PipelineError> {
    let raw = call(p.backend, &segments)?;
    match parse(&raw) {
        Ok(v) => Ok(v),
        Err(first) => {
            tracing::debug!(item, stage, error = %first, "unparseable reply, retrying with format reminder");
            let mut b = PromptBuilder::new();
            b.segments(segments).line(&p.templates.format.reminder);
            let raw = call(p.backend, &b.build())?;
            parse(&raw).map_err(|source| PipelineError::Parse {
                item: item.to_string(),
                stage,
                source,
            })
        }
    }
}

/// Extracts candidate cues from one item and mints their IDs from `bank`.
pub fn extract_cues(
    p: &Pipeline<'_>,
    bank: &mut Bank,
    item: &ContextItem,
    preset: ExtractionPreset,
) -> Result<(Vec<CandidateCue>, ItemLog), PipelineError> {
    let frames = item_frames(p, &item.item_id, &item.media, p.config.context_frames)?;
    let template = match preset {
        ExtractionPreset::Wearer => &p.templates.stage1.wearer_extraction,
        ExtractionPreset::Phases => &p.templates.stage1.phase_extraction,
    };
    let n = frames.len().to_string();
    let mut b = PromptBuilder::new();
    b.compose(
        template,
        &[
            ("N", Slot::Text(n)),
            ("step", Slot::Text(item.declaration.clone())),
            ("frames", Slot::Segments(frames)),
        ],
    )
    .line(&p.templates.format.cues);
    let clip_id = item.media.clip_id();
    let parsed = call_with_retry(p, b.build(), &item.item_id, "cue extraction", |raw| parse_candidates(raw, clip_id))?;

    let mut warnings = parsed.warnings;
    let mut kept = Vec::new();
    for cue in parsed.cues {
        if let Err(e) = p.media.resolve(&cue.anchor) {
            warnings.push(format!("skipped cue `{}`: {e}", cue.descriptor));
            continue;
        }
        kept.push(cue);
    }
    let ids = if kept.is_empty() { Vec::new() } else { bank.mint_candidate_ids(kept.len()) };
    let cues: Vec<CandidateCue> = kept
        .into_iter()
        .zip(ids)
        .map(|(c, id)| CandidateCue { candidate_id: id, ..c })
        .collect();
    for w in &warnings {
        tracing::warn!(item = %item.item_id, "{w}");
    }
    let mut by_type = [0; 3];
    for c in &cues {
        by_type[type_index(c.memory_type)] += 1;
    }
    let log = ItemLog {
        item_id: item.item_id.clone(),
        candidates: cues.len(),
        by_type,
        warnings,
    };
    Ok((cues, log))
}

fn merge_prompt(p: &Pipeline<'_>, bank: &Bank, memory_type: MemoryType, cues: &[&CandidateCue]) -> Vec<PromptSegment> {
    let mut entries = String::new();
    for e in bank.active_of(memory_type) {
        entries.push_str(&format!("[{}] (support {}) {}\n", e.entry_id, e.support_count, e.descriptor));
    }
    if entries.is_empty() {
        entries.push_str("(none)\n");
    }
    let budget = p.backend.media_limit();
    let mut cand = PromptBuilder::new();
    let mut used = 0;
    for c in cues {
        cand.text(&format!("[{}] {} ({})\n", c.candidate_id, c.descriptor, c.anchor));
        let media = evidence_segments(None, &c.anchor, p.config.span_frames);
        if used + media.len() <= budget {
            used += media.len();
            cand.segments(media);
        }
    }
    let mut b = PromptBuilder::new();
    b.compose(
        &p.templates.stage1.merge,
        &[
            ("category", Slot::Text(memory_type.phrase().to_string())),
            ("entries", Slot::Text(entries)),
            ("candidates", Slot::Segments(cand.build())),
        ],
    )
    .line(&p.templates.format.decisions);
    b.build()
}

fn verification_prompt(
    p: &Pipeline<'_>,
    bank: &Bank,
    memory_type: MemoryType,
    revises: &[(&MergeDecision, &CandidateCue)],
) -> Vec<PromptSegment> {
    let mut ev = PromptBuilder::new();
    for (d, c) in revises {
        let target = d.target.expect("REVISE has a target");
        let entry = bank.active_entry(target).expect("parser checked the target");
        ev.line(&format!(
            "{}: REVISE {} \"{}\" -> \"{}\"",
            c.candidate_id,
            target,
            entry.descriptor,
            d.revised_descriptor.as_deref().unwrap_or_default()
        ));
        ev.line(&format!("Existing entry {target}:"));
        ev.segments(evidence_segments(Some(target), entry.primary_evidence(), p.config.span_frames));
        ev.line(&format!("Candidate {}:", c.candidate_id));
        ev.segments(evidence_segments(None, &c.anchor, p.config.span_frames));
    }
    let mut b = PromptBuilder::new();
    b.compose(
        &p.templates.stage1.verification,
        &[
            ("category", Slot::Text(memory_type.phrase().to_string())),
            ("evidence", Slot::Segments(ev.build())),
        ],
    )
    .line(&p.templates.format.verification);
    b.build()
}

fn fallback(policy: ReviseFallback, d: &MergeDecision) -> MergeDecision {
    match policy {
        ReviseFallback::Add => MergeDecision::add(d.candidate_id),
        ReviseFallback::Confirm => MergeDecision::confirm(d.candidate_id, d.target.expect("REVISE has a target")),
        ReviseFallback::Drop => MergeDecision::drop(d.candidate_id),
    }
}

/// Reconciles `cues` with `bank`, one merge call per memory type present.
pub fn merge_candidates(
    p: &Pipeline<'_>,
    bank: &mut Bank,
    item_id: &str,
    cues: &[CandidateCue],
) -> Result<Vec<DecisionRecord>, PipelineError> {
    let mut records = Vec::new();
    for memory_type in MemoryType::ALL {
        let group: Vec<&CandidateCue> = cues.iter().filter(|c| c.memory_type == memory_type).collect();
        if group.is_empty() {
            continue;
        }
        let owned: Vec<CandidateCue> = group.iter().map(|c| (*c).clone()).collect();
        let prompt = merge_prompt(p, bank, memory_type, &group);
        let parsed = call_with_retry(p, prompt, item_id, "merge", |raw| parse_merge_decisions(raw, &owned, bank))?;
        for w in &parsed.warnings {
            tracing::warn!(item = item_id, "{w}");
        }

        let revises: Vec<(&MergeDecision, &CandidateCue)> = parsed
            .decisions
            .iter()
            .zip(&owned)
            .filter(|(d, _)| d.kind == DecisionKind::Revise)
            .collect();
        let verdicts = if revises.is_empty() {
            Default::default()
        } else {
            let ids: Vec<CandidateId> = revises.iter().map(|(d, _)| d.candidate_id).collect();
            let prompt = verification_prompt(p, bank, memory_type, &revises);
            let (verdicts, warnings) =
                call_with_retry(p, prompt, item_id, "revision verification", |raw| parse_verifications(raw, &ids))?;
            for w in &warnings {
                tracing::warn!(item = item_id, "{w}");
            }
            verdicts
        };

        for (decision, cue) in parsed.decisions.iter().zip(&owned) {
            let verified = verdicts.get(&decision.candidate_id).copied();
            let applied = match verified {
                Some(false) => fallback(p.config.revise_fallback, decision),
                _ => decision.clone(),
            };
            bank.apply_in_place(&applied, cue)?;
            records.push(DecisionRecord {
                item_id: item_id.to_string(),
                candidate_id: cue.candidate_id,
                memory_type,
                proposed: decision.kind,
                applied: applied.kind,
                target: applied.target.or(decision.target),
                verified,
            });
        }
    }
    Ok(records)
}

/// Folds extraction and merging over `items` in order. Every item is
/// attempted; the build fails if any of them failed.
pub fn build_bank(
    p: &Pipeline<'_>,
    owner_id: &str,
    items: &[ContextItem],
    preset: ExtractionPreset,
) -> Result<(Bank, ConstructionLog), PipelineError> {
    if items.is_empty() {
        return Err(PipelineError::Invalid("bank construction needs at least one context item".into()));
    }
    let mut bank = Bank::new(owner_id);
    let mut log = ConstructionLog::new(owner_id, &p.templates.id);
    let mut failures = Vec::new();
    for item in items {
        let step = extract_cues(p, &mut bank, item, preset)
            .and_then(|(cues, item_log)| {
                let mut trial = bank.clone();
                let records = merge_candidates(p, &mut trial, &item.item_id, &cues)?;
                Ok((trial, item_log, records))
            });
        match step {
            Ok((next, item_log, records)) => {
                bank = next;
                log.items.push(item_log);
                log.decisions.extend(records);
            }
            Err(e) => {
                tracing::error!(item = %item.item_id, error = %e, "context item failed");
                failures.push((item.item_id.clone(), e.to_string()));
            }
        }
    }
    if !failures.is_empty() {
        return Err(PipelineError::Build { failures });
    }
    bank.check_invariants()?;
    log.finish(&bank);
    Ok((bank, log))
}
