//! Stage II: answering a query against a built bank.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::construct::item_frames;
use super::regime::Pipeline;
use super::templates::{fill, PromptBuilder, Slot};
use super::{call, entry_types, AnswerKind, Axis, BankMode, Gold, MediaSource, PipelineError, QueryInstance, Regime, Task};
use crate::bank::view::{render_hybrid_view, render_text_view, span_frame_indices};
use crate::bank::{Bank, EntryId, Evidence, MemoryType};
use crate::gateway::parse::{parse_bbox, parse_final, parse_option_letter, parse_triage, parse_yes_no, BoundingBox, OptionLetter, TriageOutcome, YesNo};
use crate::gateway::{media_count, PromptSegment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub prompt: Vec<PromptSegment>,
    pub response: String,
}

/// Query-time record of one answer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub template_set: String,
    pub calls: Vec<CallRecord>,
    pub requested: Vec<EntryId>,
    pub decisive: Vec<EntryId>,
    pub requested_types: Vec<MemoryType>,
    pub decisive_types: Vec<MemoryType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Trace {
    pub(crate) fn new(template_set: &str) -> Self {
        Self {
            template_set: template_set.to_string(),
            ..Self::default()
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    YesNo(YesNo),
    Option(OptionLetter),
    Box(BoundingBox),
}

impl std::fmt::Display for Prediction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prediction::YesNo(v) => v.fmt(f),
            Prediction::Option(v) => v.fmt(f),
            Prediction::Box(b) => b.fmt(f),
        }
    }
}

impl Prediction {
    /// Whether this prediction matches `gold` (boxes never match exactly;
    /// they are scored by IoU).
    pub fn matches(&self, gold: &Gold) -> bool {
        match (self, gold) {
            (Prediction::YesNo(a), Gold::YesNo(b)) => a == b,
            (Prediction::Option(a), Gold::Option(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub instance_id: String,
    pub task: Task,
    pub regime: Regime,
    pub model: String,
    /// Reply the prediction was read from.
    pub raw: String,
    /// `None` only for invalid MCQ and box answers. Invalid binary answers
    /// carry the `No` fallback.
    pub prediction: Option<Prediction>,
    pub invalid: bool,
    pub trace: Trace,
}

/// Reads a task answer out of `text`.
pub(crate) fn interpret(q: &QueryInstance, text: &str) -> Option<Prediction> {
    match q.task.answer_kind() {
        AnswerKind::Binary => parse_yes_no(text).map(Prediction::YesNo),
        AnswerKind::Mcq => parse_option_letter(text)
            .or_else(|| {
                let t = text.trim().trim_end_matches('.').to_ascii_lowercase();
                q.options
                    .as_ref()?
                    .iter()
                    .position(|o| o.trim().to_ascii_lowercase() == t)
                    .map(|i| OptionLetter::ALL[i])
            })
            .map(Prediction::Option),
        AnswerKind::Box => {
            let size = q.image_size?;
            parse_bbox(text, size.width, size.height).ok().map(Prediction::Box)
        }
    }
}

/// Prediction plus invalid flag, applying the task fallback.
pub(crate) fn settle(q: &QueryInstance, text: Option<&str>, trace: &mut Trace) -> (Option<Prediction>, bool) {
    match text.and_then(|t| interpret(q, t)) {
        Some(p) => (Some(p), false),
        None => {
            trace.warnings.push(format!("unparseable {} answer, fallback applied", q.task));
            match q.task.answer_kind() {
                AnswerKind::Binary => (Some(Prediction::YesNo(YesNo::No)), true),
                AnswerKind::Mcq | AnswerKind::Box => (None, true),
            }
        }
    }
}

/// Query frames, captioned `query frame N`.
pub(crate) fn query_media(p: &Pipeline<'_>, q: &QueryInstance) -> Result<Vec<PromptSegment>, PipelineError> {
    let segs = item_frames(p, "query", &q.query_media, p.config.query_frames)?;
    Ok(segs)
}

/// Question text, with options for MCQ tasks.
pub(crate) fn question_text(p: &Pipeline<'_>, q: &QueryInstance) -> String {
    let t = &p.templates.questions;
    let s = q.subject.as_str();
    let mut out = match q.task {
        Task::PerId => fill(&t.per_id, &[("person", s)]),
        Task::ObjId => fill(&t.obj_id, &[("object", s)]),
        Task::ObjDet => fill(&t.obj_det, &[("object", s)]),
        Task::BehErr => fill(&t.beh_err, &[("step", s)]),
        Task::EgoId => t.ego_id.clone(),
        Task::PerRel | Task::BehQa => q.question.clone().unwrap_or_default(),
    };
    if let Some(options) = &q.options {
        for (letter, opt) in OptionLetter::ALL.iter().zip(options) {
            out.push_str(&format!("\n{letter}. {opt}"));
        }
    }
    out
}

pub(crate) fn answer_format(p: &Pipeline<'_>, q: &QueryInstance) -> String {
    let f = &p.templates.format;
    match q.task.answer_kind() {
        AnswerKind::Binary => f.binary.clone(),
        AnswerKind::Mcq => f.mcq.clone(),
        AnswerKind::Box => {
            let (w, h) = q.image_size.map_or((0, 0), |s| (s.width, s.height));
            fill(&f.bbox, &[("width", &w.to_string()), ("height", &h.to_string())])
        }
    }
}

fn references_word(q: &QueryInstance) -> &'static str {
    match q.context.first().map(|c| c.modality()) {
        Some(super::Modality::Video) => "clips",
        _ => "images",
    }
}

fn record(p: &Pipeline<'_>, trace: &mut Trace, prompt: Vec<PromptSegment>) -> Result<String, PipelineError> {
    let response = call(p.backend, &prompt)?;
    trace.calls.push(CallRecord {
        prompt,
        response: response.clone(),
    });
    Ok(response)
}

/// Keeps the longest prefix of `requested` whose evidence fits the media
/// budget next to `fixed` other media.
fn fit_budget(p: &Pipeline<'_>, bank: &Bank, requested: Vec<EntryId>, fixed: usize, trace: &mut Trace) -> Vec<EntryId> {
    let limit = p.backend.media_limit();
    let mut used = fixed;
    let mut kept = Vec::new();
    for id in requested {
        let cost = match bank.entry(id).map(|e| e.primary_evidence()) {
            Some(Evidence::Span {
                start_frame, end_frame, ..
            }) => span_frame_indices(*start_frame, *end_frame, p.config.span_frames).len(),
            _ => 1,
        };
        if used + cost > limit {
            trace.warnings.push(format!("dropped request {id}: media budget {limit} reached"));
            continue;
        }
        used += cost;
        kept.push(id);
    }
    kept
}

struct Prompts<'q> {
    q: &'q QueryInstance,
    question: String,
    format: String,
    query: Vec<PromptSegment>,
}

impl Prompts<'_> {
    fn first(&self, p: &Pipeline<'_>, bank_text: String, decision: String) -> Vec<PromptSegment> {
        let s2 = &p.templates.stage2;
        let mut b = PromptBuilder::new();
        match self.q.task.axis() {
            Axis::EgoWearer => b.compose(
                &s2.ego_call1,
                &[
                    ("action", Slot::Text(self.q.subject.clone())),
                    ("bank text", Slot::Text(bank_text)),
                    ("query media", Slot::Segments(self.query.clone())),
                    ("question", Slot::Text(self.question.clone())),
                    ("decision", Slot::Text(decision)),
                ],
            ),
            _ => b.compose(
                &s2.entity_call1,
                &[
                    ("references", Slot::Text(references_word(self.q).into())),
                    ("bank text", Slot::Text(bank_text)),
                    ("query media", Slot::Segments(self.query.clone())),
                    ("question", Slot::Text(format!("{}\n{}", self.question, self.format))),
                    ("decision", Slot::Text(decision)),
                ],
            ),
        };
        b.build()
    }

    fn second(&self, p: &Pipeline<'_>, hybrid: Vec<PromptSegment>, ids: &[EntryId]) -> Vec<PromptSegment> {
        let s2 = &p.templates.stage2;
        let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
        let mut b = PromptBuilder::new();
        match self.q.task.axis() {
            Axis::EgoWearer => b
                .compose(
                    &s2.ego_call2,
                    &[
                        ("action", Slot::Text(self.q.subject.clone())),
                        ("bank text", Slot::Segments(hybrid)),
                        ("query media", Slot::Segments(self.query.clone())),
                        ("entry ids", Slot::Text(ids.join(", "))),
                    ],
                )
                .line(&self.format),
            _ => b
                .compose(
                    &s2.entity_call2,
                    &[
                        ("references", Slot::Text(references_word(self.q).into())),
                        ("bank text", Slot::Segments(hybrid)),
                        ("query media", Slot::Segments(self.query.clone())),
                        ("question", Slot::Text(self.question.clone())),
                    ],
                )
                .line(&self.format),
        };
        b.line(&p.templates.format.decisive);
        b.build()
    }
}

/// Answers `q` from `bank` in the given mode.
///
/// Person, object and wearer tasks use the two-call protocol: a text-only
/// triage call, then, if the model asks for entries, a second call with
/// their evidence inlined. Behavior tasks read the bank as an ordered list
/// of phases in a single call.
pub fn answer_query(p: &Pipeline<'_>, bank: &Bank, q: &QueryInstance, mode: BankMode) -> Result<QueryOutcome, PipelineError> {
    let mut trace = Trace::new(&p.templates.id);
    let (raw, text) = if q.task.axis() == Axis::Behavior {
        phase_answer(p, bank, q, mode, &mut trace)?
    } else {
        two_call_answer(p, bank, q, mode, &mut trace)?
    };
    let (prediction, invalid) = settle(q, text.as_deref(), &mut trace);
    trace.requested_types = entry_types(bank, &trace.requested);
    trace.decisive_types = entry_types(bank, &trace.decisive);
    Ok(QueryOutcome {
        instance_id: q.instance_id.clone(),
        task: q.task,
        regime: Regime::Bank(mode),
        model: p.backend.model_name().to_string(),
        raw,
        prediction,
        invalid,
        trace,
    })
}

/// Returns the final reply and the answer text to interpret.
fn two_call_answer(
    p: &Pipeline<'_>,
    bank: &Bank,
    q: &QueryInstance,
    mode: BankMode,
    trace: &mut Trace,
) -> Result<(String, Option<String>), PipelineError> {
    let f = &p.templates.format;
    let s2 = &p.templates.stage2;
    let ego = q.task.axis() == Axis::EgoWearer;
    let prompts = Prompts {
        q,
        question: question_text(p, q),
        format: answer_format(p, q),
        query: query_media(p, q)?,
    };
    let text_view = render_text_view(bank);

    match mode {
        BankMode::DescriptorsOnly => {
            let decision = if ego {
                format!("{}\n{}", s2.decide_text_only, f.binary)
            } else {
                s2.decide_text_only.clone()
            };
            let raw = record(p, trace, prompts.first(p, text_view, decision))?;
            let text = match parse_triage(&raw) {
                Ok(TriageOutcome::Answer(a)) => Some(a),
                Ok(TriageOutcome::Request(_)) => {
                    trace.warnings.push("evidence request in descriptors-only mode".into());
                    None
                }
                Err(_) => Some(parse_final(&raw).answer),
            };
            Ok((raw, text))
        }
        BankMode::AllEvidence => {
            let all = fit_budget(p, bank, bank.active_ids(), media_count(&prompts.query), trace);
            second_call(p, bank, &prompts, all, trace)
        }
        BankMode::Adaptive => {
            let decision = if ego {
                format!("{}\n{}", s2.decide_adaptive, f.triage)
            } else {
                format!("{}\n{}", s2.decide_entity, f.triage_entity)
            };
            let raw = record(p, trace, prompts.first(p, text_view, decision))?;
            match parse_triage(&raw) {
                Ok(TriageOutcome::Answer(a)) => Ok((raw, Some(a))),
                Ok(TriageOutcome::Request(ids)) => {
                    let (known, unknown): (Vec<EntryId>, Vec<EntryId>) =
                        ids.into_iter().partition(|id| bank.active_entry(*id).is_some());
                    for id in unknown {
                        trace.warnings.push(format!("ignored request for unknown entry {id}"));
                    }
                    let requested = fit_budget(p, bank, known, media_count(&prompts.query), trace);
                    if requested.is_empty() {
                        trace.warnings.push("no usable entry in request".into());
                        return Ok((raw, None));
                    }
                    second_call(p, bank, &prompts, requested, trace)
                }
                Err(_) => {
                    let fin = parse_final(&raw);
                    Ok((raw, Some(fin.answer)))
                }
            }
        }
    }
}

fn second_call(
    p: &Pipeline<'_>,
    bank: &Bank,
    prompts: &Prompts<'_>,
    requested: Vec<EntryId>,
    trace: &mut Trace,
) -> Result<(String, Option<String>), PipelineError> {
    let set: BTreeSet<EntryId> = requested.iter().copied().collect();
    let hybrid = render_hybrid_view(bank, &set, p.config.span_frames)?;
    let raw = record(p, trace, prompts.second(p, hybrid, &requested))?;
    let fin = parse_final(&raw);
    trace.decisive = fin.decisive.into_iter().filter(|id| set.contains(id)).collect();
    trace.requested = requested;
    Ok((raw, Some(fin.answer)))
}

/// Behavior entries in temporal order: by the position of their clip among
/// the context items, then by span start.
fn phases(bank: &Bank, q: &QueryInstance) -> Vec<(EntryId, String, Evidence)> {
    let clip_rank = |clip: &str| q.context.iter().position(|c| c.media.clip_id() == clip).unwrap_or(usize::MAX);
    let mut out: Vec<_> = bank
        .active_of(MemoryType::Behavior)
        .map(|e| {
            let ev = e.evidence[0].clone();
            let start = match &ev {
                Evidence::Span { start_frame, .. } => *start_frame,
                Evidence::Frame { frame_index, .. } => *frame_index,
            };
            ((clip_rank(ev.clip_id()), start, e.entry_id), e.descriptor.clone(), e.primary_evidence().clone())
        })
        .collect();
    out.sort_by_key(|(k, _, _)| *k);
    out.into_iter().map(|((_, _, id), d, ev)| (id, d, ev)).collect()
}

fn phase_answer(
    p: &Pipeline<'_>,
    bank: &Bank,
    q: &QueryInstance,
    mode: BankMode,
    trace: &mut Trace,
) -> Result<(String, Option<String>), PipelineError> {
    let query = query_media(p, q)?;
    let mut listing = PromptBuilder::new();
    let mut inlined = Vec::new();
    let mut used = media_count(&query);
    for (id, descriptor, ev) in phases(bank, q) {
        listing.line(&format!("[{id}] {descriptor}"));
        if mode == BankMode::AllEvidence {
            let segs = crate::bank::view::evidence_segments(Some(id), &ev, p.config.span_frames);
            if used + segs.len() <= p.backend.media_limit() {
                used += segs.len();
                listing.segments(segs);
                inlined.push(id);
            }
        }
    }
    let listing = listing.build();
    let listing = if listing.is_empty() { vec![PromptSegment::text("(none)\n")] } else { listing };
    let s2 = &p.templates.stage2;
    let mut b = PromptBuilder::new();
    if q.task == Task::BehErr {
        b.compose(
            &s2.behavior_err,
            &[
                ("step", Slot::Text(q.subject.clone())),
                ("bank text", Slot::Segments(listing)),
                ("query media", Slot::Segments(query)),
            ],
        );
    } else {
        let reference = p
            .descriptions(q, usize::MAX)?
            .into_iter()
            .map(|(_, d)| d)
            .collect::<Vec<_>>()
            .join("\n");
        b.compose(
            &s2.behavior_qa,
            &[
                ("step", Slot::Text(q.subject.clone())),
                ("bank text", Slot::Segments(listing)),
                ("reference description", Slot::Text(reference)),
                ("query media", Slot::Segments(query)),
                ("question", Slot::Text(question_text(p, q))),
            ],
        );
    }
    b.line(&answer_format(p, q));
    let raw = record(p, trace, b.build())?;
    trace.requested = inlined;
    let fin = parse_final(&raw);
    Ok((raw, Some(fin.answer)))
}

pub(crate) fn is_query_media(seg: &PromptSegment, q: &QueryInstance) -> bool {
    match (seg, &q.query_media) {
        (PromptSegment::Media { clip_id, .. }, MediaSource::Clip { clip_id: qc } | MediaSource::Frame { clip_id: qc, .. }) => {
            clip_id == qc
        }
        _ => false,
    }
}
