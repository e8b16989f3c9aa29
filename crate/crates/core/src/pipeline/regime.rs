//! Pipeline context, caches, and the prompting baselines.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::construct::{build_bank, item_frames, ConstructionLog, DecisionRecord, ExtractionPreset, ItemLog};
use super::query::{answer_format, answer_query, query_media, question_text, settle, CallRecord, QueryOutcome, Trace};
use super::templates::{fill, PromptBuilder};
use super::{call, Axis, BankMode, ContextItem, ContextK, MediaSource, PipelineError, QueryInstance, Regime, ReviseFallback, Task};
use crate::bank::{Bank, CandidateCue, DecisionKind, Evidence, MemoryType, MergeDecision};
use crate::gateway::parse::parse_final;
use crate::gateway::{Backend, PromptSegment};
use crate::media::MediaStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Frames sampled per context clip.
    pub context_frames: usize,
    /// Frames sampled from the query clip.
    pub query_frames: usize,
    /// Frames shown per behavior span (2 = endpoints only).
    pub span_frames: usize,
    pub revise_fallback: ReviseFallback,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            context_frames: 16,
            query_frames: 16,
            span_frames: 4,
            revise_fallback: ReviseFallback::Add,
        }
    }
}

/// A bank with the log of how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltBank {
    pub key: String,
    pub bank: Bank,
    pub log: ConstructionLog,
}

type BankSlot = Arc<OnceLock<Result<Arc<BuiltBank>, String>>>;

/// Everything a pipeline call needs. Shareable across threads; the
/// description and bank caches fill on first use.
pub struct Pipeline<'a> {
    pub backend: &'a dyn Backend,
    pub media: &'a MediaStore,
    pub templates: &'a super::TemplateSet,
    pub config: PipelineConfig,
    descriptions: Mutex<HashMap<(String, String), String>>,
    banks: Mutex<HashMap<String, BankSlot>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        backend: &'a dyn Backend,
        media: &'a MediaStore,
        templates: &'a super::TemplateSet,
        config: PipelineConfig,
    ) -> Self {
        Self {
            backend,
            media,
            templates,
            config,
            descriptions: Mutex::default(),
            banks: Mutex::default(),
        }
    }

    fn context<'q>(&self, q: &'q QueryInstance, k: usize) -> &'q [ContextItem] {
        &q.context[..k.min(q.context.len())]
    }

    /// Description of one context item, generated once per (item, model).
    pub fn describe(&self, q: &QueryInstance, item: &ContextItem) -> Result<String, PipelineError> {
        let key = (item.item_id.clone(), self.backend.model_name().to_string());
        if let Some(d) = self.descriptions.lock().unwrap().get(&key) {
            return Ok(d.clone());
        }
        let t = &self.templates.describe;
        let d = item.declaration.as_str();
        let text = match q.task.axis() {
            Axis::Persons => fill(&t.person, &[("person", d)]),
            Axis::Objects => fill(&t.object, &[("object", d)]),
            Axis::Behavior => fill(&t.behavior, &[("step", d)]),
            Axis::EgoWearer => fill(&t.ego, &[("action", d)]),
        };
        let mut b = PromptBuilder::new();
        b.segments(item_frames(self, &item.item_id, &item.media, self.config.context_frames)?)
            .line(&text);
        let raw = call(self.backend, &b.build())?;
        let description = raw.trim().to_string();
        if description.is_empty() {
            return Err(PipelineError::Invalid(format!("empty description for {}", item.item_id)));
        }
        self.descriptions.lock().unwrap().insert(key, description.clone());
        Ok(description)
    }

    /// Descriptions of the first `k` context items.
    pub fn descriptions<'q>(&self, q: &'q QueryInstance, k: usize) -> Result<Vec<(&'q ContextItem, String)>, PipelineError> {
        let items = self.context(q, k);
        items.iter().map(|i| Ok((i, self.describe(q, i)?))).collect()
    }

    /// The bank used for `q`'s task, built once per context set.
    ///
    /// Person and object tasks get one entry per context item holding its
    /// description; behavior tasks get a phase bank; wearer tasks get the
    /// full cue bank. Construction never looks at the query itself.
    pub fn bank_for(&self, q: &QueryInstance) -> Result<Arc<BuiltBank>, PipelineError> {
        let preset = match q.task.axis() {
            Axis::Persons | Axis::Objects => "descriptions",
            Axis::Behavior => "phases",
            Axis::EgoWearer => "wearer",
        };
        let ids: Vec<&str> = q.context.iter().map(|c| c.item_id.as_str()).collect();
        let key = format!("{preset}:{}:{}:{}", q.owner(), self.backend.model_name(), ids.join(","));
        let slot = self.banks.lock().unwrap().entry(key.clone()).or_default().clone();
        let built = slot.get_or_init(|| {
            let result = match q.task.axis() {
                Axis::Persons | Axis::Objects => self.description_bank(q),
                Axis::Behavior => build_bank(self, q.owner(), &q.context, ExtractionPreset::Phases),
                Axis::EgoWearer => build_bank(self, q.owner(), &q.context, ExtractionPreset::Wearer),
            };
            result
                .map(|(bank, log)| Arc::new(BuiltBank { key: key.clone(), bank, log }))
                .map_err(|e| e.to_string())
        });
        built.clone().map_err(|e| PipelineError::Invalid(format!("bank {key}: {e}")))
    }

    /// Banks built so far, sorted by key.
    pub fn built_banks(&self) -> Vec<Arc<BuiltBank>> {
        let mut out: Vec<_> = self
            .banks
            .lock()
            .unwrap()
            .values()
            .filter_map(|slot| slot.get().and_then(|r| r.as_ref().ok()).cloned())
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    fn description_bank(&self, q: &QueryInstance) -> Result<(Bank, ConstructionLog), PipelineError> {
        let memory_type = match q.task.axis() {
            Axis::Persons => MemoryType::Appearance,
            _ => MemoryType::OwnedObjects,
        };
        let mut bank = Bank::new(q.owner());
        let mut log = ConstructionLog::new(q.owner(), &self.templates.id);
        for item in &q.context {
            let description = self.describe(q, item)?;
            let frame = match &item.media {
                MediaSource::Frame { clip_id, frame_index } => Evidence::frame(clip_id.clone(), *frame_index),
                MediaSource::Clip { clip_id } => {
                    let frames = self.media.sample(clip_id, self.config.context_frames)?;
                    Evidence::frame(clip_id.clone(), frames[frames.len() / 2])
                }
            };
            let id = bank.mint_candidate_ids(1)[0];
            let cue = CandidateCue::new(id, memory_type, description, frame)?;
            bank.apply_in_place(&MergeDecision::add(id), &cue)?;
            let mut by_type = [0; 3];
            by_type[MemoryType::ALL.iter().position(|t| *t == memory_type).unwrap()] = 1;
            log.items.push(ItemLog {
                item_id: item.item_id.clone(),
                candidates: 1,
                by_type,
                warnings: Vec::new(),
            });
            log.decisions.push(DecisionRecord {
                item_id: item.item_id.clone(),
                candidate_id: id,
                memory_type,
                proposed: DecisionKind::Add,
                applied: DecisionKind::Add,
                target: None,
                verified: None,
            });
        }
        log.finish(&bank);
        Ok((bank, log))
    }

    /// Answers `q` under `regime`.
    pub fn run(&self, q: &QueryInstance, regime: Regime) -> Result<QueryOutcome, PipelineError> {
        match regime {
            Regime::Bank(mode) => self.run_bank(q, mode),
            _ => self.run_baseline(q, regime),
        }
    }

    fn run_bank(&self, q: &QueryInstance, mode: BankMode) -> Result<QueryOutcome, PipelineError> {
        let built = self.bank_for(q)?;
        answer_query(self, &built.bank, q, mode)
    }

    fn k(&self, q: &QueryInstance, k: ContextK) -> usize {
        match k {
            ContextK::One => 1,
            ContextK::Max => q.context.len(),
        }
    }

    fn run_baseline(&self, q: &QueryInstance, regime: Regime) -> Result<QueryOutcome, PipelineError> {
        let query = query_media(self, q)?;
        let mut b = PromptBuilder::new();
        match regime {
            Regime::NoContext => {}
            Regime::VisualCtx(k) => self.visual_context(&mut b, q, self.k(q, k), query.len())?,
            Regime::LanguageCtx(k) => self.language_context(&mut b, q, self.k(q, k))?,
            Regime::Bank(_) => unreachable!(),
        }
        if regime != Regime::NoContext {
            b.line(&self.templates.visual.query);
        }
        b.segments(query).line(&question_text(self, q)).line(&answer_format(self, q));

        let mut trace = Trace::new(&self.templates.id);
        let prompt = b.build();
        let raw = call(self.backend, &prompt)?;
        trace.calls.push(CallRecord {
            prompt,
            response: raw.clone(),
        });
        let answer = parse_final(&raw).answer;
        let (prediction, invalid) = settle(q, Some(&answer), &mut trace);
        Ok(QueryOutcome {
            instance_id: q.instance_id.clone(),
            task: q.task,
            regime,
            model: self.backend.model_name().to_string(),
            raw,
            prediction,
            invalid,
            trace,
        })
    }

    fn intro(&self, q: &QueryInstance, declaration: &str) -> String {
        let v = &self.templates.visual;
        match q.task {
            Task::PerId | Task::PerRel => fill(&v.person, &[("person", declaration)]),
            Task::ObjId | Task::ObjDet => fill(&v.object, &[("object", declaration)]),
            Task::BehErr => fill(&v.beh_err, &[("step", declaration)]),
            Task::BehQa => fill(&v.beh_qa, &[("step", declaration)]),
            Task::EgoId => fill(&v.ego, &[("action", declaration)]),
        }
    }

    /// Reference media grouped by consecutive declaration, each group
    /// introduced once. Clip frames are thinned so everything fits next to
    /// the query under the media limit.
    fn visual_context(&self, b: &mut PromptBuilder, q: &QueryInstance, k: usize, query_len: usize) -> Result<(), PipelineError> {
        let items = self.context(q, k);
        let clips = items.iter().filter(|i| matches!(i.media, MediaSource::Clip { .. })).count();
        let images = items.len() - clips;
        let room = self.backend.media_limit().saturating_sub(query_len + images);
        let per_clip = if clips == 0 { 0 } else { (room / clips).clamp(1, self.config.context_frames) };
        let mut last: Option<&str> = None;
        for item in items {
            if last != Some(item.declaration.as_str()) {
                b.line(&self.intro(q, &item.declaration));
                last = Some(&item.declaration);
            }
            b.segments(item_frames(self, &item.item_id, &item.media, per_clip)?);
        }
        Ok(())
    }

    fn language_context(&self, b: &mut PromptBuilder, q: &QueryInstance, k: usize) -> Result<(), PipelineError> {
        let l = &self.templates.language;
        let described = self.descriptions(q, k)?;
        if q.task == Task::EgoId {
            let action = described.first().map_or(q.subject.as_str(), |(i, _)| i.declaration.as_str());
            b.line(&fill(&self.templates.visual.ego, &[("action", action)]));
            let lead = if described.len() == 1 {
                l.ego_one.clone()
            } else {
                fill(&l.ego_many, &[("n", &described.len().to_string())])
            };
            b.line(&lead);
            for (_, d) in &described {
                b.line(d);
            }
            return Ok(());
        }
        for (item, d) in &described {
            let decl = item.declaration.as_str();
            let line = match q.task {
                Task::PerId | Task::PerRel => fill(&l.person, &[("person", decl), ("description", d)]),
                Task::ObjId | Task::ObjDet => fill(&l.object, &[("object", decl), ("description", d)]),
                Task::BehErr => fill(&l.beh_err, &[("step", decl), ("description", d)]),
                Task::BehQa => fill(&l.beh_qa, &[("step", decl), ("description", d)]),
                Task::EgoId => unreachable!(),
            };
            b.line(&line);
        }
        Ok(())
    }
}

/// Media segments of `prompt` that do not come from the query.
pub fn context_media<'p>(prompt: &'p [PromptSegment], q: &QueryInstance) -> Vec<&'p PromptSegment> {
    prompt
        .iter()
        .filter(|s| s.is_media() && !super::query::is_query_media(s, q))
        .collect()
}
