//! Per-instance prediction records (CSV) and the per-task accuracy table.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{acc_at_iou, egoid_score, macro_accuracy, mcq_accuracy, round_half_up, EgoIdError, MetricError};
use crate::gateway::parse::{BoundingBox, OptionLetter, YesNo};
use crate::pipeline::{AnswerKind, BankMode, ContextK, QueryInstance, QueryOutcome, Regime, SubsetTag, Task};

/// One CSV row. `pred` is empty when nothing could be read; `requested` and
/// `decisive` are space-separated entry ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub task: Task,
    pub regime: Regime,
    pub gold: String,
    pub pred: String,
    pub invalid: bool,
    pub calls: usize,
    pub requested: String,
    pub decisive: String,
    pub model: String,
    pub subset: String,
    pub raw: String,
}

fn join_ids<T: ToString>(ids: &[T]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

impl PredictionRecord {
    pub fn from_outcome(o: &QueryOutcome, q: &QueryInstance) -> Self {
        Self {
            instance_id: o.instance_id.clone(),
            task: o.task,
            regime: o.regime,
            gold: q.gold.to_string(),
            pred: o.prediction.map(|p| p.to_string()).unwrap_or_default(),
            invalid: o.invalid,
            calls: o.trace.call_count(),
            requested: join_ids(&o.trace.requested),
            decisive: join_ids(&o.trace.decisive),
            model: o.model.clone(),
            subset: q.subset_tag.map(|t| t.as_str().to_string()).unwrap_or_default(),
            raw: o.raw.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {instance_id}: bad {column} `{value}`")]
    Field {
        instance_id: String,
        column: &'static str,
        value: String,
    },
    #[error("record {instance_id} appears twice for {model} / {regime}")]
    Duplicate {
        instance_id: String,
        model: String,
        regime: Regime,
    },
    #[error("{model} / {regime} / {task}: {source}")]
    Metric {
        model: String,
        regime: Regime,
        task: Task,
        #[source]
        source: MetricError,
    },
    #[error("{model} / {regime} / EgoID: record {instance_id} has no subset tag")]
    MissingSubset {
        model: String,
        regime: Regime,
        instance_id: String,
    },
}

pub fn write_records_csv(path: &Path, records: &[PredictionRecord]) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_records_csv(path: &Path) -> Result<Vec<PredictionRecord>, RecordError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// Reads a box rendered as `[x1, y1, x2, y2]`.
fn parse_box_field(s: &str) -> Option<BoundingBox> {
    let nums: Vec<f64> = s
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|t| t.trim().parse().ok())
        .collect::<Option<_>>()?;
    match nums[..] {
        [x1, y1, x2, y2] => BoundingBox::new(x1, y1, x2, y2),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub instances: usize,
    /// Percentage, unrounded.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub regime: Regime,
    pub scores: BTreeMap<Task, TaskScore>,
}

fn regime_rank(r: Regime) -> usize {
    match r {
        Regime::NoContext => 0,
        Regime::LanguageCtx(ContextK::One) => 1,
        Regime::LanguageCtx(ContextK::Max) => 2,
        Regime::VisualCtx(ContextK::One) => 3,
        Regime::VisualCtx(ContextK::Max) => 4,
        Regime::Bank(BankMode::DescriptorsOnly) => 5,
        Regime::Bank(BankMode::AllEvidence) => 6,
        Regime::Bank(BankMode::Adaptive) => 7,
    }
}

fn field_err(r: &PredictionRecord, column: &'static str, value: &str) -> RecordError {
    RecordError::Field {
        instance_id: r.instance_id.clone(),
        column,
        value: value.to_string(),
    }
}

fn score_task(model: &str, regime: Regime, task: Task, recs: &[&PredictionRecord]) -> Result<f64, RecordError> {
    let metric = |source| RecordError::Metric {
        model: model.to_string(),
        regime,
        task,
        source,
    };
    // Invalid answers are wrong regardless of any fallback value recorded.
    fn pred(r: &PredictionRecord) -> Option<&str> {
        (!r.invalid && !r.pred.is_empty()).then_some(r.pred.as_str())
    }
    match task.answer_kind() {
        AnswerKind::Binary => {
            let mut golds = Vec::new();
            let mut preds = Vec::new();
            let mut tags = Vec::new();
            for r in recs {
                golds.push(r.gold.parse::<YesNo>().map_err(|_| field_err(r, "gold", &r.gold))?);
                preds.push(match pred(r) {
                    Some(p) => Some(p.parse::<YesNo>().map_err(|_| field_err(r, "pred", p))?),
                    None => None,
                });
                tags.push(match r.subset.as_str() {
                    "" => None,
                    "general" => Some(SubsetTag::General),
                    "behavior-centric" => Some(SubsetTag::BehaviorCentric),
                    other => return Err(field_err(r, "subset", other)),
                });
            }
            if task == Task::EgoId {
                egoid_score(&preds, &golds, &tags).map_err(|e| match e {
                    EgoIdError::Metric(m) => metric(m),
                    EgoIdError::MissingTag(i) => RecordError::MissingSubset {
                        model: model.to_string(),
                        regime,
                        instance_id: recs[i].instance_id.clone(),
                    },
                })
            } else {
                macro_accuracy(&preds, &golds).map_err(metric)
            }
        }
        AnswerKind::Mcq => {
            let mut golds = Vec::new();
            let mut preds = Vec::new();
            for r in recs {
                golds.push(r.gold.parse::<OptionLetter>().map_err(|_| field_err(r, "gold", &r.gold))?);
                preds.push(match pred(r) {
                    Some(p) => Some(p.parse::<OptionLetter>().map_err(|_| field_err(r, "pred", p))?),
                    None => None,
                });
            }
            mcq_accuracy(&preds, &golds).map_err(metric)
        }
        AnswerKind::Box => {
            let mut golds = Vec::new();
            let mut preds = Vec::new();
            for r in recs {
                golds.push(parse_box_field(&r.gold).ok_or_else(|| field_err(r, "gold", &r.gold))?);
                preds.push(match pred(r) {
                    Some(p) => Some(parse_box_field(p).ok_or_else(|| field_err(r, "pred", p))?),
                    None => None,
                });
            }
            acc_at_iou(&preds, &golds, 0.5).map_err(metric)
        }
    }
}

/// Groups records by (model, regime) and scores every task present. Rows are
/// ordered by model, then regime.
pub fn score_records(records: &[PredictionRecord]) -> Result<Vec<ReportRow>, RecordError> {
    let mut groups: BTreeMap<(String, usize), (Regime, BTreeMap<Task, Vec<&PredictionRecord>>)> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((r.model.as_str(), r.regime, r.instance_id.as_str())) {
            return Err(RecordError::Duplicate {
                instance_id: r.instance_id.clone(),
                model: r.model.clone(),
                regime: r.regime,
            });
        }
        groups
            .entry((r.model.clone(), regime_rank(r.regime)))
            .or_insert_with(|| (r.regime, BTreeMap::new()))
            .1
            .entry(r.task)
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((model, _), (regime, tasks))| {
            let scores = tasks
                .into_iter()
                .map(|(task, recs)| {
                    let value = score_task(&model, regime, task, &recs)?;
                    Ok((task, TaskScore { instances: recs.len(), value }))
                })
                .collect::<Result<_, RecordError>>()?;
            Ok(ReportRow { model, regime, scores })
        })
        .collect()
}

/// Markdown table with one row per (model, regime) and a column per task;
/// tasks without records render as `--`.
pub fn render_report(rows: &[ReportRow]) -> String {
    let mut out = String::from("| Model | Regime |");
    for t in Task::ALL {
        out.push_str(&format!(" {t} |"));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(Task::ALL.len()));
    out.push('\n');
    for row in rows {
        out.push_str(&format!("| {} | {} |", row.model, row.regime));
        for t in Task::ALL {
            let cell = row.scores.get(&t).map_or_else(|| "--".to_string(), |s| round_half_up(s.value, 2));
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
    out
}
