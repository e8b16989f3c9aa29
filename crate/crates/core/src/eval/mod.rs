//! Metrics, manifests, the regime runner, reports, and bank/query statistics.

mod manifest;
mod report;
mod runner;
mod stats;

use serde::{Deserialize, Serialize};

use crate::gateway::parse::{BoundingBox, OptionLetter, YesNo};
use crate::pipeline::SubsetTag;

pub use manifest::{load_manifest, parse_manifest, Manifest, ManifestError};
pub use report::{
    read_records_csv, render_report, score_records, write_records_csv, PredictionRecord, RecordError, ReportRow,
    TaskScore,
};
pub use runner::{evaluate, EvalFailure, EvalRun};
pub use stats::{bank_stats, query_stats, render_bank_stats, render_query_stats, BankStats, QueryStats, StatsError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no instances with gold {0}; macro accuracy is undefined")]
    MissingClass(YesNo),
    #[error("empty evaluation set")]
    EmptySet,
    #[error("{preds} predictions for {golds} golds")]
    LengthMismatch { preds: usize, golds: usize },
}

fn same_len(preds: usize, golds: usize) -> Result<(), MetricError> {
    if preds != golds {
        return Err(MetricError::LengthMismatch { preds, golds });
    }
    Ok(())
}

/// Mean of per-class Yes/No accuracy, as a percentage. `None` predictions
/// (invalid output) are wrong for whatever their gold is.
pub fn macro_accuracy(preds: &[Option<YesNo>], golds: &[YesNo]) -> Result<f64, MetricError> {
    same_len(preds.len(), golds.len())?;
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, g) in preds.iter().zip(golds) {
        let c = match g {
            YesNo::Yes => 0,
            YesNo::No => 1,
        };
        total[c] += 1;
        if p.as_ref() == Some(g) {
            correct[c] += 1;
        }
    }
    for (c, class) in [YesNo::Yes, YesNo::No].into_iter().enumerate() {
        if total[c] == 0 {
            return Err(MetricError::MissingClass(class));
        }
    }
    let acc = |c: usize| correct[c] as f64 / total[c] as f64;
    Ok((acc(0) + acc(1)) / 2.0 * 100.0)
}

/// Multiple-choice accuracy, as a percentage; `None` counts as wrong.
pub fn mcq_accuracy(preds: &[Option<OptionLetter>], golds: &[OptionLetter]) -> Result<f64, MetricError> {
    same_len(preds.len(), golds.len())?;
    if golds.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p.as_ref() == Some(*g)).count();
    Ok(hits as f64 / golds.len() as f64 * 100.0)
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Share of predictions with IoU at or above `threshold`, as a percentage.
/// Missing boxes score IoU 0.
pub fn acc_at_iou(preds: &[Option<BoundingBox>], golds: &[BoundingBox], threshold: f64) -> Result<f64, MetricError> {
    same_len(preds.len(), golds.len())?;
    if golds.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_ref().map_or(0.0, |p| iou(p, g)) >= threshold)
        .count();
    Ok(hits as f64 / golds.len() as f64 * 100.0)
}

/// Wearer-identification score: both subsets pooled, then macro-averaged.
/// Every record must carry a subset tag.
pub fn egoid_score(preds: &[Option<YesNo>], golds: &[YesNo], tags: &[Option<SubsetTag>]) -> Result<f64, EgoIdError> {
    same_len(tags.len(), golds.len())?;
    if let Some(i) = tags.iter().position(Option::is_none) {
        return Err(EgoIdError::MissingTag(i));
    }
    Ok(macro_accuracy(preds, golds)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EgoIdError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("record {0} has no subset tag")]
    MissingTag(usize),
}

/// Summary statistic that may be undefined (rendered as an em dash).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat(pub Option<f64>);

impl Stat {
    pub fn ratio(num: f64, den: f64) -> Self {
        Stat((den > 0.0).then(|| num / den))
    }

    pub fn render(&self, decimals: usize) -> String {
        match self.0 {
            Some(v) => round_half_up(v, decimals),
            None => "\u{2014}".to_string(),
        }
    }
}

/// Fixed-point rendering with ties rounded away from zero. A small slack
/// absorbs binary representation error so 0.125 renders as 0.13.
pub fn round_half_up(v: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    let rounded = (v.abs() * scale + 0.5 + 1e-7).floor() / scale * v.signum();
    format!("{:.*}", decimals, if rounded == 0.0 { 0.0 } else { rounded })
}
