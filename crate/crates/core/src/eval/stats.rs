//! Construction and query statistics, computed from persisted logs only.

use serde::{Deserialize, Serialize};

use super::Stat;
use crate::bank::{DecisionKind, MemoryType};
use crate::pipeline::{ConstructionLog, Trace};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no {0} to summarize")]
    EmptyLog(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankStats {
    pub banks: usize,
    pub items: usize,
    /// Mean extracted candidates per context item.
    pub cues_per_clip: Stat,
    /// Mean active entries per final bank.
    pub entries: Stat,
    /// Percentage of final entries per memory type (A/O/B).
    pub split: [Stat; 3],
    /// Final entries over extracted candidates, pooled.
    pub compression: Stat,
    /// (CONFIRM + REVISE + RETRACT) over all non-DROP decisions.
    pub revision_share: Stat,
    /// Share of final entries carrying at least one CONFIRM or REVISE.
    pub updated_share: Stat,
}

pub fn bank_stats(logs: &[ConstructionLog]) -> Result<BankStats, StatsError> {
    if logs.is_empty() {
        return Err(StatsError::EmptyLog("construction logs"));
    }
    let items: usize = logs.iter().map(|l| l.items.len()).sum();
    let candidates: usize = logs.iter().map(ConstructionLog::total_candidates).sum();
    let finals: usize = logs.iter().map(|l| l.final_entries).sum();
    let updated: usize = logs.iter().map(|l| l.updated_entries).sum();
    let mut by_type = [0usize; 3];
    for l in logs {
        for (acc, n) in by_type.iter_mut().zip(l.final_by_type) {
            *acc += n;
        }
    }
    let count = |k: DecisionKind| logs.iter().map(|l| l.count_applied(k)).sum::<usize>();
    let revisions = count(DecisionKind::Confirm) + count(DecisionKind::Revise) + count(DecisionKind::Retract);
    let non_drop: usize = logs.iter().map(|l| l.decisions.len()).sum::<usize>() - count(DecisionKind::Drop);

    Ok(BankStats {
        banks: logs.len(),
        items,
        cues_per_clip: Stat::ratio(candidates as f64, items as f64),
        entries: Stat::ratio(finals as f64, logs.len() as f64),
        split: by_type.map(|n| Stat::ratio(n as f64 * 100.0, finals as f64)),
        compression: Stat::ratio(finals as f64, candidates as f64),
        revision_share: Stat::ratio(revisions as f64, non_drop as f64),
        updated_share: Stat::ratio(updated as f64, finals as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub queries: usize,
    /// Percentage of queries that asked for stored evidence.
    pub request_rate: Stat,
    /// Mean requested entries over requesting queries.
    pub requested: Stat,
    /// Mean decisive entries over requesting queries.
    pub decisive: Stat,
    pub requested_split: [Stat; 3],
    pub decisive_split: [Stat; 3],
}

fn type_split<'a>(types: impl Iterator<Item = &'a MemoryType>) -> [Stat; 3] {
    let mut n = [0usize; 3];
    for t in types {
        n[MemoryType::ALL.iter().position(|x| x == t).unwrap()] += 1;
    }
    let total: usize = n.iter().sum();
    n.map(|c| Stat::ratio(c as f64 * 100.0, total as f64))
}

pub fn query_stats(traces: &[Trace]) -> Result<QueryStats, StatsError> {
    if traces.is_empty() {
        return Err(StatsError::EmptyLog("query traces"));
    }
    let requesting: Vec<&Trace> = traces.iter().filter(|t| !t.requested.is_empty()).collect();
    let n = requesting.len() as f64;
    Ok(QueryStats {
        queries: traces.len(),
        request_rate: Stat::ratio(n * 100.0, traces.len() as f64),
        requested: Stat::ratio(requesting.iter().map(|t| t.requested.len()).sum::<usize>() as f64, n),
        decisive: Stat::ratio(requesting.iter().map(|t| t.decisive.len()).sum::<usize>() as f64, n),
        requested_split: type_split(requesting.iter().flat_map(|t| &t.requested_types)),
        decisive_split: type_split(requesting.iter().flat_map(|t| &t.decisive_types)),
    })
}

fn split_cell(s: &[Stat; 3]) -> String {
    s.iter().map(|v| v.render(1)).collect::<Vec<_>>().join(" / ")
}

pub fn render_bank_stats(s: &BankStats) -> String {
    format!(
        "| Banks | Items | Cues/clip | Entries | A/O/B (%) | Compression | Revision ops (%) | Updated (%) |\n\
         |---|---|---|---|---|---|---|---|\n\
         | {} | {} | {} | {} | {} | {} | {} | {} |\n",
        s.banks,
        s.items,
        s.cues_per_clip.render(2),
        s.entries.render(2),
        split_cell(&s.split),
        s.compression.render(3),
        Stat(s.revision_share.0.map(|v| v * 100.0)).render(1),
        Stat(s.updated_share.0.map(|v| v * 100.0)).render(1),
    )
}

pub fn render_query_stats(s: &QueryStats) -> String {
    format!(
        "| Queries | Visual requests (%) | Requested | Decisive | Requested A/O/B (%) | Decisive A/O/B (%) |\n\
         |---|---|---|---|---|---|\n\
         | {} | {} | {} | {} | {} | {} |\n",
        s.queries,
        s.request_rate.render(1),
        s.requested.render(2),
        s.decisive.render(2),
        split_cell(&s.requested_split),
        split_cell(&s.decisive_split),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{CandidateId, EntryId};
    use crate::pipeline::{DecisionRecord, ItemLog};

    fn log(kinds: &[DecisionKind], final_entries: usize) -> ConstructionLog {
        let mut l = ConstructionLog::new("u", "t");
        l.items = (0..5)
            .map(|i| ItemLog {
                item_id: format!("i{i}"),
                candidates: 3,
                by_type: [1, 1, 1],
                warnings: vec![],
            })
            .collect();
        l.decisions = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| DecisionRecord {
                item_id: format!("i{}", i / 3),
                candidate_id: CandidateId::new(i as u32 % 3 + 1),
                memory_type: MemoryType::Appearance,
                proposed: *k,
                applied: *k,
                target: k.needs_target().then_some(EntryId::new(1)),
                verified: None,
            })
            .collect();
        l.final_entries = final_entries;
        l.final_by_type = [final_entries, 0, 0];
        l
    }

    #[test]
    fn all_add_log() {
        let s = bank_stats(&[log(&[DecisionKind::Add; 15], 15)]).unwrap();
        assert_eq!(s.compression, Stat(Some(1.0)));
        assert_eq!(s.revision_share, Stat(Some(0.0)));
        assert_eq!(s.cues_per_clip, Stat(Some(3.0)));
        assert_eq!(bank_stats(&[]), Err(StatsError::EmptyLog("construction logs")));
    }

    #[test]
    fn direct_answers_leave_means_undefined() {
        let s = query_stats(&vec![Trace::default(); 4]).unwrap();
        assert_eq!(s.request_rate, Stat(Some(0.0)));
        assert_eq!(s.requested, Stat(None));
        assert!(render_query_stats(&s).contains("| 4 | 0.0 | \u{2014} | \u{2014} |"));
    }

    #[test]
    fn request_rate_and_mean() {
        let mut traces = vec![Trace::default(); 10];
        for t in traces.iter_mut().take(9) {
            t.requested = vec![EntryId::new(1), EntryId::new(2), EntryId::new(3)];
            t.requested_types = vec![MemoryType::Appearance, MemoryType::OwnedObjects, MemoryType::Behavior];
        }
        let s = query_stats(&traces).unwrap();
        assert_eq!(s.request_rate, Stat(Some(90.0)));
        assert_eq!(s.requested, Stat(Some(3.0)));
        assert_eq!(s.decisive, Stat(Some(0.0)));
        assert_eq!(s.decisive_split, [Stat(None); 3]);
    }
}
