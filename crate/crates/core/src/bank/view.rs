//! Text and hybrid renderings of a bank.
//!
//! Text view grammar, one line each, `\n`-terminated:
//!
//! ```text
//! APPEARANCE:
//! [e_001] (support 2) thin silver bracelet on left wrist
//! OWNED_OBJECTS:
//! (none)
//! BEHAVIOR:
//! [e_003] (support 1) swipes the phone screen with the right thumb
//! ```

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{Bank, BankEntry, BankError, EntryId, Evidence, MemoryType};
use crate::gateway::PromptSegment;
use crate::media::sample_frames;

fn entry_line(out: &mut String, entry: &BankEntry) {
    let descriptor = entry.descriptor.split_whitespace().collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "[{}] (support {}) {}", entry.entry_id, entry.support_count, descriptor);
}

/// Renders active entries grouped by memory type.
pub fn render_text_view(bank: &Bank) -> String {
    let mut out = String::new();
    for memory_type in MemoryType::ALL {
        let _ = writeln!(out, "{memory_type}:");
        let mut any = false;
        for entry in bank.active_of(memory_type) {
            entry_line(&mut out, entry);
            any = true;
        }
        if !any {
            out.push_str("(none)\n");
        }
    }
    out
}

/// Frame indices used to show the span `[start, end]` with at most `k`
/// frames, endpoints included when `k >= 2`.
pub fn span_frame_indices(start: u32, end: u32, k: usize) -> Vec<u32> {
    let len = (end - start) as usize + 1;
    sample_frames(len, k.max(1)).into_iter().map(|i| start + i).collect()
}

/// Media segments inlined for one evidence item.
pub(crate) fn evidence_segments(entry_id: Option<EntryId>, evidence: &Evidence, span_frames: usize) -> Vec<PromptSegment> {
    let label = entry_id.map(|id| format!("{id} evidence: ")).unwrap_or_default();
    match evidence {
        Evidence::Frame { clip_id, frame_index } => vec![PromptSegment::media_with_caption(
            clip_id.clone(),
            *frame_index,
            format!("{label}{clip_id} frame {frame_index}"),
        )],
        Evidence::Span {
            clip_id,
            start_frame,
            end_frame,
        } => span_frame_indices(*start_frame, *end_frame, span_frames)
            .into_iter()
            .map(|f| {
                PromptSegment::media_with_caption(
                    clip_id.clone(),
                    f,
                    format!("{label}{clip_id} frame {f} (span {start_frame}-{end_frame})"),
                )
            })
            .collect(),
    }
}

/// Text view with visual evidence inlined after each requested entry.
///
/// Static entries contribute exactly one frame; behavior entries contribute
/// `min(span_frames, span length)` uniformly spaced frames of their span.
/// Projecting the result onto its text segments yields [`render_text_view`].
pub fn render_hybrid_view(
    bank: &Bank,
    requested: &BTreeSet<EntryId>,
    span_frames: usize,
) -> Result<Vec<PromptSegment>, BankError> {
    if let Some(missing) = requested.iter().find(|id| bank.active_entry(**id).is_none()) {
        return Err(BankError::UnknownRequestedId(*missing));
    }
    let mut segments = Vec::new();
    let mut buf = String::new();
    for memory_type in MemoryType::ALL {
        let _ = writeln!(buf, "{memory_type}:");
        let mut any = false;
        for entry in bank.active_of(memory_type) {
            entry_line(&mut buf, entry);
            any = true;
            if requested.contains(&entry.entry_id) {
                segments.push(PromptSegment::text(std::mem::take(&mut buf)));
                segments.extend(evidence_segments(
                    Some(entry.entry_id),
                    entry.primary_evidence(),
                    span_frames,
                ));
            }
        }
        if !any {
            buf.push_str("(none)\n");
        }
    }
    if !buf.is_empty() {
        segments.push(PromptSegment::text(buf));
    }
    Ok(segments)
}
