//! Parsers for model replies.
//!
//! Output grammar the prompts ask for:
//!
//! ````text
//! ```cues
//! APPEARANCE | frame 7 | thin silver bracelet on left wrist
//! BEHAVIOR | span 3-9 | swipes the phone screen with the right thumb
//! ```
//!
//! ```decisions
//! c_001: ADD
//! c_002: CONFIRM e_003
//! c_003: REVISE e_001 -> thin silver chain bracelet on left wrist
//! c_004: RETRACT e_002
//! ```
//!
//! ```verification
//! c_003: CONFIRM
//! ```
//!
//! ANSWER: Yes
//! REQUEST: e_002, e_013
//! DECISIVE: e_002
//! ````

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bank::{Bank, CandidateCue, CandidateId, DecisionKind, EntryId, Evidence, MemoryType, MergeDecision};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unparseable model output: {0}")]
    ParseFailure(String),
    #[error("bounding box has zero area after clamping")]
    DegenerateBox,
}

fn failure(msg: impl Into<String>) -> ParseError {
    ParseError::ParseFailure(msg.into())
}

static ENTRY_ID_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\be_?\d+\b").unwrap());

/// Body of the first fenced block tagged `tag` (```` ```tag ````).
fn fenced_block<'a>(raw: &'a str, tag: &str) -> Option<&'a str> {
    let mut lines = raw.split_inclusive('\n');
    let mut offset = 0;
    let mut start = None;
    for line in lines.by_ref() {
        let t = line.trim();
        offset += line.len();
        if let Some(rest) = t.strip_prefix("```") {
            if rest.trim().eq_ignore_ascii_case(tag) {
                start = Some(offset);
                break;
            }
        }
    }
    let start = start?;
    let mut end = raw.len();
    let mut pos = start;
    for line in raw[start..].split_inclusive('\n') {
        if line.trim().starts_with("```") {
            end = pos;
            break;
        }
        pos += line.len();
    }
    Some(&raw[start..end])
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

// ---------------------------------------------------------------- candidates

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCues {
    pub cues: Vec<CandidateCue>,
    pub warnings: Vec<String>,
}

static SPAN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:span|frames?)?\s*(\d+)\s*(?:-|–|to|\.\.)\s*(\d+)$").unwrap());
static FRAME_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(?:frame|f)?\s*#?(\d+)$").unwrap());

enum Anchor {
    Frame(u32),
    Span(u32, u32),
}

fn parse_anchor(raw: &str) -> Option<Anchor> {
    let s = raw.trim();
    if let Some(c) = SPAN_RE.captures(s) {
        return Some(Anchor::Span(c[1].parse().ok()?, c[2].parse().ok()?));
    }
    FRAME_RE.captures(s).and_then(|c| c[1].parse().ok()).map(Anchor::Frame)
}

/// Parses the ` ```cues ` block of an extraction reply. Candidate IDs are
/// assigned `c_001..` in listing order; lines that are malformed or break
/// the frame/span typing rule are skipped with a warning.
pub fn parse_candidates(raw: &str, clip_id: &str) -> Result<ParsedCues, ParseError> {
    let block = fenced_block(raw, "cues").ok_or_else(|| failure("no ```cues block"))?;
    let mut cues = Vec::new();
    let mut warnings = Vec::new();
    for line in block.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '|').map(str::trim).collect();
        if fields.len() != 3 {
            warnings.push(format!("skipped malformed cue line `{line}`"));
            continue;
        }
        let memory_type: MemoryType = match fields[0].parse() {
            Ok(t) => t,
            Err(e) => {
                warnings.push(format!("skipped cue: {e}"));
                continue;
            }
        };
        let descriptor = strip_quotes(fields[2]);
        if descriptor.is_empty() {
            warnings.push(format!("skipped cue with empty descriptor `{line}`"));
            continue;
        }
        let anchor = match parse_anchor(fields[1]) {
            Some(Anchor::Frame(f)) => Evidence::frame(clip_id, f),
            Some(Anchor::Span(s, e)) if s <= e => Evidence::Span {
                clip_id: clip_id.to_string(),
                start_frame: s,
                end_frame: e,
            },
            Some(Anchor::Span(s, e)) => {
                warnings.push(format!("skipped cue with reversed span {s}-{e}"));
                continue;
            }
            None => {
                warnings.push(format!("skipped cue with unreadable anchor `{}`", fields[1]));
                continue;
            }
        };
        if !anchor.fits(memory_type) {
            warnings.push(format!(
                "skipped {memory_type} cue anchored to {}: static cues need a frame, behavior cues a span",
                fields[1]
            ));
            continue;
        }
        let id = CandidateId::new(cues.len() as u32 + 1);
        cues.push(CandidateCue::new(id, memory_type, descriptor, anchor).expect("checked above"));
    }
    Ok(ParsedCues { cues, warnings })
}

// ----------------------------------------------------------------- decisions

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDecisions {
    /// Exactly one decision per candidate, in candidate order.
    pub decisions: Vec<MergeDecision>,
    pub warnings: Vec<String>,
}

static RECORD_START_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:^|;)\s*(c_?\d+)\s*:").unwrap());
static DECISION_BODY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)^\s*\**\s*(ADD|CONFIRM(?:ED)?|REVISE|RETRACT|DROP|WITHDRAW(?:N)?)\b\**\s*(e_?\d+)?\s*(?:->|=>|→|:)?\s*(.*)$").unwrap()
});

/// `(candidate token, body)` records of a block; records start at a line
/// beginning or after `;`.
fn split_records(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let starts: Vec<_> = RECORD_START_RE.captures_iter(line).collect();
        for (i, cap) in starts.iter().enumerate() {
            let whole = cap.get(0).unwrap();
            let body_end = starts.get(i + 1).map_or(line.len(), |n| n.get(0).unwrap().start());
            out.push((cap[1].to_string(), line[whole.end()..body_end].trim().to_string()));
        }
    }
    out
}

/// Parses merge decisions for `candidates` against `bank`.
///
/// Unmentioned candidates become DROP. Decisions that could not be applied
/// (unknown or already-retracted target, cross-type CONFIRM/REVISE, REVISE
/// without a descriptor) are downgraded to DROP with a warning, simulating
/// earlier RETRACTs in the same batch so every returned decision applies
/// cleanly in order.
pub fn parse_merge_decisions(raw: &str, candidates: &[CandidateCue], bank: &Bank) -> Result<ParsedDecisions, ParseError> {
    let body = fenced_block(raw, "decisions");
    let records = split_records(body.unwrap_or(raw));
    if body.is_none() && records.is_empty() {
        return Err(failure("no ```decisions block"));
    }

    let mut warnings = Vec::new();
    let mut mentioned: BTreeMap<CandidateId, String> = BTreeMap::new();
    let known: HashSet<CandidateId> = candidates.iter().map(|c| c.candidate_id).collect();
    for (token, rest) in records {
        let Ok(id) = token.parse::<CandidateId>() else {
            warnings.push(format!("ignored record for unreadable candidate `{token}`"));
            continue;
        };
        if !known.contains(&id) {
            warnings.push(format!("ignored decision for unknown candidate {id}"));
            continue;
        }
        if mentioned.contains_key(&id) {
            warnings.push(format!("ignored repeated decision for {id}"));
            continue;
        }
        mentioned.insert(id, rest);
    }

    let mut retracted: HashSet<EntryId> = HashSet::new();
    let mut decisions = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let id = cand.candidate_id;
        let Some(rest) = mentioned.get(&id) else {
            decisions.push(MergeDecision::drop(id));
            continue;
        };
        let mut downgrade = |why: String| {
            warnings.push(format!("{id}: {why}; treated as DROP"));
            MergeDecision::drop(id)
        };
        let Some(cap) = DECISION_BODY_RE.captures(rest) else {
            decisions.push(downgrade(format!("unreadable decision `{rest}`")));
            continue;
        };
        let kind = match cap[1].to_ascii_uppercase().as_str() {
            "CONFIRM" | "CONFIRMED" => DecisionKind::Confirm,
            "WITHDRAW" | "WITHDRAWN" => DecisionKind::Drop,
            other => other.parse().expect("regex alternatives are decision kinds"),
        };
        let target = cap.get(2).and_then(|m| m.as_str().parse::<EntryId>().ok());
        let tail = strip_quotes(cap.get(3).map_or("", |m| m.as_str()));

        let decision = match kind {
            DecisionKind::Add => MergeDecision::add(id),
            DecisionKind::Drop => MergeDecision::drop(id),
            kind => {
                let Some(target) = target else {
                    decisions.push(downgrade(format!("{kind} without target entry")));
                    continue;
                };
                let Some(entry) = bank.active_entry(target).filter(|_| !retracted.contains(&target)) else {
                    decisions.push(downgrade(format!("{kind} targets unknown or retracted {target}")));
                    continue;
                };
                if kind != DecisionKind::Retract && entry.memory_type != cand.memory_type {
                    decisions.push(downgrade(format!(
                        "{kind} pairs a {} cue with {} entry {target}",
                        cand.memory_type, entry.memory_type
                    )));
                    continue;
                }
                match kind {
                    DecisionKind::Confirm => MergeDecision::confirm(id, target),
                    DecisionKind::Retract => {
                        retracted.insert(target);
                        MergeDecision::retract(id, target)
                    }
                    DecisionKind::Revise if tail.is_empty() => {
                        decisions.push(downgrade("REVISE without revised descriptor".into()));
                        continue;
                    }
                    DecisionKind::Revise => MergeDecision::revise(id, target, tail),
                    DecisionKind::Add | DecisionKind::Drop => unreachable!(),
                }
            }
        };
        decisions.push(decision);
    }
    Ok(ParsedDecisions { decisions, warnings })
}

/// Verdicts from the revision-verification reply: `true` keeps the REVISE.
/// Candidates without a verdict are withdrawn.
pub fn parse_verifications(
    raw: &str,
    revisions: &[CandidateId],
) -> Result<(BTreeMap<CandidateId, bool>, Vec<String>), ParseError> {
    let body = fenced_block(raw, "verification");
    let records = split_records(body.unwrap_or(raw));
    if body.is_none() && records.is_empty() {
        return Err(failure("no ```verification block"));
    }
    let mut warnings = Vec::new();
    let mut verdicts = BTreeMap::new();
    for (token, rest) in records {
        let Ok(id) = token.parse::<CandidateId>() else { continue };
        if !revisions.contains(&id) || verdicts.contains_key(&id) {
            continue;
        }
        let word = rest.trim().trim_matches('*').split_whitespace().next().unwrap_or("").to_ascii_uppercase();
        let keep = match word.trim_end_matches(['.', ',']) {
            "CONFIRM" | "CONFIRMED" | "KEEP" | "YES" => true,
            "WITHDRAW" | "WITHDRAWN" | "REJECT" | "NO" => false,
            other => {
                warnings.push(format!("{id}: unreadable verdict `{other}`, withdrawn"));
                false
            }
        };
        verdicts.insert(id, keep);
    }
    for id in revisions {
        if !verdicts.contains_key(id) {
            warnings.push(format!("{id}: no verification verdict, withdrawn"));
            verdicts.insert(*id, false);
        }
    }
    Ok((verdicts, warnings))
}

// -------------------------------------------------------------------- triage

/// Result of the first Stage-II call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriageOutcome {
    Answer(String),
    /// Requested entry IDs, duplicate-free, in request order.
    Request(Vec<EntryId>),
}

static MARKER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s>*_#`]*(ANSWER|REQUEST|DECISIVE)[\s*_`]*:[\s*_`]*(.*?)[\s*_`]*$").unwrap());

fn markers(raw: &str) -> impl Iterator<Item = (String, String)> + '_ {
    MARKER_RE
        .captures_iter(raw)
        .map(|c| (c[1].to_ascii_uppercase(), c[2].trim().to_string()))
}

fn entry_ids(text: &str) -> Vec<EntryId> {
    let mut seen = BTreeSet::new();
    ENTRY_ID_RE
        .find_iter(text)
        .filter_map(|m| m.as_str().parse::<EntryId>().ok())
        .filter(|id| seen.insert(*id))
        .collect()
}

pub fn parse_triage(raw: &str) -> Result<TriageOutcome, ParseError> {
    for (marker, value) in markers(raw) {
        match marker.as_str() {
            "ANSWER" if !value.is_empty() => return Ok(TriageOutcome::Answer(value)),
            "REQUEST" => {
                let ids = entry_ids(&value);
                if ids.is_empty() {
                    return Err(failure("REQUEST lists no entry IDs"));
                }
                return Ok(TriageOutcome::Request(ids));
            }
            _ => {}
        }
    }
    Err(failure("neither ANSWER: nor REQUEST: marker found"))
}

/// Inverse of [`parse_triage`] for well-formed outcomes.
pub fn render_triage(outcome: &TriageOutcome) -> String {
    match outcome {
        TriageOutcome::Answer(a) => format!("ANSWER: {a}"),
        TriageOutcome::Request(ids) => {
            let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
            format!("REQUEST: {}", ids.join(", "))
        }
    }
}

/// Final answer of a single-call or second-call reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalAnswer {
    /// Text after `ANSWER:`, or the whole reply when the marker is absent.
    pub answer: String,
    pub decisive: Vec<EntryId>,
    pub had_marker: bool,
}

pub fn parse_final(raw: &str) -> FinalAnswer {
    let mut answer = None;
    let mut decisive = Vec::new();
    for (marker, value) in markers(raw) {
        match marker.as_str() {
            "ANSWER" if answer.is_none() => answer = Some(value),
            "DECISIVE" if decisive.is_empty() => decisive = entry_ids(&value),
            _ => {}
        }
    }
    FinalAnswer {
        had_marker: answer.is_some(),
        answer: answer.unwrap_or_else(|| raw.trim().to_string()),
        decisive,
    }
}

// ------------------------------------------------------------- answer labels

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum YesNo {
    Yes,
    No,
}

impl fmt::Display for YesNo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            YesNo::Yes => "Yes",
            YesNo::No => "No",
        })
    }
}

impl std::str::FromStr for YesNo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" => Ok(YesNo::Yes),
            "no" | "n" => Ok(YesNo::No),
            other => Err(format!("expected Yes or No, got `{other}`")),
        }
    }
}

static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+").unwrap());

/// Reads Yes/No from an answer: the leading word if it is yes/no, else the
/// only yes/no word class present.
pub fn parse_yes_no(text: &str) -> Option<YesNo> {
    let words: Vec<String> = WORD_RE.find_iter(text).map(|m| m.as_str().to_ascii_lowercase()).collect();
    match words.first().map(String::as_str) {
        Some("yes") => return Some(YesNo::Yes),
        Some("no") => return Some(YesNo::No),
        _ => {}
    }
    let yes = words.iter().any(|w| w == "yes");
    let no = words.iter().any(|w| w == "no");
    match (yes, no) {
        (true, false) => Some(YesNo::Yes),
        (false, true) => Some(YesNo::No),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptionLetter {
    A,
    B,
    C,
    D,
}

impl OptionLetter {
    pub const ALL: [OptionLetter; 4] = [OptionLetter::A, OptionLetter::B, OptionLetter::C, OptionLetter::D];

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(OptionLetter::A),
            'B' => Some(OptionLetter::B),
            'C' => Some(OptionLetter::C),
            'D' => Some(OptionLetter::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OptionLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", (b'A' + *self as u8) as char)
    }
}

impl std::str::FromStr for OptionLetter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => OptionLetter::from_char(c).ok_or_else(|| format!("not an option letter: `{t}`")),
            _ => Err(format!("not an option letter: `{t}`")),
        }
    }
}

static LEAD_LETTER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[\s*(\[]*([A-Da-d])(?:[\s).:\]*,]|$)").unwrap());
static CUE_LETTER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:answer|option|choice)\s*(?:is)?\s*[:\s]\s*\(?([A-D])\b").unwrap());

pub fn parse_option_letter(text: &str) -> Option<OptionLetter> {
    LEAD_LETTER_RE
        .captures(text)
        .or_else(|| CUE_LETTER_RE.captures(text))
        .and_then(|c| c[1].chars().next())
        .and_then(OptionLetter::from_char)
}

// ---------------------------------------------------------------------- bbox

/// Pixel-space box with `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        let ok = [x1, y1, x2, y2].iter().all(|v| v.is_finite()) && x1 < x2 && y1 < y2;
        ok.then_some(Self { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

static NUMBER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

/// First four numbers in `raw` as a box. When all four are `<= 1.0` they are
/// read as normalized coordinates and scaled by the image size. The result
/// is clamped to the image and reordered so `x1 < x2`, `y1 < y2`.
pub fn parse_bbox(raw: &str, image_width: u32, image_height: u32) -> Result<BoundingBox, ParseError> {
    assert!(image_width >= 1 && image_height >= 1);
    let nums: Vec<f64> = NUMBER_RE
        .find_iter(raw)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .take(4)
        .collect();
    if nums.len() < 4 {
        return Err(failure(format!("expected 4 box coordinates, found {}", nums.len())));
    }
    let (w, h) = (f64::from(image_width), f64::from(image_height));
    let normalized = nums.iter().all(|v| *v <= 1.0);
    let (sx, sy) = if normalized { (w, h) } else { (1.0, 1.0) };
    let cx = |v: f64| (v * sx).clamp(0.0, w);
    let cy = |v: f64| (v * sy).clamp(0.0, h);
    let (ax, bx) = (cx(nums[0]), cx(nums[2]));
    let (ay, by) = (cy(nums[1]), cy(nums[3]));
    BoundingBox::new(ax.min(bx), ay.min(by), ax.max(bx), ay.max(by)).ok_or(ParseError::DegenerateBox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{BankError, CandidateCue};

    const CUES: &str = "Here you go.\n```cues\nAPPEARANCE | frame 3 | thin silver bracelet on left wrist\nOWNED_OBJECTS | frame 9 | black phone with cracked corner\nBEHAVIOR | span 2-11 | swipes with right thumb\n```\n";

    #[test]
    fn candidates_happy_path() {
        let parsed = parse_candidates(CUES, "clip_01").unwrap();
        assert!(parsed.warnings.is_empty());
        let ids: Vec<String> = parsed.cues.iter().map(|c| c.candidate_id.to_string()).collect();
        assert_eq!(ids, ["c_001", "c_002", "c_003"]);
        assert_eq!(parsed.cues[2].anchor, Evidence::span("clip_01", 2, 11).unwrap());
        assert_eq!(parsed.cues[1].memory_type, MemoryType::OwnedObjects);
    }

    #[test]
    fn candidates_typing_rule_and_failures() {
        let raw = "```cues\nBEHAVIOR | frame 4 | waves\nAPPEARANCE | frame 1 | red cap\n```";
        let parsed = parse_candidates(raw, "c").unwrap();
        assert_eq!(parsed.cues.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.cues[0].candidate_id, CandidateId::new(1));
        assert!(parse_candidates("The wearer seems tall.", "c").is_err());
    }

    fn cands(n: u32) -> Vec<CandidateCue> {
        (1..=n)
            .map(|i| CandidateCue::new(CandidateId::new(i), MemoryType::Appearance, format!("cue {i}"), Evidence::frame("c", i)).unwrap())
            .collect()
    }

    fn bank_with(n: u32) -> Bank {
        let mut bank = Bank::new("o");
        for c in cands(n) {
            bank.mint_candidate_ids(1);
            bank.apply_in_place(&MergeDecision::add(c.candidate_id), &c).unwrap();
        }
        bank
    }

    #[test]
    fn decisions_inline_semicolons_and_silent_drop() {
        let bank = bank_with(3);
        let out = parse_merge_decisions("c_001: ADD; c_002: CONFIRM e_003", &cands(3), &bank).unwrap();
        assert_eq!(
            out.decisions,
            vec![
                MergeDecision::add(CandidateId::new(1)),
                MergeDecision::confirm(CandidateId::new(2), EntryId::new(3)),
                MergeDecision::drop(CandidateId::new(3)),
            ]
        );
    }

    /// All 8 subsets of mentioned candidates: mentioned ones keep their ADD,
    /// unmentioned ones become DROP, and the output is always total.
    #[test]
    fn decisions_mention_subsets() {
        let bank = Bank::new("o");
        let cs = cands(3);
        for mask in 0u8..8 {
            let lines: Vec<String> = (0..3)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| format!("c_{:03}: ADD", i + 1))
                .collect();
            let raw = format!("```decisions\n{}\n```", lines.join("\n"));
            let out = parse_merge_decisions(&raw, &cs, &bank).unwrap();
            assert_eq!(out.decisions.len(), 3);
            for i in 0..3 {
                let want = if mask & (1 << i) != 0 { DecisionKind::Add } else { DecisionKind::Drop };
                assert_eq!(out.decisions[i].kind, want, "mask {mask:03b} cand {i}");
            }
        }
    }

    #[test]
    fn decisions_downgrades() {
        let mut bank = bank_with(2);
        // retract e_002
        let c = CandidateCue::new(CandidateId::new(9), MemoryType::Appearance, "x", Evidence::frame("c", 0)).unwrap();
        bank.next_candidate_seq = 10;
        bank.apply_in_place(&MergeDecision::retract(c.candidate_id, EntryId::new(2)), &c).unwrap();

        let raw = "```decisions\nc_001: REVISE e_001\nc_002: CONFIRM e_002\nc_003: CONFIRM e_077\n```";
        let out = parse_merge_decisions(raw, &cands(3), &bank).unwrap();
        assert!(out.decisions.iter().all(|d| d.kind == DecisionKind::Drop));
        assert_eq!(out.warnings.len(), 3);

        // a RETRACT earlier in the batch invalidates later targets
        let raw = "```decisions\nc_001: RETRACT e_001\nc_002: CONFIRM e_001\n```";
        let out = parse_merge_decisions(raw, &cands(2), &bank).unwrap();
        assert_eq!(out.decisions[0].kind, DecisionKind::Retract);
        assert_eq!(out.decisions[1].kind, DecisionKind::Drop);

        assert!(parse_merge_decisions("nothing useful", &cands(1), &bank).is_err());
        let empty = parse_merge_decisions("```decisions\n```", &cands(2), &bank).unwrap();
        assert_eq!(empty.decisions.len(), 2);
    }

    #[test]
    fn decisions_revise_descriptor_forms() {
        let bank = bank_with(1);
        let raw = "```decisions\nc_001: REVISE e_001 -> \"thin silver chain bracelet\"\n```";
        let out = parse_merge_decisions(raw, &cands(1), &bank).unwrap();
        assert_eq!(out.decisions[0], MergeDecision::revise(CandidateId::new(1), EntryId::new(1), "thin silver chain bracelet"));
        // every parsed decision applies cleanly
        let applied = bank.apply(&out.decisions[0], &cands(1)[0]);
        assert!(!matches!(applied, Err(BankError::UnknownTarget(_))));
    }

    #[test]
    fn verification_verdicts() {
        let ids = [CandidateId::new(3), CandidateId::new(5)];
        let (v, w) = parse_verifications("```verification\nc_003: CONFIRM\n```", &ids).unwrap();
        assert_eq!(v[&ids[0]], true);
        assert_eq!(v[&ids[1]], false);
        assert_eq!(w.len(), 1);
        let (v, _) = parse_verifications("c_003: withdraw; c_005: confirm", &ids).unwrap();
        assert_eq!((v[&ids[0]], v[&ids[1]]), (false, true));
        assert!(parse_verifications("they look the same", &ids).is_err());
    }

    #[test]
    fn triage_examples() {
        assert_eq!(parse_triage("ANSWER: No").unwrap(), TriageOutcome::Answer("No".into()));
        assert_eq!(
            parse_triage("REQUEST: e_002, e_013").unwrap(),
            TriageOutcome::Request(vec![EntryId::new(2), EntryId::new(13)])
        );
        assert_eq!(
            parse_triage("I need more.\n**REQUEST:** e013, e_002, e_013").unwrap(),
            TriageOutcome::Request(vec![EntryId::new(13), EntryId::new(2)])
        );
        assert!(parse_triage("maybe, hard to tell").is_err());
        assert!(parse_triage("REQUEST: none").is_err());
    }

    #[test]
    fn final_answer_with_decisive() {
        let f = parse_final("ANSWER: Yes\nDECISIVE: e_001, e_004");
        assert_eq!(f.answer, "Yes");
        assert_eq!(f.decisive, vec![EntryId::new(1), EntryId::new(4)]);
        let f = parse_final("Yes, it is me.");
        assert!(!f.had_marker);
        assert_eq!(parse_yes_no(&f.answer), Some(YesNo::Yes));
    }

    #[test]
    fn yes_no_and_letters() {
        assert_eq!(parse_yes_no("No."), Some(YesNo::No));
        assert_eq!(parse_yes_no("**Yes** - same wearer"), Some(YesNo::Yes));
        assert_eq!(parse_yes_no("I think the answer is no"), Some(YesNo::No));
        assert_eq!(parse_yes_no("could be yes, could be no"), None);
        assert_eq!(parse_yes_no("unclear"), None);
        assert_eq!(parse_option_letter("B"), Some(OptionLetter::B));
        assert_eq!(parse_option_letter("(C) stirs slower"), Some(OptionLetter::C));
        assert_eq!(parse_option_letter("The answer is: D"), Some(OptionLetter::D));
        assert_eq!(parse_option_letter("E"), None);
        assert_eq!(parse_option_letter("Because..."), None);
    }

    #[test]
    fn bbox_examples() {
        let b = parse_bbox("[100, 50, 300, 200]", 640, 480).unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (100.0, 50.0, 300.0, 200.0));
        let b = parse_bbox("[0.25, 0.25, 0.75, 0.75]", 640, 480).unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (160.0, 120.0, 480.0, 360.0));
        assert!(matches!(parse_bbox("I cannot find it", 640, 480), Err(ParseError::ParseFailure(_))));
        let b = parse_bbox("(700, 500, 600, -10)", 640, 480).unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (600.0, 0.0, 640.0, 480.0));
        assert_eq!(parse_bbox("[700, 10, 800, 20]", 640, 480), Err(ParseError::DegenerateBox));
    }
}
