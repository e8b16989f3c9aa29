//! Fixture authoring: scripted responders, manifests, and the generator that
//! writes everything under `fixtures/`.
//!
//! Run `CTXBANK_BLESS=1 cargo test -p ctxbank --test fixtures` to rewrite the
//! committed files after an intentional change.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::LazyLock;

use ctxbank::bank::render_text_view;
use ctxbank::eval::{render_report, score_records, PredictionRecord};
use ctxbank::gateway::{canonical_hash, text_projection, FnBackend, GatewayError, PromptSegment, RecordingBackend};
use ctxbank::media::{bank_to_json, MediaStore};
use ctxbank::pipeline::{
    build_bank, BankMode, ContextItem, ExtractionPreset, Gold, ImageSize, MediaSource, Pipeline, PipelineConfig, QueryInstance,
    Regime, SubsetTag, Task, TemplateSet,
};
use ctxbank::gateway::parse::{BoundingBox, OptionLetter, YesNo};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use regex::Regex;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn workspace_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Every clip the fixtures reference, with its frame count.
pub fn clips() -> Vec<(String, u32)> {
    let mut out = Vec::new();
    for i in 1..=5 {
        out.push((format!("ego_ctx_{i:02}"), 120));
        out.push((format!("hc_{i:02}"), 60));
        out.push((format!("rg_ego_{i}"), 120));
    }
    for i in 1..=4 {
        out.push((format!("ego_q{i:02}"), 96));
    }
    for i in 1..=12 {
        out.push((format!("rg_q{i:02}"), 96));
    }
    for c in ["rg_maya_1", "rg_maya_2", "rg_bottle_img_1", "rg_bottle_img_2"] {
        out.push((c.to_string(), 1));
    }
    for c in ["rg_bottle_1", "rg_bottle_2"] {
        out.push((c.to_string(), 48));
    }
    for i in 1..=3 {
        out.push((format!("rg_coffee_{i}"), 64));
    }
    out.sort();
    out
}

pub fn media_store() -> MediaStore {
    let mut s = MediaStore::in_memory(fixtures_dir().join("media"));
    for (c, n) in clips() {
        s.register(c, n);
    }
    s
}

fn clip(id: &str) -> MediaSource {
    MediaSource::Clip { clip_id: id.into() }
}

fn image(id: &str) -> MediaSource {
    MediaSource::Frame {
        clip_id: id.into(),
        frame_index: 0,
    }
}

fn item(id: &str, declaration: &str, media: MediaSource) -> ContextItem {
    ContextItem {
        item_id: id.into(),
        declaration: declaration.into(),
        media,
    }
}

static CANDIDATE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\[(c_\d+)\] (.*) \(([^()]*)\)$").unwrap());
static ENTRY_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\[(e_\d+)\] \(support \d+\) (.*)$").unwrap());
static REVISE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^(c_\d+): REVISE").unwrap());

fn first_clip(segs: &[PromptSegment], prefix: &str) -> Option<String> {
    segs.iter().find_map(|s| match s {
        PromptSegment::Media { clip_id, .. } if clip_id.starts_with(prefix) => Some(clip_id.clone()),
        _ => None,
    })
}

/// Entry id whose descriptor starts with `key`, read from a text view.
fn entry_id(text: &str, key: &str) -> String {
    ENTRY_RE
        .captures_iter(text)
        .find(|c| c[2].starts_with(key))
        .map(|c| c[1].to_string())
        .unwrap_or_else(|| panic!("no entry starting with `{key}` in prompt"))
}

/// What a scripted merge reply does with one candidate, keyed by its exact
/// descriptor.
#[derive(Clone, Copy)]
enum Plan {
    Add,
    Confirm(&'static str),
    Revise(&'static str, &'static str),
}

fn merge_reply(text: &str, plans: &[(&str, Plan)]) -> String {
    let mut lines = Vec::new();
    for c in CANDIDATE_RE.captures_iter(text) {
        let Some((_, plan)) = plans.iter().find(|(d, _)| *d == &c[2]) else {
            continue;
        };
        lines.push(match plan {
            Plan::Add => format!("{}: ADD", &c[1]),
            Plan::Confirm(key) => format!("{}: CONFIRM {}", &c[1], entry_id(text, key)),
            Plan::Revise(key, to) => format!("{}: REVISE {} -> {to}", &c[1], entry_id(text, key)),
        });
    }
    format!("```decisions\n{}\n```", lines.join("\n"))
}

fn verification_reply(text: &str) -> String {
    let lines: Vec<String> = REVISE_RE.captures_iter(text).map(|c| format!("{}: CONFIRM", &c[1])).collect();
    format!("```verification\n{}\n```", lines.join("\n"))
}

// ---------------------------------------------------------------------------
// End-to-end wearer fixture: 5 context clips, 4 queries.

pub const EGO_OWNER: &str = "user";

pub fn ego_items() -> Vec<ContextItem> {
    [
        "washing dishes",
        "chopping vegetables",
        "watering plants",
        "folding laundry",
        "making coffee",
    ]
    .iter()
    .enumerate()
    .map(|(i, d)| item(&format!("ego_ctx_{:02}", i + 1), d, clip(&format!("ego_ctx_{:02}", i + 1))))
    .collect()
}

pub fn ego_manifest() -> Vec<QueryInstance> {
    let golds = [YesNo::Yes, YesNo::No, YesNo::Yes, YesNo::No];
    let tags = [
        SubsetTag::General,
        SubsetTag::BehaviorCentric,
        SubsetTag::BehaviorCentric,
        SubsetTag::General,
    ];
    (1..=4)
        .map(|i| QueryInstance {
            instance_id: format!("ego_{i:02}"),
            task: Task::EgoId,
            owner_id: None,
            subject: "doing household chores".into(),
            question: None,
            options: None,
            query_media: clip(&format!("ego_q{i:02}")),
            image_size: None,
            context: ego_items(),
            gold: Gold::YesNo(golds[i - 1]),
            subset_tag: Some(tags[i - 1]),
        })
        .collect()
}

fn ego_cues(clip_id: &str) -> &'static str {
    match clip_id {
        "ego_ctx_01" => {
            "```cues\n\
             APPEARANCE | frame 16 | thin silver bracelet on the left wrist\n\
             APPEARANCE | frame 40 | grey hooded sweatshirt with the cuffs pushed up\n\
             OWNED_OBJECTS | frame 63 | blue ceramic mug with a chipped rim\n\
             BEHAVIOR | span 16-71 | works left-handed, scrubbing each plate and rinsing it twice\n\
             ```"
        }
        "ego_ctx_02" => {
            "```cues\n\
             APPEARANCE | frame 24 | silver bracelet on the left wrist\n\
             APPEARANCE | frame 48 | dark red nail polish\n\
             BEHAVIOR | span 24-95 | holds the knife in the left hand and pushes slices aside with the blade\n\
             ```"
        }
        "ego_ctx_03" => {
            "```cues\n\
             APPEARANCE | frame 32 | grey sweatshirt with a small white logo on the chest\n\
             OWNED_OBJECTS | frame 79 | chipped blue mug on the windowsill\n\
             BEHAVIOR | span 8-103 | leads with the left hand, steadying the can with the right\n\
             ```"
        }
        "ego_ctx_04" => {
            "```cues\n\
             APPEARANCE | frame 56 | thin silver ring on the right index finger\n\
             APPEARANCE | frame 87 | a hand is visible\n\
             BEHAVIOR | span 16-111 | folds clothes\n\
             ```"
        }
        "ego_ctx_05" => {
            "```cues\n\
             APPEARANCE | frame 40 | dark red polish on the fingernails\n\
             OWNED_OBJECTS | frame 71 | blue mug with a chip in the rim\n\
             BEHAVIOR | span 24-87 | taps the coffee scoop twice on the jar rim before pouring\n\
             ```"
        }
        other => panic!("no cues scripted for {other}"),
    }
}

const EGO_PLANS: &[(&str, Plan)] = &[
    ("thin silver bracelet on the left wrist", Plan::Add),
    ("grey hooded sweatshirt with the cuffs pushed up", Plan::Add),
    ("blue ceramic mug with a chipped rim", Plan::Add),
    ("works left-handed, scrubbing each plate and rinsing it twice", Plan::Add),
    ("silver bracelet on the left wrist", Plan::Confirm("thin silver bracelet")),
    ("dark red nail polish", Plan::Add),
    ("holds the knife in the left hand and pushes slices aside with the blade", Plan::Add),
    (
        "grey sweatshirt with a small white logo on the chest",
        Plan::Revise("grey hooded sweatshirt", "grey hooded sweatshirt with a small white chest logo, cuffs pushed up"),
    ),
    ("chipped blue mug on the windowsill", Plan::Confirm("blue ceramic mug")),
    ("leads with the left hand, steadying the can with the right", Plan::Confirm("works left-handed")),
    ("thin silver ring on the right index finger", Plan::Add),
    ("dark red polish on the fingernails", Plan::Confirm("dark red nail polish")),
    ("blue mug with a chip in the rim", Plan::Confirm("blue ceramic mug")),
    ("taps the coffee scoop twice on the jar rim before pouring", Plan::Add),
];

/// Per query clip: entries requested at triage (by descriptor prefix), how
/// many of them are decisive, and the answers (triage-free, final).
fn ego_query_plan(clip_id: &str) -> (&'static [&'static str], usize, &'static str, &'static str) {
    match clip_id {
        "ego_q01" => (&["thin silver bracelet", "thin silver ring"], 1, "Yes", "Yes"),
        "ego_q02" => (&[], 0, "No", "No"),
        "ego_q03" => (&["works left-handed", "holds the knife", "taps the coffee scoop"], 2, "No", "Yes"),
        "ego_q04" => (&[], 0, "Yes", "No"),
        other => panic!("no plan for query clip {other}"),
    }
}

fn ego_respond(segs: &[PromptSegment]) -> Result<String, GatewayError> {
    let t = text_projection(segs);
    if t.contains("Extract distinctive cues about the camera wearer") {
        let c = first_clip(segs, "ego_ctx_").expect("extraction prompt shows a context clip");
        return Ok(ego_cues(&c).to_string());
    }
    if t.contains("You proposed the following REVISE operations") {
        return Ok(verification_reply(&t));
    }
    if t.contains("You are reconciling new") {
        return Ok(merge_reply(&t, EGO_PLANS));
    }
    let q = first_clip(segs, "ego_q").expect("query prompt shows the query clip");
    let (requests, decisive, text_only, final_answer) = ego_query_plan(&q);
    if t.contains("Compare the attached visual evidence") {
        let shown: Vec<String> = requests
            .iter()
            .take(decisive)
            .map(|k| entry_id(&t, k))
            .collect();
        let mut reply = format!("ANSWER: {final_answer}");
        if !shown.is_empty() {
            reply.push_str(&format!("\nDECISIVE: {}", shown.join(", ")));
        }
        return Ok(reply);
    }
    if t.contains("Decide from the text claims alone.") {
        return Ok(format!("The text claims point to {}.\nANSWER: {text_only}", text_only.to_lowercase()));
    }
    if requests.is_empty() {
        return Ok(format!("ANSWER: {final_answer}"));
    }
    let ids: Vec<String> = requests.iter().map(|k| entry_id(&t, k)).collect();
    Ok(format!("REQUEST: {}", ids.join(", ")))
}

pub fn ego_backend() -> FnBackend {
    FnBackend::new("scripted", ego_respond)
}

// ---------------------------------------------------------------------------
// Hand-countable construction log: 5 items x 3 candidates,
// 10 ADD / 3 CONFIRM / 1 REVISE / 1 DROP.

pub fn hand_count_items() -> Vec<ContextItem> {
    (1..=5)
        .map(|i| item(&format!("hc_{i:02}"), "cooking", clip(&format!("hc_{i:02}"))))
        .collect()
}

fn hand_count_cues(clip_id: &str) -> String {
    let lines: &[&str] = match clip_id {
        "hc_01" => &[
            "APPEARANCE | frame 4 | olive canvas apron",
            "OWNED_OBJECTS | frame 12 | wooden spoon with a burnt tip",
            "BEHAVIOR | span 8-31 | stirs clockwise in slow wide circles",
        ],
        "hc_02" => &[
            "APPEARANCE | frame 8 | rolled-up denim sleeves",
            "OWNED_OBJECTS | frame 20 | green enamel pot",
            "APPEARANCE | frame 27 | olive apron with a front pocket",
        ],
        "hc_03" => &[
            "APPEARANCE | frame 4 | black fitness band on the right wrist",
            "OWNED_OBJECTS | frame 16 | scorched wooden spoon",
            "BEHAVIOR | span 12-43 | stirs clockwise in slow circles, scraping the sides",
        ],
        "hc_04" => &[
            "BEHAVIOR | span 4-27 | tastes from the spoon before seasoning",
            "APPEARANCE | frame 35 | short nails",
            "OWNED_OBJECTS | frame 39 | a kitchen",
        ],
        "hc_05" => &[
            "APPEARANCE | frame 12 | hair tied up with a yellow band",
            "OWNED_OBJECTS | frame 27 | glass salt jar with a cork lid",
            "OWNED_OBJECTS | frame 43 | green pot with enamel handles",
        ],
        other => panic!("no hand-count cues for {other}"),
    };
    format!("```cues\n{}\n```", lines.join("\n"))
}

const HAND_COUNT_PLANS: &[(&str, Plan)] = &[
    ("olive canvas apron", Plan::Add),
    ("wooden spoon with a burnt tip", Plan::Add),
    ("stirs clockwise in slow wide circles", Plan::Add),
    ("rolled-up denim sleeves", Plan::Add),
    ("green enamel pot", Plan::Add),
    ("olive apron with a front pocket", Plan::Confirm("olive canvas apron")),
    ("black fitness band on the right wrist", Plan::Add),
    ("scorched wooden spoon", Plan::Confirm("wooden spoon")),
    (
        "stirs clockwise in slow circles, scraping the sides",
        Plan::Revise("stirs clockwise", "stirs clockwise in slow wide circles, scraping the sides of the pot"),
    ),
    ("tastes from the spoon before seasoning", Plan::Add),
    ("short nails", Plan::Add),
    ("hair tied up with a yellow band", Plan::Add),
    ("glass salt jar with a cork lid", Plan::Add),
    ("green pot with enamel handles", Plan::Confirm("green enamel pot")),
];

pub fn hand_count_backend() -> FnBackend {
    FnBackend::new("scripted", |segs| {
        let t = text_projection(segs);
        Ok(if t.contains("Extract distinctive cues about the camera wearer") {
            hand_count_cues(&first_clip(segs, "hc_").unwrap())
        } else if t.contains("You proposed the following REVISE operations") {
            verification_reply(&t)
        } else {
            merge_reply(&t, HAND_COUNT_PLANS)
        })
    })
}

// ---------------------------------------------------------------------------
// 12-instance synthetic manifest covering all seven tasks.

pub fn regimes_manifest() -> Vec<QueryInstance> {
    let maya = vec![
        item("maya_1", "Maya", image("rg_maya_1")),
        item("maya_2", "Maya", image("rg_maya_2")),
    ];
    let bottle_clips = vec![
        item("bottle_1", "water bottle", clip("rg_bottle_1")),
        item("bottle_2", "water bottle", clip("rg_bottle_2")),
    ];
    let bottle_images = vec![
        item("bottle_img_1", "water bottle", image("rg_bottle_img_1")),
        item("bottle_img_2", "water bottle", image("rg_bottle_img_2")),
    ];
    let coffee: Vec<ContextItem> = (1..=3)
        .map(|i| item(&format!("coffee_{i}"), "making pour-over coffee", clip(&format!("rg_coffee_{i}"))))
        .collect();
    let ego: Vec<ContextItem> = (1..=5)
        .map(|i| item(&format!("rg_ego_{i}"), "washing dishes", clip(&format!("rg_ego_{i}"))))
        .collect();
    let q = |n: usize,
             task: Task,
             subject: &str,
             media: MediaSource,
             context: &Vec<ContextItem>,
             gold: Gold|
     -> QueryInstance {
        QueryInstance {
            instance_id: format!("r{n:02}"),
            task,
            owner_id: None,
            subject: subject.into(),
            question: None,
            options: None,
            query_media: media,
            image_size: None,
            context: context.clone(),
            gold,
            subset_tag: None,
        }
    };
    let yes = Gold::YesNo(YesNo::Yes);
    let no = Gold::YesNo(YesNo::No);
    let mut out = vec![
        q(1, Task::PerId, "Maya", image("rg_q01"), &maya, yes),
        q(2, Task::PerId, "Maya", image("rg_q02"), &maya, no),
        q(3, Task::PerRel, "Maya", image("rg_q03"), &maya, Gold::Option(OptionLetter::C)),
        q(4, Task::ObjId, "water bottle", clip("rg_q04"), &bottle_clips, yes),
        q(5, Task::ObjId, "water bottle", clip("rg_q05"), &bottle_clips, no),
        q(
            6,
            Task::ObjDet,
            "water bottle",
            image("rg_q06"),
            &bottle_images,
            Gold::Box(BoundingBox::new(100.0, 80.0, 300.0, 240.0).unwrap()),
        ),
        q(7, Task::BehErr, "making pour-over coffee", clip("rg_q07"), &coffee, yes),
        q(8, Task::BehErr, "making pour-over coffee", clip("rg_q08"), &coffee, no),
        q(9, Task::BehQa, "making pour-over coffee", clip("rg_q09"), &coffee, Gold::Option(OptionLetter::B)),
        q(10, Task::BehQa, "making pour-over coffee", clip("rg_q10"), &coffee, Gold::Option(OptionLetter::D)),
        q(11, Task::EgoId, "washing dishes", clip("rg_q11"), &ego, yes),
        q(12, Task::EgoId, "washing dishes", clip("rg_q12"), &ego, no),
    ];
    out[2].question = Some("What is Maya holding in this image?".into());
    out[2].options = Some(vec!["a phone".into(), "a paper cup".into(), "a green umbrella".into(), "nothing".into()]);
    out[5].image_size = Some(ImageSize { width: 640, height: 480 });
    out[8].question = Some("How does this execution differ from how I usually make pour-over coffee?".into());
    out[8].options = Some(vec![
        "I skip rinsing the filter".into(),
        "I pour the water before the coffee has bloomed".into(),
        "I use a different mug".into(),
        "There is no difference".into(),
    ]);
    out[9].question = Some("Which step did I do in a different order this time?".into());
    out[9].options = Some(vec![
        "Grinding the beans".into(),
        "Heating the water".into(),
        "Placing the filter".into(),
        "Weighing the coffee".into(),
    ]);
    out[10].subset_tag = Some(SubsetTag::General);
    out[11].subset_tag = Some(SubsetTag::BehaviorCentric);
    out
}

fn regimes_respond(segs: &[PromptSegment]) -> Result<String, GatewayError> {
    let Some(qclip) = first_clip(segs, "rg_q") else {
        // description of one context item
        let c = segs
            .iter()
            .find_map(|s| match s {
                PromptSegment::Media { clip_id, .. } => Some(clip_id.clone()),
                _ => None,
            })
            .expect("description prompt shows the item");
        return Ok(format!("Seen in {c}: distinctive features noted for {c}."));
    };
    let manifest = regimes_manifest();
    let q = manifest
        .iter()
        .find(|q| q.query_media.clip_id() == qclip)
        .expect("query clip belongs to an instance");
    // A pure function of the prompt, so each regime lands on different answers.
    let h = u8::from_str_radix(&canonical_hash(segs)[..2], 16).unwrap();
    if h % 9 == 0 {
        return Ok("I cannot tell from these frames.".into());
    }
    let correct = h % 4 != 0;
    let answer = match q.gold {
        Gold::YesNo(g) => {
            let v = if correct { g } else if g == YesNo::Yes { YesNo::No } else { YesNo::Yes };
            v.to_string()
        }
        Gold::Option(g) => {
            let v = if correct { g } else { OptionLetter::ALL[(g.index() + 1) % 4] };
            v.to_string()
        }
        Gold::Box(b) => {
            let shift = if correct { 10.0 } else { 150.0 };
            format!("[{}, {}, {}, {}]", b.x1 + shift, b.y1, b.x2 + shift, b.y2)
        }
    };
    Ok(format!("ANSWER: {answer}"))
}

pub fn regimes_backend() -> FnBackend {
    FnBackend::new("scripted", regimes_respond)
}

// ---------------------------------------------------------------------------
// Report fixture: 614 wearer-identification records per regime.

pub const REPORT_MODEL: &str = "Gemma";
pub const REPORT_YES: usize = 306;
pub const REPORT_NO: usize = 308;
pub const REPORT_BEHAVIOR_CENTRIC: usize = 96;

/// (regime, correct Yes-gold, correct No-gold, invalid No-gold misses).
pub const REPORT_ROWS: [(&str, usize, usize, usize); 6] = [
    ("no-context", 127, 181, 5),
    ("language-ctx:max", 213, 112, 0),
    ("visual-ctx:max", 160, 180, 3),
    ("bank:descriptors-only", 169, 150, 2),
    ("bank:all-evidence", 143, 209, 0),
    ("bank:adaptive", 219, 159, 1),
];

pub fn report_records() -> Vec<(String, Vec<PredictionRecord>)> {
    let n = REPORT_YES + REPORT_NO;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(614);
    let mut golds: Vec<YesNo> = std::iter::repeat(YesNo::Yes)
        .take(REPORT_YES)
        .chain(std::iter::repeat(YesNo::No).take(REPORT_NO))
        .collect();
    golds.shuffle(&mut rng);
    let mut tags: Vec<SubsetTag> = std::iter::repeat(SubsetTag::BehaviorCentric)
        .take(REPORT_BEHAVIOR_CENTRIC)
        .chain(std::iter::repeat(SubsetTag::General).take(n - REPORT_BEHAVIOR_CENTRIC))
        .collect();
    tags.shuffle(&mut rng);

    let mut out = Vec::new();
    for (regime, cy, cn, invalid_misses) in REPORT_ROWS {
        let regime: Regime = regime.parse().unwrap();
        let mut yes_idx: Vec<usize> = (0..n).filter(|i| golds[*i] == YesNo::Yes).collect();
        let mut no_idx: Vec<usize> = (0..n).filter(|i| golds[*i] == YesNo::No).collect();
        yes_idx.shuffle(&mut rng);
        no_idx.shuffle(&mut rng);
        // pred, invalid
        let mut preds = vec![(YesNo::No, false); n];
        for (k, &i) in yes_idx.iter().enumerate() {
            preds[i] = if k < cy { (YesNo::Yes, false) } else { (YesNo::No, false) };
        }
        for (k, &i) in no_idx.iter().enumerate() {
            preds[i] = if k < cn {
                (YesNo::No, false)
            } else if k < cn + invalid_misses {
                // unreadable reply: recorded with the No fallback, scored wrong
                (YesNo::No, true)
            } else {
                (YesNo::Yes, false)
            };
        }
        let calls = |i: usize| match regime {
            Regime::Bank(BankMode::Adaptive) => 1 + i % 2,
            _ => 1,
        };
        let records = (0..n)
            .map(|i| {
                let (pred, invalid) = preds[i];
                PredictionRecord {
                    instance_id: format!("egoid_{:04}", i + 1),
                    task: Task::EgoId,
                    regime,
                    gold: golds[i].to_string(),
                    pred: pred.to_string(),
                    invalid,
                    calls: calls(i),
                    requested: String::new(),
                    decisive: String::new(),
                    model: REPORT_MODEL.into(),
                    subset: tags[i].as_str().into(),
                    raw: if invalid { "unclear".into() } else { format!("ANSWER: {pred}") },
                }
            })
            .collect();
        out.push((regime.to_string().replace(':', "-"), records));
    }
    out
}

/// The golden table, formatted from integer counts without the library's
/// scorer or renderer.
pub fn golden_report() -> String {
    let mut s = String::from("| Model | Regime | PerID | PerRel | ObjID | ObjDet | BehErr | BehQA | EgoID |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for (regime, cy, cn, _) in REPORT_ROWS {
        // macro = (cy/306 + cn/308) / 2 * 100, rounded half-up to 2 decimals,
        // in integer arithmetic: value * 100 = 5000 * (cy*308 + cn*306) / (306*308)
        let num = 5000 * (cy * REPORT_NO + cn * REPORT_YES) as u128 * 2;
        let den = (REPORT_YES * REPORT_NO) as u128 * 2;
        let hundredths = (num + den / 2) / den;
        s.push_str(&format!(
            "| {REPORT_MODEL} | {regime} | -- | -- | -- | -- | -- | -- | {}.{:02} |\n",
            hundredths / 100,
            hundredths % 100
        ));
    }
    s
}

// ---------------------------------------------------------------------------

pub fn pipeline<'a>(backend: &'a dyn ctxbank::gateway::Backend, media: &'a MediaStore, templates: &'a TemplateSet) -> Pipeline<'a> {
    Pipeline::new(backend, media, templates, PipelineConfig::default())
}

fn csv_text(records: &[PredictionRecord]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    ctxbank::eval::write_records_csv(&p, records).unwrap();
    std::fs::read_to_string(p).unwrap()
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s
}

const EGO_RUN: &str = "backend = \"scripted\"\ntranscript = \"fixtures/ego/transcript.txt\"\nmedia_root = \"fixtures/media\"\n";
const REGIMES_RUN: &str = "backend = \"scripted\"\ntranscript = \"fixtures/regimes/transcript.txt\"\nmedia_root = \"fixtures/media\"\njobs = 2\n";

/// Every committed fixture file, keyed by path relative to `fixtures/`.
pub fn generate() -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    let media = media_store();
    let templates = TemplateSet::builtin();

    {
        let dir = tempfile::tempdir().unwrap();
        let mut m = MediaStore::in_memory(dir.path());
        for (c, n) in clips() {
            m.register(c, n);
        }
        m.write_index().unwrap();
        files.insert("media/index.json".into(), std::fs::read_to_string(dir.path().join("index.json")).unwrap());
    }

    // wearer end-to-end
    let rec = RecordingBackend::new(ego_backend());
    let manifest = ego_manifest();
    {
        let p = pipeline(&rec, &media, &templates);
        let (bank, log) = build_bank(&p, EGO_OWNER, &ego_items(), ExtractionPreset::Wearer).unwrap();
        files.insert("ego/golden_bank.json".into(), bank_to_json(&bank));
        files.insert("ego/golden_construction.json".into(), json(&log));
        files.insert("ego/golden_text_view.txt".into(), render_text_view(&bank));
        for mode in [BankMode::Adaptive, BankMode::DescriptorsOnly, BankMode::AllEvidence] {
            for q in &manifest {
                p.run(q, Regime::Bank(mode)).unwrap();
            }
        }
    }
    files.insert("ego/items.json".into(), json(&ego_items()));
    files.insert("ego/manifest.json".into(), json(&manifest));
    files.insert("ego/transcript.txt".into(), rec.transcript().to_text());
    files.insert("ego/run.toml".into(), EGO_RUN.into());

    // hand-countable construction log
    let hc = hand_count_backend();
    {
        let p = pipeline(&hc, &media, &templates);
        let (_, log) = build_bank(&p, "hc_user", &hand_count_items(), ExtractionPreset::Wearer).unwrap();
        files.insert("stats/hand_count.construction.json".into(), json(&log));
    }

    // five prompting regimes
    let rec = RecordingBackend::new(regimes_backend());
    let manifest = regimes_manifest();
    {
        let p = pipeline(&rec, &media, &templates);
        for regime in Regime::BASELINES {
            for q in &manifest {
                p.run(q, regime).unwrap();
            }
        }
    }
    files.insert(
        "regimes/manifest.json".into(),
        format!(
            "{{\n  \"counts\": {},\n  \"instances\": {}}}\n",
            serde_json::to_string(&counts(&manifest)).unwrap(),
            json(&manifest).trim_end().replace('\n', "\n  ")
        ),
    );
    files.insert("regimes/transcript.txt".into(), rec.transcript().to_text());
    files.insert("regimes/run.toml".into(), REGIMES_RUN.into());

    // report
    let mut all = Vec::new();
    for (slug, records) in report_records() {
        files.insert(format!("report/records/{slug}.csv"), csv_text(&records));
        all.extend(records);
    }
    let rendered = render_report(&score_records(&all).unwrap());
    assert_eq!(rendered, golden_report(), "library report disagrees with the integer oracle");
    files.insert("report/golden_report.md".into(), golden_report());
    files
}

fn counts(manifest: &[QueryInstance]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for q in manifest {
        *m.entry(q.task.to_string()).or_default() += 1;
    }
    m
}
