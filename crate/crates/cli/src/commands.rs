use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctxbank::eval::{
    bank_stats, evaluate as run_regimes, load_manifest, query_stats, read_records_csv, render_bank_stats, render_query_stats,
    render_report, score_records, write_records_csv, PredictionRecord,
};
use ctxbank::media::{load_bank, save_bank};
use ctxbank::pipeline::{
    answer_query, build_bank as construct, BankMode, ConstructionLog, ContextItem, ExtractionPreset, Pipeline, QueryOutcome,
    Regime,
};
use serde::Serialize;

use crate::config::{Overrides, Settings};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `bank:adaptive` -> `bank-adaptive`.
fn regime_slug(r: Regime) -> String {
    r.to_string().replace(':', "-")
}

pub fn ingest(o: &Overrides, clips: &Path) -> Result<()> {
    let s = Settings::resolve(o)?;
    let mut store = s.media()?;
    let ingested = store
        .ingest_dir(clips)
        .with_context(|| format!("ingesting {}", clips.display()))?;
    store.write_index()?;
    for c in &ingested {
        println!("{}\t{} frames", c.clip_id, c.frame_count);
    }
    println!("ingested {} clips into {}", ingested.len(), s.media_root.display());
    Ok(())
}

pub fn build_bank(o: &Overrides, owner: &str, preset: ExtractionPreset, items_path: &Path) -> Result<()> {
    let s = Settings::resolve(o)?;
    let items: Vec<ContextItem> = read_json(items_path)?;
    let media = s.media()?;
    let backend = s.backend(&media)?;
    let templates = s.templates()?;
    let p = Pipeline::new(backend.as_ref(), &media, &templates, s.pipeline.clone());
    let (bank, log) = construct(&p, owner, &items, preset)?;

    let bank_path = s.out.join("banks").join(format!("{owner}.json"));
    save_bank(&bank, &bank_path)?;
    write(&s.out.join("logs").join(format!("{owner}.construction.json")), &to_json(&log))?;
    println!(
        "{}: {} entries from {} items ({} candidates) -> {}",
        owner,
        log.final_entries,
        log.items.len(),
        log.total_candidates(),
        bank_path.display()
    );
    Ok(())
}

pub fn query(o: &Overrides, bank_path: &Path, manifest: &Path, instance: &str, mode: BankMode) -> Result<()> {
    let s = Settings::resolve(o)?;
    let bank = load_bank(bank_path)?;
    let manifest = load_manifest(manifest)?;
    let Some(q) = manifest.instances.iter().find(|q| q.instance_id == instance) else {
        bail!("instance `{instance}` is not in the manifest");
    };
    let media = s.media()?;
    let backend = s.backend(&media)?;
    let templates = s.templates()?;
    let p = Pipeline::new(backend.as_ref(), &media, &templates, s.pipeline.clone());
    let outcome = answer_query(&p, &bank, q, mode).with_context(|| format!("instance {instance}"))?;

    let path = s.out.join("traces").join(format!("{instance}.{}.json", mode.as_str()));
    write(&path, &to_json(&outcome))?;
    let pred = outcome.prediction.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
    println!(
        "{instance}\t{pred}{}\tcalls={}\trequested=[{}]",
        if outcome.invalid { " (invalid)" } else { "" },
        outcome.trace.call_count(),
        outcome.trace.requested.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

#[derive(Serialize)]
struct BankIndexEntry<'a> {
    file: String,
    key: &'a str,
}

pub fn evaluate(o: &Overrides, manifest_path: &Path, regimes: &[Regime]) -> Result<()> {
    if regimes.is_empty() {
        bail!("--regimes is empty");
    }
    let s = Settings::resolve(o)?;
    let manifest = load_manifest(manifest_path)?;
    let media = s.media()?;
    let backend = s.backend(&media)?;
    let templates = s.templates()?;
    let p = Pipeline::new(backend.as_ref(), &media, &templates, s.pipeline.clone());
    let run = run_regimes(&p, &manifest.instances, regimes, s.jobs)?;

    create_dir(&s.out)?;
    write_records_csv(&s.out.join("predictions.csv"), &run.records)?;
    for regime in regimes {
        let mut lines = String::new();
        for outcome in run.outcomes.iter().filter(|x| x.regime == *regime) {
            lines.push_str(&serde_json::to_string(outcome).expect("outcome serializes"));
            lines.push('\n');
        }
        write(&s.out.join("traces").join(format!("{}.traces.jsonl", regime_slug(*regime))), &lines)?;
    }
    let banks = p.built_banks();
    let mut index = Vec::new();
    for (i, built) in banks.iter().enumerate() {
        let name = format!("{:02}", i + 1);
        save_bank(&built.bank, &s.out.join("banks").join(format!("{name}.json")))?;
        write(&s.out.join("logs").join(format!("{name}.construction.json")), &to_json(&built.log))?;
        index.push(BankIndexEntry {
            file: format!("{name}.json"),
            key: &built.key,
        });
    }
    if !index.is_empty() {
        write(&s.out.join("banks").join("index.json"), &to_json(&index))?;
    }
    let failures_path = s.out.join("failures.json");
    if run.failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).with_context(|| format!("removing {}", failures_path.display()))?;
        }
    } else {
        write(&failures_path, &to_json(&run.failures))?;
    }

    let table = render_report(&score_records(&run.records)?);
    write(&s.out.join("report.md"), &table)?;
    print!("{table}");
    if !run.failures.is_empty() {
        for f in &run.failures {
            eprintln!("failed: {} [{}]: {}", f.instance_id, f.regime, f.error);
        }
        bail!(
            "{} of {} queries failed; see {}",
            run.failures.len(),
            regimes.len() * manifest.instances.len(),
            failures_path.display()
        );
    }
    Ok(())
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("listing {}", dir.display()))?;
        if entry.file_type().is_file() && entry.file_name().to_string_lossy().ends_with(suffix) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

pub fn report(o: &Overrides, records_dir: &Path) -> Result<()> {
    let s = Settings::resolve(o)?;
    let files = files_with_suffix(records_dir, ".csv")?;
    if files.is_empty() {
        bail!("no prediction CSVs under {}", records_dir.display());
    }
    let mut records: Vec<PredictionRecord> = Vec::new();
    for f in &files {
        records.extend(read_records_csv(f).with_context(|| format!("reading {}", f.display()))?);
    }
    let table = render_report(&score_records(&records)?);
    write(&s.out.join("report.md"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn stats(o: &Overrides, logs_dir: &Path) -> Result<()> {
    let s = Settings::resolve(o)?;
    let mut logs: Vec<ConstructionLog> = Vec::new();
    for f in files_with_suffix(logs_dir, ".construction.json")? {
        logs.push(read_json(&f)?);
    }
    let mut traces = Vec::new();
    for f in files_with_suffix(logs_dir, ".traces.jsonl")? {
        let text = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let outcome: QueryOutcome =
                serde_json::from_str(line).with_context(|| format!("{}:{}", f.display(), i + 1))?;
            if outcome.regime == Regime::Bank(BankMode::Adaptive) {
                traces.push(outcome.trace);
            }
        }
    }
    if logs.is_empty() && traces.is_empty() {
        bail!(
            "no construction logs (*.construction.json) or adaptive traces (*.traces.jsonl) under {}",
            logs_dir.display()
        );
    }
    let mut text = String::new();
    if !logs.is_empty() {
        let b = render_bank_stats(&bank_stats(&logs)?);
        write(&s.out.join("bank_stats.md"), &b)?;
        text.push_str(&b);
    }
    if !traces.is_empty() {
        let q = render_query_stats(&query_stats(&traces)?);
        write(&s.out.join("query_stats.md"), &q)?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&q);
    }
    print!("{text}");
    Ok(())
}
