//! Benchmark manifest loading with strict per-field validation.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde_json::Value;

use crate::pipeline::{AnswerKind, QueryInstance, Task};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is not JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance {instance_id}: {path}: {reason}")]
    Schema {
        instance_id: String,
        path: String,
        reason: String,
    },
}

/// Loaded instances, in file order, and the optional per-task count header.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub instances: Vec<QueryInstance>,
    pub counts: Option<BTreeMap<Task, usize>>,
}

impl Manifest {
    pub fn counts_by_task(&self) -> BTreeMap<Task, usize> {
        let mut out = BTreeMap::new();
        for q in &self.instances {
            *out.entry(q.task).or_default() += 1;
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manifest(&text)
}

struct Checker<'a> {
    id: String,
    base: String,
    v: &'a Value,
}

impl Checker<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> ManifestError {
        let path = match (self.base.is_empty(), field.is_empty()) {
            (_, true) => self.base.clone(),
            (true, false) => field.to_string(),
            (false, false) => format!("{}.{field}", self.base),
        };
        ManifestError::Schema {
            instance_id: self.id.clone(),
            path,
            reason: reason.into(),
        }
    }

    fn field(&self, name: &str) -> Option<&Value> {
        self.v.get(name).filter(|v| !v.is_null())
    }

    fn nonempty_str(&self, name: &str) -> Result<&str, ManifestError> {
        match self.field(name) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
            Some(Value::String(_)) => Err(self.err(name, "must not be empty")),
            Some(_) => Err(self.err(name, "must be a string")),
            None => Err(self.err(name, "is required")),
        }
    }

    fn media(&self, name: &str) -> Result<(), ManifestError> {
        let Some(m) = self.field(name) else {
            return Err(self.err(name, "is required"));
        };
        let sub = Checker {
            id: self.id.clone(),
            base: if self.base.is_empty() {
                name.to_string()
            } else {
                format!("{}.{name}", self.base)
            },
            v: m,
        };
        sub.nonempty_str("clip_id")?;
        match sub.nonempty_str("kind")? {
            "clip" => Ok(()),
            "frame" => match sub.field("frame_index") {
                Some(v) if v.as_u64().is_some_and(|n| n <= u64::from(u32::MAX)) => Ok(()),
                _ => Err(sub.err("frame_index", "must be a non-negative integer")),
            },
            other => Err(sub.err("kind", format!("must be `clip` or `frame`, got `{other}`"))),
        }
    }
}

fn check_instance(v: &Value, index: usize) -> Result<Task, ManifestError> {
    let id = v
        .get("instance_id")
        .and_then(Value::as_str)
        .map_or_else(|| format!("#{index}"), str::to_string);
    let c = Checker {
        id,
        base: String::new(),
        v,
    };
    if !v.is_object() {
        return Err(c.err("", "instance must be an object"));
    }
    c.nonempty_str("instance_id")?;
    let task: Task = c.nonempty_str("task")?.parse().map_err(|e: String| c.err("task", e))?;
    c.nonempty_str("subject")?;
    c.media("query_media")?;

    let context = match c.field("context") {
        Some(Value::Array(items)) if !items.is_empty() => items,
        Some(Value::Array(_)) => return Err(c.err("context", "needs at least one item")),
        _ => return Err(c.err("context", "must be an array")),
    };
    let mut seen = HashSet::new();
    for (i, item) in context.iter().enumerate() {
        let ic = Checker {
            id: c.id.clone(),
            base: format!("context[{i}]"),
            v: item,
        };
        let item_id = ic.nonempty_str("item_id")?;
        if !seen.insert(item_id.to_string()) {
            return Err(ic.err("item_id", format!("duplicate item id `{item_id}`")));
        }
        ic.nonempty_str("declaration")?;
        ic.media("media")?;
    }

    let gold = c.field("gold").ok_or_else(|| c.err("gold", "is required"))?;
    match task.answer_kind() {
        AnswerKind::Binary => {
            if !matches!(gold.as_str(), Some("Yes" | "No")) {
                return Err(c.err("gold", "must be \"Yes\" or \"No\""));
            }
        }
        AnswerKind::Mcq => {
            c.nonempty_str("question")?;
            match c.field("options") {
                Some(Value::Array(o)) if o.len() == 4 && o.iter().all(|x| x.as_str().is_some_and(|s| !s.trim().is_empty())) => {}
                Some(Value::Array(o)) if o.len() != 4 => {
                    return Err(c.err("options", format!("needs exactly 4 options, found {}", o.len())))
                }
                _ => return Err(c.err("options", "must be an array of 4 nonempty strings")),
            }
            if !matches!(gold.as_str(), Some("A" | "B" | "C" | "D")) {
                return Err(c.err("gold", "must be one of A, B, C, D"));
            }
        }
        AnswerKind::Box => {
            let n = |k: &str| gold.get(k).and_then(Value::as_f64).filter(|x| x.is_finite() && *x >= 0.0);
            match (n("x1"), n("y1"), n("x2"), n("y2")) {
                (Some(x1), Some(y1), Some(x2), Some(y2)) if x1 < x2 && y1 < y2 => {}
                (Some(_), Some(_), Some(_), Some(_)) => return Err(c.err("gold", "box needs x1 < x2 and y1 < y2")),
                _ => return Err(c.err("gold", "must be a box {x1, y1, x2, y2} with non-negative coordinates")),
            }
            let size = c.field("image_size").ok_or_else(|| c.err("image_size", "is required for ObjDet"))?;
            for k in ["width", "height"] {
                if !size.get(k).and_then(Value::as_u64).is_some_and(|n| n >= 1 && n <= u64::from(u32::MAX)) {
                    return Err(c.err(&format!("image_size.{k}"), "must be a positive integer"));
                }
            }
        }
    }
    if task != Task::PerRel && task != Task::BehQa && c.field("options").is_some() {
        return Err(c.err("options", format!("{task} instances take no options")));
    }
    if task == Task::EgoId {
        match c.field("subset_tag").and_then(Value::as_str) {
            Some("general" | "behavior-centric") => {}
            _ => return Err(c.err("subset_tag", "EgoID needs `general` or `behavior-centric`")),
        }
    }
    Ok(task)
}

/// Parses either a bare array of instances or
/// `{"counts": {"PerID": 2, ...}, "instances": [...]}`.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let root: Value = serde_json::from_str(text)?;
    let header_err = |path: &str, reason: &str| ManifestError::Schema {
        instance_id: "-".into(),
        path: path.into(),
        reason: reason.into(),
    };
    let (list, counts_value) = match &root {
        Value::Array(list) => (list, None),
        Value::Object(map) => match map.get("instances") {
            Some(Value::Array(list)) => (list, map.get("counts")),
            _ => return Err(header_err("instances", "must be an array")),
        },
        _ => return Err(header_err("", "manifest must be an array or an object")),
    };

    let mut ids = HashSet::new();
    let mut instances = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        check_instance(v, i)?;
        let q: QueryInstance = serde_json::from_value(v.clone()).map_err(|e| ManifestError::Schema {
            instance_id: v["instance_id"].as_str().unwrap_or("?").to_string(),
            path: String::new(),
            reason: e.to_string(),
        })?;
        if !ids.insert(q.instance_id.clone()) {
            return Err(ManifestError::Schema {
                instance_id: q.instance_id,
                path: "instance_id".into(),
                reason: "duplicate instance id".into(),
            });
        }
        instances.push(q);
    }

    let mut manifest = Manifest {
        instances,
        counts: None,
    };
    if let Some(cv) = counts_value {
        let Value::Object(map) = cv else {
            return Err(header_err("counts", "must be an object of task -> count"));
        };
        let mut declared = BTreeMap::new();
        for (k, v) in map {
            let task: Task = k.parse().map_err(|e: String| header_err(&format!("counts.{k}"), &e))?;
            let n = v
                .as_u64()
                .ok_or_else(|| header_err(&format!("counts.{k}"), "must be a non-negative integer"))?;
            declared.insert(task, n as usize);
        }
        let actual = manifest.counts_by_task();
        for task in Task::ALL {
            let want = declared.get(&task).copied().unwrap_or(0);
            let got = actual.get(&task).copied().unwrap_or(0);
            if want != got {
                return Err(header_err(
                    &format!("counts.{task}"),
                    &format!("header declares {want} instances, manifest has {got}"),
                ));
            }
        }
        manifest.counts = Some(declared);
    }
    Ok(manifest)
}
