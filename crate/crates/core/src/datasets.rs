//! Task datasets and balanced train/validation/test splits.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Directive,
    Private,
    Reduction,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Directive, Task::Private, Task::Reduction];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Directive => "directive",
            Task::Private => "private",
            Task::Reduction => "reduction",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task {s:?} (expected directive, private or reduction)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (expected train, validation or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub record_id: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSet {
    pub task: Task,
    pub split: Split,
    pub items: Vec<LabeledItem>,
}

impl LabeledSet {
    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.items.len() - self.positives()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("degenerate dataset: {positives} positive and {negatives} negative items")]
    Degenerate { positives: usize, negatives: usize },
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    InvalidRatios([f64; 3]),
    #[error("record id {0} appears more than once")]
    DuplicateId(String),
    #[error("manifest line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Every record, labeled 1 when it carries a directive.
pub fn make_directive_dataset(records: &[SourceRecord]) -> Vec<LabeledItem> {
    records.iter().map(|r| LabeledItem { record_id: r.id.clone(), label: u8::from(r.directive.is_some()) }).collect()
}

/// Records with a directive, labeled by whether the clause is present.
pub fn make_clause_dataset(records: &[SourceRecord], clause: Task) -> Vec<LabeledItem> {
    records
        .iter()
        .filter_map(|r| {
            let d = r.directive.as_ref()?;
            let label = match clause {
                Task::Private => d.has_private(),
                Task::Reduction => d.has_reduction(),
                Task::Directive => true,
            };
            Some(LabeledItem { record_id: r.id.clone(), label: u8::from(label) })
        })
        .collect()
}

pub fn make_dataset(records: &[SourceRecord], task: Task) -> Vec<LabeledItem> {
    match task {
        Task::Directive => make_directive_dataset(records),
        clause => make_clause_dataset(records, clause),
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Downsamples the majority class, then splits so that every split holds
/// positives and negatives differing by at most one.
pub fn split_and_balance(
    items: &[LabeledItem],
    task: Task,
    ratios: [f64; 3],
    seed: u64,
) -> Result<[LabeledSet; 3], DatasetError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidRatios(ratios));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = items.iter().find(|i| !seen.insert(i.record_id.as_str())) {
        return Err(DatasetError::DuplicateId(dup.record_id.clone()));
    }
    let mut pos: Vec<&LabeledItem> = items.iter().filter(|i| i.label == 1).collect();
    let mut neg: Vec<&LabeledItem> = items.iter().filter(|i| i.label != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(DatasetError::Degenerate { positives: pos.len(), negatives: neg.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let m = pos.len().min(neg.len());
    pos.truncate(m);
    neg.truncate(m);

    let total = 2 * m;
    let n_train = ((ratios[0] * total as f64).round() as usize).min(total);
    let n_val = ((ratios[1] * total as f64).round() as usize).min(total - n_train);
    let pos_train = n_train.div_ceil(2).min(m);
    let pos_val = (n_val / 2).min(m - pos_train);
    let pos_counts = [pos_train, pos_val, m - pos_train - pos_val];
    let neg_train = n_train - pos_train;
    let neg_val = n_val - pos_val;
    let neg_counts = [neg_train, neg_val, m - neg_train - neg_val];

    let (mut p_off, mut n_off) = (0, 0);
    let sets = Split::ALL.map(|split| {
        let k = split as usize;
        let mut chunk: Vec<LabeledItem> = pos[p_off..p_off + pos_counts[k]]
            .iter()
            .chain(&neg[n_off..n_off + neg_counts[k]])
            .map(|&i| i.clone())
            .collect();
        p_off += pos_counts[k];
        n_off += neg_counts[k];
        chunk.shuffle(&mut rng);
        LabeledSet { task, split, items: chunk }
    });
    Ok(sets)
}

pub fn manifest_string(sets: &[LabeledSet]) -> String {
    let mut out = String::new();
    for set in sets {
        for item in &set.items {
            out.push_str(&format!("{}\t{}\t{}\n", item.record_id, item.label, set.split));
        }
    }
    out
}

pub fn parse_manifest(text: &str, task: Task) -> Result<[LabeledSet; 3], DatasetError> {
    let mut sets = Split::ALL.map(|split| LabeledSet { task, split, items: Vec::new() });
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DatasetError::Format { line: i + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, label, split] = fields[..] else {
            return Err(bad("expected record_id<TAB>label<TAB>split".into()));
        };
        let label = match label {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("bad label {other:?}"))),
        };
        let split: Split = split.parse().map_err(bad)?;
        sets[split as usize].items.push(LabeledItem { record_id: id.to_string(), label });
    }
    Ok(sets)
}

pub fn manifest_path(dir: &Path, task: Task) -> std::path::PathBuf {
    dir.join(format!("{task}.tsv"))
}

pub fn write_manifest(dir: &Path, sets: &[LabeledSet; 3]) -> Result<std::path::PathBuf, DatasetError> {
    let path = manifest_path(dir, sets[0].task);
    fs::write(&path, manifest_string(sets))
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

pub fn read_manifest(dir: &Path, task: Task) -> Result<[LabeledSet; 3], DatasetError> {
    let path = manifest_path(dir, task);
    let text =
        fs::read_to_string(&path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_manifest(&text, task)
}

/// Split sizes in the dataset-size table layout.
pub fn render_split_counts(sets: &[LabeledSet; 3]) -> String {
    let mut out = format!("{:<12}{:>8}{:>10}{:>10}\n", "split", "total", "positive", "negative");
    for set in sets {
        out.push_str(&format!(
            "{:<12}{:>8}{:>10}{:>10}\n",
            set.split,
            set.items.len(),
            set.positives(),
            set.negatives()
        ));
    }
    out
}
