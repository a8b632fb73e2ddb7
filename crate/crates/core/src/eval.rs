//! Classification metrics, error rate by snippet length, external
//! prediction import, and end-to-end benchmark runs.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, length_bin, CorpusError, SourceRecord, LENGTH_BIN_LABELS};
use crate::datasets::make_dataset;
use crate::models::{Checkpoint, ModelError};
use crate::repr::represent;
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("{path}:{line}: malformed prediction line: {message}")]
    MalformedLine { path: String, line: usize, message: String },
    #[error("benchmark contains no evaluable records")]
    EmptyBenchmark,
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(predictions: &[u8], labels: &[u8]) -> Result<Self, EvalError> {
        if predictions.len() != labels.len() {
            return Err(EvalError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
        }
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == 1, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Metrics whose denominator was zero; each is reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedMetrics {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub accuracy: bool,
}

impl UndefinedMetrics {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1 || self.accuracy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub label: String,
    pub count: usize,
    pub errors: usize,
    /// Errors in this bin over all evaluated instances.
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub undefined: UndefinedMetrics,
    /// Width-10 bins: 1-10, 11-20, 21-30, 31-40, >40 lines.
    pub length_bins: Vec<LengthBin>,
    /// Corpus-statistics bins: <=10, 11-50, 51-100, >100 lines.
    pub corpus_length_bins: Vec<LengthBin>,
    /// Inputs that could not be lexed, parsed or represented.
    pub skipped: usize,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let c = confusion;
        let (precision, p_undef) = ratio(c.tp, c.tp + c.fp);
        let (recall, r_undef) = ratio(c.tp, c.tp + c.fn_);
        let (accuracy, a_undef) = ratio(c.tp + c.tn, c.total());
        let f1_undef = p_undef || r_undef || precision + recall == 0.0;
        let f1 = if f1_undef { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        EvalReport {
            confusion,
            precision,
            recall,
            f1,
            accuracy,
            undefined: UndefinedMetrics { precision: p_undef, recall: r_undef, f1: f1_undef, accuracy: a_undef },
            length_bins: Vec::new(),
            corpus_length_bins: Vec::new(),
            skipped: 0,
        }
    }

    /// One row in the model-comparison table layout.
    pub fn table_row(&self, name: &str) -> String {
        format!("{:<24}{:>10.3}{:>10.3}{:>10.3}{:>10.3}", name, self.precision, self.recall, self.f1, self.accuracy)
    }

    pub fn table_header() -> String {
        format!("{:<24}{:>10}{:>10}{:>10}{:>10}", "Model", "Precision", "Recall", "F1", "Accuracy")
    }

    pub fn render_length_table(&self) -> String {
        let mut out = format!("{:<14}{:>8}{:>8}{:>12}\n", "length", "count", "errors", "error_rate");
        for b in &self.length_bins {
            out.push_str(&format!("{:<14}{:>8}{:>8}{:>12.4}\n", b.label, b.count, b.errors, b.error_rate));
        }
        out
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn metrics(predictions: &[u8], labels: &[u8]) -> Result<EvalReport, EvalError> {
    Ok(EvalReport::from_confusion(Confusion::from_pairs(predictions, labels)?))
}

pub const ERROR_BIN_LABELS: [&str; 5] = ["1-10", "11-20", "21-30", "31-40", ">40"];

pub fn error_bin(lines: u32) -> usize {
    (lines.saturating_sub(1) / 10).min(4) as usize
}

fn binned(
    predictions: &[u8],
    labels: &[u8],
    lengths: &[u32],
    labels_out: &[&str],
    bin: fn(u32) -> usize,
) -> Vec<LengthBin> {
    let total = predictions.len();
    let mut counts = vec![(0usize, 0usize); labels_out.len()];
    for ((&p, &y), &len) in predictions.iter().zip(labels).zip(lengths) {
        let slot = &mut counts[bin(len)];
        slot.0 += 1;
        slot.1 += usize::from(p != y);
    }
    labels_out
        .iter()
        .zip(counts)
        .map(|(label, (count, errors))| LengthBin {
            label: label.to_string(),
            count,
            errors,
            error_rate: ratio(errors, total).0,
        })
        .collect()
}

/// Error rate per snippet-length bin, each relative to the whole set.
pub fn error_by_length(predictions: &[u8], labels: &[u8], lengths: &[u32]) -> Result<Vec<LengthBin>, EvalError> {
    if predictions.len() != labels.len() || predictions.len() != lengths.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
    }
    Ok(binned(predictions, labels, lengths, &ERROR_BIN_LABELS, error_bin))
}

/// Full report: metrics plus both length tables.
pub fn evaluate_predictions(predictions: &[u8], labels: &[u8], lengths: &[u32]) -> Result<EvalReport, EvalError> {
    let mut report = metrics(predictions, labels)?;
    report.length_bins = error_by_length(predictions, labels, lengths)?;
    report.corpus_length_bins = binned(predictions, labels, lengths, &LENGTH_BIN_LABELS, length_bin);
    Ok(report)
}

/// Parsed external predictions plus warnings about duplicate ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalPredictions {
    pub labels: HashMap<String, u8>,
    pub warnings: Vec<String>,
}

impl ExternalPredictions {
    /// Predictions aligned to `ids`; ids absent from the file count as 0.
    pub fn align(&self, ids: &[&str]) -> Vec<u8> {
        ids.iter().map(|id| self.labels.get(*id).copied().unwrap_or(0)).collect()
    }

    pub fn missing<'a>(&self, ids: &[&'a str]) -> Vec<&'a str> {
        ids.iter().copied().filter(|id| !self.labels.contains_key(*id)).collect()
    }
}

/// Parses `record_id,label` lines. A first line of `record_id,label` is
/// treated as a header; duplicate ids keep the last value.
pub fn parse_external_predictions(text: &str, source_name: &str) -> Result<ExternalPredictions, EvalError> {
    let mut out = ExternalPredictions::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("record_id,label")) {
            continue;
        }
        let bad = |message: &str| EvalError::MalformedLine {
            path: source_name.to_string(),
            line: i + 1,
            message: message.to_string(),
        };
        let (id, label) = line.split_once(',').ok_or_else(|| bad("expected record_id,label"))?;
        let (id, label) = (id.trim(), label.trim());
        if id.is_empty() {
            return Err(bad("empty record id"));
        }
        let label = match label {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad("label must be 0 or 1")),
        };
        if out.labels.insert(id.to_string(), label).is_some() {
            let msg = format!("{source_name}:{}: duplicate record id {id}; last occurrence wins", i + 1);
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    Ok(out)
}

pub fn import_external_predictions(path: &Path) -> Result<ExternalPredictions, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    parse_external_predictions(&text, &path.display().to_string())
}

/// Outcome of predicting one record end to end.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordPrediction {
    Predicted { probability: f64, label: u8 },
    Unrepresentable(String),
}

/// Represents, encodes and scores each record in parallel, keeping order.
pub fn predict_records(
    ck: &Checkpoint,
    vocab: &Vocabulary,
    records: &[&SourceRecord],
) -> Result<Vec<RecordPrediction>, EvalError> {
    let threshold = ck.header.config.threshold;
    let kind = ck.header.repr_kind;
    records
        .par_iter()
        .map(|r| match represent(&r.code_text, kind) {
            Err(e) => Ok(RecordPrediction::Unrepresentable(e.to_string())),
            Ok(rep) => {
                let pred = ck.model.predict(&rep.tokens, vocab, threshold)?;
                Ok(RecordPrediction::Predicted { probability: pred.probability, label: pred.label })
            }
        })
        .collect()
}

/// Scores a checkpoint on labeled records for the checkpoint's task.
/// `skipped_inputs` counts inputs already rejected upstream (for example
/// files that failed to parse).
pub fn benchmark_records(
    ck: &Checkpoint,
    vocab: &Vocabulary,
    records: &[SourceRecord],
    skipped_inputs: usize,
) -> Result<EvalReport, EvalError> {
    let items = make_dataset(records, ck.header.task);
    let by_id: HashMap<&str, &SourceRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let selected: Vec<&SourceRecord> = items.iter().map(|i| by_id[i.record_id.as_str()]).collect();
    let predictions = predict_records(ck, vocab, &selected)?;
    let (mut preds, mut labels, mut lengths) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = skipped_inputs;
    for ((pred, item), rec) in predictions.iter().zip(&items).zip(&selected) {
        match pred {
            RecordPrediction::Predicted { label, .. } => {
                preds.push(*label);
                labels.push(item.label);
                lengths.push(rec.loop_line_count);
            }
            RecordPrediction::Unrepresentable(_) => skipped += 1,
        }
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let mut report = evaluate_predictions(&preds, &labels, &lengths)?;
    report.skipped = skipped;
    Ok(report)
}

/// Runs a benchmark given either a corpus file or a directory of C sources.
pub fn benchmark_run(ck: &Checkpoint, vocab: &Vocabulary, labeled: &Path) -> Result<EvalReport, EvalError> {
    if labeled.is_dir() {
        let build = corpus::build_corpus(&[labeled.to_path_buf()], &corpus::BuildOptions::default())?;
        let records = corpus::deduplicate(build.records);
        benchmark_records(ck, vocab, &records, build.skipped.len())
    } else {
        let (_, records) = corpus::read_corpus(labeled)?;
        benchmark_records(ck, vocab, &records, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<u8>, Vec<u8>) {
        let mut p = Vec::new();
        let mut y = Vec::new();
        for (n, pv, yv) in [(tp, 1, 1), (fp, 1, 0), (fn_, 0, 1), (tn, 0, 0)] {
            p.extend(std::iter::repeat_n(pv, n));
            y.extend(std::iter::repeat_n(yv, n));
        }
        (p, y)
    }

    #[test]
    fn hand_computed_metrics() {
        let (p, y) = pairs(8, 2, 2, 8);
        let r = metrics(&p, &y).unwrap();
        for v in [r.precision, r.recall, r.f1, r.accuracy] {
            assert!((v - 0.8).abs() < 1e-12);
        }
        let (p, y) = pairs(5, 5, 0, 0);
        let r = metrics(&p, &y).unwrap();
        assert_eq!((r.precision, r.recall, r.accuracy), (0.5, 1.0, 0.5));
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let r = metrics(&[0, 0], &[0, 0]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.undefined.precision && r.undefined.recall && r.undefined.f1 && !r.undefined.accuracy);
        assert!(metrics(&[], &[]).unwrap().undefined.accuracy);
        assert!(metrics(&[1], &[]).is_err());
    }

    #[test]
    fn length_bins() {
        let preds = vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 0];
        let labels = vec![1; 10];
        let lengths = vec![5, 12, 25, 33, 41, 50, 2, 3, 4, 5];
        let bins = error_by_length(&preds, &labels, &lengths).unwrap();
        assert!((bins[0].error_rate - 0.1).abs() < 1e-12);
        assert!(bins[1..].iter().all(|b| b.error_rate == 0.0));
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), [5, 1, 1, 1, 2]);
        assert_eq!((error_bin(10), error_bin(11), error_bin(40), error_bin(41)), (0, 1, 3, 4));
    }

    #[test]
    fn external_import_rules() {
        let text = "record_id,label\na,1\nb,0\na,0\n";
        let ext = parse_external_predictions(text, "x.csv").unwrap();
        assert_eq!(ext.labels["a"], 0);
        assert_eq!(ext.warnings.len(), 1);
        assert_eq!(ext.align(&["a", "b", "c"]), [0, 0, 0]);
        let err = parse_external_predictions("a,1\nb;2\n", "x.csv").unwrap_err();
        assert!(matches!(err, EvalError::MalformedLine { line: 2, .. }));
    }
}
