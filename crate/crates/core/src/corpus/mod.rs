//! Corpus construction: walk C source trees, turn `for` loops into records,
//! deduplicate them and summarize the result.

pub mod directive;

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::cfront::{self, extract_loops, AstNode, FrontendError, SyntaxError, TokenKind};
use crate::repr::ast_linearize;

pub use directive::{
    parse_directive, DirectiveError, DirectiveInfo, ReductionClause, ReductionOp, Schedule, ScheduleKind,
};

pub const FORMAT_VERSION: u32 = 1;
pub const NEGATIVE_RULE: &str = "omp-file-only";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corpus file is empty (missing header line)")]
    MissingHeader,
    #[error("unsupported corpus format version {0}")]
    UnsupportedVersion(u32),
}

impl CorpusError {
    fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CorpusError::Io { path: path.as_ref().display().to_string(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub path: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub code_text: String,
    pub ast_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pragma_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directive: Option<DirectiveInfo>,
    pub origin: Origin,
    pub loop_line_count: u32,
}

impl SourceRecord {
    pub fn is_positive(&self) -> bool {
        self.directive.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub format_version: u32,
    pub created_from: Vec<String>,
    pub negative_rule: String,
}

impl CorpusHeader {
    pub fn new(created_from: Vec<String>) -> Self {
        CorpusHeader { format_version: FORMAT_VERSION, created_from, negative_rule: NEGATIVE_RULE.to_string() }
    }
}

/// Upper bounds (inclusive) of the snippet-length bins; the last bin is open.
pub const LENGTH_BIN_EDGES: [u32; 3] = [10, 50, 100];
pub const LENGTH_BIN_LABELS: [&str; 4] = ["<=10", "11-50", "51-100", ">100"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_snippets: u64,
    pub with_directive: u64,
    /// Directives with `schedule(static)` or no schedule clause (static is
    /// the implementation default).
    pub schedule_static: u64,
    pub schedule_dynamic: u64,
    pub reduction_count: u64,
    pub private_count: u64,
    pub length_histogram: [u64; 4],
}

pub fn length_bin(lines: u32) -> usize {
    LENGTH_BIN_EDGES.iter().position(|&edge| lines <= edge).unwrap_or(LENGTH_BIN_EDGES.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusBuild {
    pub records: Vec<SourceRecord>,
    /// Files that could not be read, lexed or parsed at all.
    pub skipped: Vec<SkippedFile>,
    /// Files where some top-level constructs were skipped.
    pub partial: Vec<(String, Vec<SyntaxError>)>,
    pub files_scanned: usize,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// File extensions treated as C sources.
    pub extensions: Vec<String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { extensions: vec!["c".to_string()] }
    }
}

/// Stable content hash over the token lexemes of a snippet, so layout and
/// comments do not matter but identifier names and literal contents do.
pub fn record_id(code_text: &str) -> String {
    let mut hasher = Sha256::new();
    match cfront::lex(code_text) {
        Ok(tokens) => {
            for tok in tokens.iter().filter(|t| t.kind != TokenKind::PragmaLine) {
                hasher.update(tok.lexeme.as_bytes());
                hasher.update([0x1f]);
            }
        }
        Err(_) => {
            let compact: String = code_text.chars().filter(|c| !c.is_whitespace()).collect();
            hasher.update(compact.as_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

fn slice<'s>(source: &'s str, node: &AstNode) -> &'s str {
    source.get(node.span.start..node.span.end).unwrap_or("")
}

/// A `for` loop cut out of a source file together with its helpers.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSnippet {
    pub line: u32,
    pub loop_line_count: u32,
    /// Loop source followed by the source of each helper function.
    pub code_text: String,
    pub ast_text: String,
    pub pragma: Option<String>,
    pub omp_context: bool,
    pub empty_body: bool,
}

/// Every extracted loop of a parsed unit, in source order.
pub fn loop_snippets(source: &str, unit: &cfront::ParsedUnit) -> Vec<LoopSnippet> {
    extract_loops(&unit.root, &unit.attachments)
        .into_iter()
        .map(|lp| {
            let mut code_text = slice(source, lp.loop_node).to_string();
            let mut ast_tokens = ast_linearize(lp.loop_node);
            for helper in &lp.helpers {
                code_text.push_str("\n\n");
                code_text.push_str(slice(source, helper));
                ast_tokens.extend(ast_linearize(helper));
            }
            LoopSnippet {
                line: lp.loop_node.span.line,
                loop_line_count: lp.loop_node.span.line_count().max(1),
                code_text,
                ast_text: ast_tokens.join(" "),
                pragma: lp.pragma,
                omp_context: lp.omp_context,
                empty_body: lp.loop_node.has_empty_body(),
            }
        })
        .collect()
}

/// Extracts the records contributed by one source file.
pub fn records_from_source(path: &str, source: &str) -> Result<(Vec<SourceRecord>, Vec<SyntaxError>), FrontendError> {
    let unit = cfront::parse_source(source)?;
    let file_has_omp = unit.attachments.iter().any(|a| a.is_omp());
    if !file_has_omp {
        return Ok((Vec::new(), unit.skipped));
    }
    let mut records = Vec::new();
    for snippet in loop_snippets(source, &unit) {
        if snippet.empty_body || snippet.code_text.trim().is_empty() {
            continue;
        }
        let directive = match &snippet.pragma {
            Some(p) => match parse_directive(p) {
                Ok(d) if d.is_parallel_for => Some(d),
                _ => continue,
            },
            None if snippet.omp_context => continue,
            None => None,
        };
        records.push(SourceRecord {
            id: record_id(&snippet.code_text),
            pragma_raw: directive.as_ref().and(snippet.pragma),
            directive,
            origin: Origin { path: path.to_string(), line: snippet.line },
            loop_line_count: snippet.loop_line_count,
            code_text: snippet.code_text,
            ast_text: snippet.ast_text,
        });
    }
    Ok((records, unit.skipped))
}

fn has_extension(path: &Path, extensions: &[String]) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| extensions.iter().any(|x| x == e))
}

/// All matching files under `roots`, sorted lexicographically by path.
pub fn collect_source_files(roots: &[PathBuf], options: &BuildOptions) -> Result<Vec<PathBuf>, CorpusError> {
    let mut files = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(CorpusError::io(root, io::Error::new(io::ErrorKind::NotFound, "no such file or directory")));
        }
        for entry in WalkDir::new(root).follow_links(false) {
            let entry = entry.map_err(|e| {
                let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone());
                CorpusError::io(path, e.into())
            })?;
            if entry.file_type().is_file() && has_extension(entry.path(), &options.extensions) {
                files.push(entry.into_path());
            }
        }
    }
    files.sort_by(|a, b| a.to_string_lossy().cmp(&b.to_string_lossy()));
    files.dedup();
    Ok(files)
}

enum FileOutcome {
    Records(Vec<SourceRecord>, Vec<SyntaxError>),
    Skipped(String),
}

fn process_file(path: &Path) -> FileOutcome {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) => return FileOutcome::Skipped(format!("io error: {e}")),
    };
    let source = String::from_utf8_lossy(&bytes);
    match records_from_source(&path.display().to_string(), &source) {
        Ok((records, skipped)) => FileOutcome::Records(records, skipped),
        Err(e) => FileOutcome::Skipped(e.to_string()),
    }
}

/// Builds records from every C file under `roots`. Files are processed in
/// parallel; results are merged in path order.
pub fn build_corpus(roots: &[PathBuf], options: &BuildOptions) -> Result<CorpusBuild, CorpusError> {
    let files = collect_source_files(roots, options)?;
    let outcomes: Vec<FileOutcome> = files.par_iter().map(|p| process_file(p)).collect();
    let mut build = CorpusBuild { files_scanned: files.len(), ..Default::default() };
    for (path, outcome) in files.iter().zip(outcomes) {
        let path = path.display().to_string();
        match outcome {
            FileOutcome::Records(records, errors) => {
                if !errors.is_empty() {
                    log::warn!("{path}: skipped {} unparseable construct(s); first: {}", errors.len(), errors[0]);
                    build.partial.push((path, errors));
                }
                build.records.extend(records);
            }
            FileOutcome::Skipped(reason) => {
                log::warn!("{path}: skipped: {reason}");
                build.skipped.push(SkippedFile { path, reason });
            }
        }
    }
    Ok(build)
}

/// Keeps the first record per id in `(path, line, id)` order.
pub fn deduplicate(mut records: Vec<SourceRecord>) -> Vec<SourceRecord> {
    records.sort_by(|a, b| a.origin.cmp(&b.origin).then_with(|| a.id.cmp(&b.id)));
    let mut seen = HashSet::new();
    records.retain(|r| seen.insert(r.id.clone()));
    records
}

pub fn corpus_stats(records: &[SourceRecord]) -> CorpusStats {
    let mut stats = CorpusStats { total_snippets: records.len() as u64, ..Default::default() };
    for r in records {
        stats.length_histogram[length_bin(r.loop_line_count)] += 1;
        let Some(d) = &r.directive else { continue };
        stats.with_directive += 1;
        match d.schedule.map(|s| s.kind) {
            None | Some(ScheduleKind::Static) => stats.schedule_static += 1,
            Some(ScheduleKind::Dynamic) => stats.schedule_dynamic += 1,
            Some(_) => {}
        }
        stats.reduction_count += u64::from(d.has_reduction());
        stats.private_count += u64::from(d.has_private());
    }
    stats
}

/// Human-readable summary in the layout of the directive and length tables.
pub fn render_stats(stats: &CorpusStats) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<28}{:>10}\n", "Total snippets", stats.total_snippets));
    out.push_str(&format!("{:<28}{:>10}\n", "With OpenMP directive", stats.with_directive));
    out.push_str(&format!("{:<28}{:>10}\n", "schedule static", stats.schedule_static));
    out.push_str(&format!("{:<28}{:>10}\n", "schedule dynamic", stats.schedule_dynamic));
    out.push_str(&format!("{:<28}{:>10}\n", "reduction", stats.reduction_count));
    out.push_str(&format!("{:<28}{:>10}\n", "private", stats.private_count));
    out.push('\n');
    out.push_str(&format!("{:<28}{:>10}\n", "Snippet length (lines)", "count"));
    for (label, count) in LENGTH_BIN_LABELS.iter().zip(stats.length_histogram) {
        out.push_str(&format!("{label:<28}{count:>10}\n"));
    }
    out
}

pub fn write_corpus_to<W: Write>(mut w: W, header: &CorpusHeader, records: &[SourceRecord]) -> io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_corpus(path: &Path, header: &CorpusHeader, records: &[SourceRecord]) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_corpus_to(BufWriter::new(file), header, records).map_err(|e| CorpusError::io(path, e))
}

pub fn read_corpus_from<R: BufRead>(r: R) -> Result<(CorpusHeader, Vec<SourceRecord>), CorpusError> {
    let mut lines = r.lines().enumerate();
    let header_line = loop {
        match lines.next() {
            None => return Err(CorpusError::MissingHeader),
            Some((i, line)) => {
                let line = line.map_err(|e| CorpusError::Format { line: i + 1, message: e.to_string() })?;
                if !line.trim().is_empty() {
                    break (i, line);
                }
            }
        }
    };
    let header: CorpusHeader = serde_json::from_str(&header_line.1)
        .map_err(|e| CorpusError::Format { line: header_line.0 + 1, message: format!("bad header: {e}") })?;
    if header.format_version != FORMAT_VERSION {
        return Err(CorpusError::UnsupportedVersion(header.format_version));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| CorpusError::Format { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SourceRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Format { line: i + 1, message: e.to_string() })?;
        if record.directive.is_some() != record.pragma_raw.is_some() {
            return Err(CorpusError::Format {
                line: i + 1,
                message: "directive and pragma_raw must appear together".into(),
            });
        }
        records.push(record);
    }
    Ok((header, records))
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<SourceRecord>), CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_corpus_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1_FIRST: &str = "void kernel(int N, double *A, double *B) {\n\
        #pragma omp parallel for\n\
        for (i = 0; i <= N; i++)\n    B[i] = A[i] + 1;\n\
        #pragma omp parallel for\n\
        for (i = 0; i <= N; i++)\n    B[i] = B[i] * 2;\n}\n";

    #[test]
    fn annotated_file_yields_positives() {
        let (records, errors) = records_from_source("t.c", TABLE1_FIRST).unwrap();
        assert!(errors.is_empty());
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(SourceRecord::is_positive));
        assert_eq!(records[0].origin.line, 3);
        assert_eq!(records[0].loop_line_count, 2);
        assert_eq!(records[0].code_text, "for (i = 0; i <= N; i++)\n    B[i] = A[i] + 1;");
    }

    #[test]
    fn pragma_free_file_is_excluded() {
        let (records, _) = records_from_source("t.c", "void f() { for (i = 0; i < n; i++) a[i] = 0; }").unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn empty_loop_is_excluded() {
        let src = "void f() {\n#pragma omp parallel for\nfor(;;){}\n}";
        assert!(records_from_source("t.c", src).unwrap().0.is_empty());
    }

    #[test]
    fn negatives_from_omp_file() {
        let src = "void f() {\n#pragma omp parallel for\nfor (i = 0; i < n; i++) a[i] = 0;\n\
                   for (i = 1; i < n; i++) a[i] = a[i-1] + 1;\n}";
        let (records, _) = records_from_source("t.c", src).unwrap();
        assert_eq!(records.iter().map(SourceRecord::is_positive).collect::<Vec<_>>(), [true, false]);
    }

    #[test]
    fn id_ignores_layout_but_not_names() {
        assert_eq!(record_id("for (i=0;i<n;i++) a[i]=0;"), record_id("for (i = 0; i < n; i++)\n  a[i] = 0; /* c */"));
        assert_ne!(record_id("for (i=0;i<n;i++) a[i]=0;"), record_id("for (k=0;k<n;k++) a[k]=0;"));
    }

    #[test]
    fn stats_bins() {
        let mk = |n| SourceRecord {
            id: String::new(),
            code_text: "x;".into(),
            ast_text: String::new(),
            pragma_raw: None,
            directive: None,
            origin: Origin { path: "p".into(), line: 1 },
            loop_line_count: n,
        };
        assert_eq!(corpus_stats(&[mk(5), mk(20), mk(120)]).length_histogram, [1, 1, 0, 1]);
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
        assert_eq!(length_bin(10), 0);
        assert_eq!(length_bin(11), 1);
        assert_eq!(length_bin(100), 2);
        assert_eq!(length_bin(101), 3);
    }

    #[test]
    fn round_trip() {
        let (records, _) = records_from_source("t.c", TABLE1_FIRST).unwrap();
        let header = CorpusHeader::new(vec!["root".into()]);
        let mut buf = Vec::new();
        write_corpus_to(&mut buf, &header, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"negative_rule\":\"omp-file-only\""));
        let (h2, r2) = read_corpus_from(&buf[..]).unwrap();
        assert_eq!(h2, header);
        assert_eq!(r2, records);
    }
}
