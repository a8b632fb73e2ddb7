//! `omp-advisor`: build loop corpora, train directive classifiers and ask them
//! for advice on C files.

mod config;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use omp_advisor::cfront::{self, FrontendError};
use omp_advisor::corpus::{self, BuildOptions, CorpusHeader, LoopSnippet};
use omp_advisor::datasets::{self, LabeledSet, Split, Task};
use omp_advisor::eval::{self, EvalReport, RecordPrediction};
use omp_advisor::explain::{self, ExplainError};
use omp_advisor::models::checkpoint::vocab_path_for;
use omp_advisor::models::{
    bow_featurize, curves_csv, train_logistic, train_transformer, Checkpoint, CheckpointMeta, ClassifierModel,
    EpochMetrics, ModelError, ModelKind, TrainConfig,
};
use omp_advisor::repr::{render_tree, represent, ReprError, ReprKind};
use omp_advisor::synth::{self, SynthConfig};
use omp_advisor::vocab::{Vocabulary, DEFAULT_MAX_LEN};
use omp_advisor::SourceRecord;
use serde::Serialize;

use crate::config::FileConfig;

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(name = "omp-advisor", version, about = "Predict OpenMP parallel-for directives and clauses for C loops")]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic C source tree with known loop labels.
    Synth(SynthArgs),
    /// Extract, deduplicate and summarize the loops of C source trees.
    BuildCorpus(BuildCorpusArgs),
    /// Build a balanced train/validation/test split for one task.
    Split(SplitArgs),
    /// Train a classifier on a split and write its checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on one split, optionally next to external predictions.
    Evaluate(EvaluateArgs),
    /// Score a checkpoint on a labeled source directory or corpus file.
    Benchmark(BenchmarkArgs),
    /// Predict a label and probability for every loop of a C file.
    Predict(PredictArgs),
    /// Explain the prediction for one loop of a C file.
    Explain(ExplainArgs),
    /// Print the token representation of every loop of a C file.
    Represent(RepresentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    loops: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Share of loops drawn from the order-only twin templates.
    #[arg(long)]
    twin_fraction: Option<f64>,
    #[arg(long)]
    loops_per_file: Option<usize>,
    /// Give the two classes disjoint index-variable names.
    #[arg(long)]
    naming_signal: bool,
}

#[derive(Args)]
struct BuildCorpusArgs {
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    splits_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    repr: Option<ReprKind>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    splits_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoints_dir: Option<PathBuf>,
    /// Checkpoint path; defaults to `<checkpoints_dir>/<task>-<model>-<repr>.ckpt`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    d_head_hidden: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    splits_dir: Option<PathBuf>,
    #[arg(long)]
    reports_dir: Option<PathBuf>,
    /// CSV of `record_id,label` predictions from another tool.
    #[arg(long)]
    external: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of C sources or a corpus file.
    labeled: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    file: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    file: PathBuf,
    /// 1-based index of the loop to explain, in source order.
    #[arg(long = "loop", default_value_t = 1)]
    loop_index: usize,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Also write the report as one JSON line to this file.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RepresentArgs {
    #[arg(long)]
    kind: ReprKind,
    file: PathBuf,
    /// Print the indented AST instead of the token sequence.
    #[arg(long)]
    tree: bool,
}

/// Maps an error to the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(ModelError::NonFiniteLoss { .. }) = cause.downcast_ref::<ModelError>() {
            return EXIT_NUMERIC;
        }
        if cause.downcast_ref::<FrontendError>().is_some() || cause.downcast_ref::<ReprError>().is_some() {
            return EXIT_PARSE;
        }
        if let Some(ExplainError::Repr(_)) = cause.downcast_ref::<ExplainError>() {
            return EXIT_PARSE;
        }
    }
    EXIT_INPUT
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(&config, a),
        Command::BuildCorpus(a) => cmd_build_corpus(&config, a),
        Command::Split(a) => cmd_split(&config, a),
        Command::Train(a) => cmd_train(&config, a),
        Command::Evaluate(a) => cmd_evaluate(&config, a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(&config, a),
        Command::Represent(a) => cmd_represent(a),
    }
}

fn cmd_synth(config: &FileConfig, a: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_loops: a.loops.unwrap_or(d.n_loops),
        seed: config.pick_or(a.seed, "seed", d.seed)?,
        twin_fraction: a.twin_fraction.unwrap_or(d.twin_fraction),
        loops_per_file: a.loops_per_file.unwrap_or(d.loops_per_file),
        naming_signal: a.naming_signal,
    };
    let paths = synth::write_tree(&a.out, &cfg).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} files to {}", paths.len(), a.out.display());
    Ok(())
}

fn cmd_build_corpus(config: &FileConfig, a: BuildCorpusArgs) -> Result<()> {
    let out = config.path(a.out, "corpus", "corpus.jsonl");
    // Skipped files and constructs are logged as warnings by the builder.
    let build = corpus::build_corpus(&a.dirs, &BuildOptions::default())?;
    let records = corpus::deduplicate(build.records);
    if records.is_empty() {
        bail!("no records found in {} scanned file(s)", build.files_scanned);
    }
    let header = CorpusHeader::new(a.dirs.iter().map(|d| d.display().to_string()).collect());
    create_parent(&out)?;
    corpus::write_corpus(&out, &header, &records)?;
    println!("files scanned: {}  skipped: {}", build.files_scanned, build.skipped.len());
    print!("{}", corpus::render_stats(&corpus::corpus_stats(&records)));
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn split_ratios(config: &FileConfig) -> Result<[f64; 3]> {
    let d = datasets::DEFAULT_RATIOS;
    Ok([
        config.pick_or(None, "train_ratio", d[0])?,
        config.pick_or(None, "valid_ratio", d[1])?,
        config.pick_or(None, "test_ratio", d[2])?,
    ])
}

fn cmd_split(config: &FileConfig, a: SplitArgs) -> Result<()> {
    let task = config.pick_or(a.task, "task", Task::Directive)?;
    let seed = config.pick_or(a.seed, "seed", 17)?;
    let corpus_path = config.path(a.corpus, "corpus", "corpus.jsonl");
    let dir = config.path(a.splits_dir, "splits_dir", "splits");
    let (_, records) = corpus::read_corpus(&corpus_path)?;
    let items = datasets::make_dataset(&records, task);
    let sets = datasets::split_and_balance(&items, task, split_ratios(config)?, seed)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = datasets::write_manifest(&dir, &sets)?;
    println!("task {task}: wrote {}", path.display());
    print!("{}", datasets::render_split_counts(&sets));
    Ok(())
}

/// A split resolved against the corpus and represented.
struct SplitData {
    tokens: Vec<Vec<String>>,
    labels: Vec<u8>,
}

fn record_index(records: &[SourceRecord]) -> HashMap<&str, &SourceRecord> {
    records.iter().map(|r| (r.id.as_str(), r)).collect()
}

fn lookup<'r>(index: &HashMap<&str, &'r SourceRecord>, set: &LabeledSet) -> Result<Vec<&'r SourceRecord>> {
    set.items
        .iter()
        .map(|item| {
            index.get(item.record_id.as_str()).copied().ok_or_else(|| {
                anyhow!("{} split references record {} that is not in the corpus", set.split, item.record_id)
            })
        })
        .collect()
}

fn represent_split(index: &HashMap<&str, &SourceRecord>, set: &LabeledSet, kind: ReprKind) -> Result<SplitData> {
    let records = lookup(index, set)?;
    let mut data = SplitData { tokens: Vec::new(), labels: Vec::new() };
    for (rec, item) in records.iter().zip(&set.items) {
        match represent(&rec.code_text, kind) {
            Ok(r) => {
                data.tokens.push(r.tokens);
                data.labels.push(item.label);
            }
            Err(e) => log::warn!("record {} skipped: {e}", rec.id),
        }
    }
    Ok(data)
}

fn train_config(config: &FileConfig, a: &TrainArgs, model: ModelKind) -> Result<TrainConfig> {
    let d = match model {
        ModelKind::Bow => TrainConfig::bow_default(),
        ModelKind::Transformer => TrainConfig::default(),
    };
    let cfg = TrainConfig {
        learning_rate: config.pick_or(a.learning_rate, "learning_rate", d.learning_rate)?,
        epochs: config.pick_or(a.epochs, "epochs", d.epochs)?,
        batch_size: config.pick_or(a.batch_size, "batch_size", d.batch_size)?,
        seed: config.pick_or(a.seed, "seed", d.seed)?,
        dropout: config.pick_or(a.dropout, "dropout", d.dropout)?,
        beta1: config.pick_or(None, "beta1", d.beta1)?,
        beta2: config.pick_or(None, "beta2", d.beta2)?,
        eps: config.pick_or(None, "eps", d.eps)?,
        weight_decay: config.pick_or(a.weight_decay, "weight_decay", d.weight_decay)?,
        d_model: config.pick_or(a.d_model, "d_model", d.d_model)?,
        n_heads: config.pick_or(a.n_heads, "n_heads", d.n_heads)?,
        n_layers: config.pick_or(a.n_layers, "n_layers", d.n_layers)?,
        d_ff: config.pick_or(a.d_ff, "d_ff", d.d_ff)?,
        d_head_hidden: config.pick_or(a.d_head_hidden, "d_head_hidden", d.d_head_hidden)?,
        threshold: config.pick_or(a.threshold, "threshold", d.threshold)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_curves(curves: &[EpochMetrics]) {
    println!("{:>6}{:>14}{:>14}{:>12}", "epoch", "train_loss", "valid_loss", "valid_acc");
    for c in curves {
        println!("{:>6}{:>14.6}{:>14.6}{:>12.4}", c.epoch, c.train_loss, c.valid_loss, c.valid_acc);
    }
}

fn cmd_train(config: &FileConfig, a: TrainArgs) -> Result<()> {
    let model_kind = config.pick_or(a.model, "model", ModelKind::Transformer)?;
    let repr = config.pick_or(a.repr, "repr", ReprKind::Text)?;
    let task = config.pick_or(a.task, "task", Task::Directive)?;
    let min_freq = config.pick_or(a.min_freq, "min_freq", 1)?;
    let max_len = config.pick_or(a.max_len, "max_len", DEFAULT_MAX_LEN)?;
    let cfg = train_config(config, &a, model_kind)?;
    let corpus_path = config.path(a.corpus.clone(), "corpus", "corpus.jsonl");
    let splits_dir = config.path(a.splits_dir.clone(), "splits_dir", "splits");
    let out = match a.out.clone() {
        Some(p) => p,
        None => config
            .path(a.checkpoints_dir.clone(), "checkpoints_dir", "checkpoints")
            .join(format!("{task}-{}-{repr}.ckpt", model_kind.as_str())),
    };

    let (_, records) = corpus::read_corpus(&corpus_path)?;
    let index = record_index(&records);
    let sets = datasets::read_manifest(&splits_dir, task)?;
    let train = represent_split(&index, &sets[Split::Train as usize], repr)?;
    let valid = represent_split(&index, &sets[Split::Validation as usize], repr)?;
    let vocab = Vocabulary::build(&train.tokens, min_freq, max_len)?;
    let oov = vocab.oov_report(&valid.tokens);
    println!(
        "task {task}  model {}  repr {repr}  train {}  valid {}  vocabulary {}  valid oov types {}",
        model_kind.as_str(),
        train.labels.len(),
        valid.labels.len(),
        vocab.len(),
        oov.oov_types
    );

    let (best, last, best_epoch, curves) = match model_kind {
        ModelKind::Bow => {
            let featurize = |d: &SplitData| -> Vec<_> {
                d.tokens.iter().zip(&d.labels).map(|(t, &y)| (bow_featurize(t, &vocab), y)).collect()
            };
            let o = train_logistic(&featurize(&train), &featurize(&valid), vocab.len(), &cfg)?;
            (ClassifierModel::Logistic(o.best_model), ClassifierModel::Logistic(o.final_model), o.best_epoch, o.curves)
        }
        ModelKind::Transformer => {
            let encode = |d: &SplitData| -> Vec<_> {
                d.tokens.iter().zip(&d.labels).map(|(t, &y)| vocab.encode(t, y)).collect()
            };
            let o = train_transformer(&encode(&train), &encode(&valid), vocab.len(), vocab.max_len(), &cfg)?;
            (
                ClassifierModel::Transformer(o.best_model),
                ClassifierModel::Transformer(o.final_model),
                o.best_epoch,
                o.curves,
            )
        }
    };
    print_curves(&curves);

    create_parent(&out)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    let final_path = out.with_file_name(format!("{stem}.final.ckpt"));
    let curves_path = out.with_file_name(format!("{stem}.curves.csv"));
    let meta = CheckpointMeta { task, repr_kind: repr, config: cfg.clone(), best_epoch };
    Checkpoint::save(&out, best, meta.clone(), &vocab)?;
    Checkpoint::save(&final_path, last, meta, &vocab)?;
    fs::write(&curves_path, curves_csv(&curves)).with_context(|| format!("writing {}", curves_path.display()))?;

    if let Some(c) = curves.last() {
        println!("final valid accuracy: {:.4}", c.valid_acc);
    }
    println!("best epoch: {best_epoch}");
    println!("checkpoint: {}", out.display());
    println!("final-epoch checkpoint: {}", final_path.display());
    println!("vocabulary: {}", vocab_path_for(&out).display());
    println!("curves: {}", curves_path.display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Vocabulary)> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn model_name(ck: &Checkpoint) -> String {
    format!("{}/{}", ck.header.model_kind.as_str(), ck.header.repr_kind)
}

#[derive(Serialize)]
struct ReportLine<'a> {
    name: &'a str,
    task: Task,
    split: Option<Split>,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn cmd_evaluate(config: &FileConfig, a: EvaluateArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint(&a.checkpoint)?;
    let task = ck.header.task;
    let corpus_path = config.path(a.corpus, "corpus", "corpus.jsonl");
    let splits_dir = config.path(a.splits_dir, "splits_dir", "splits");
    let reports_dir = config.path(a.reports_dir, "reports_dir", "reports");
    let external = a.external.as_deref().map(eval::import_external_predictions).transpose()?;

    let (_, records) = corpus::read_corpus(&corpus_path)?;
    let index = record_index(&records);
    let sets = datasets::read_manifest(&splits_dir, task)?;
    let set = &sets[a.split as usize];
    if set.items.is_empty() {
        bail!("{} split of task {task} is empty", a.split);
    }
    let selected = lookup(&index, set)?;
    let predictions = eval::predict_records(&ck, &vocab, &selected)?;

    let (mut preds, mut labels, mut lengths, mut skipped) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for ((p, item), rec) in predictions.iter().zip(&set.items).zip(&selected) {
        match p {
            RecordPrediction::Predicted { label, .. } => {
                preds.push(*label);
                labels.push(item.label);
                lengths.push(rec.loop_line_count);
            }
            RecordPrediction::Unrepresentable(reason) => {
                log::warn!("record {} skipped: {reason}", rec.id);
                skipped += 1;
            }
        }
    }
    let mut report = eval::evaluate_predictions(&preds, &labels, &lengths)?;
    report.skipped = skipped;
    let name = model_name(&ck);
    let mut rows = vec![(name.clone(), report)];

    if let Some(ext) = &external {
        for w in &ext.warnings {
            eprintln!("warning: {w}");
        }
        let ids: Vec<&str> = set.items.iter().map(|i| i.record_id.as_str()).collect();
        let missing = ext.missing(&ids);
        if !missing.is_empty() {
            eprintln!("warning: external predictions lack {} of {} ids; scored as negative", missing.len(), ids.len());
        }
        let all_labels: Vec<u8> = set.items.iter().map(|i| i.label).collect();
        let all_lengths: Vec<u32> = selected.iter().map(|r| r.loop_line_count).collect();
        let ext_report = eval::evaluate_predictions(&ext.align(&ids), &all_labels, &all_lengths)?;
        rows.push(("external".to_string(), ext_report));
    }

    println!("task {task}  split {}  instances {}", a.split, set.items.len());
    println!("{}", EvalReport::table_header());
    for (n, r) in &rows {
        println!("{}", r.table_row(n));
    }
    for (n, r) in &rows {
        println!("\nerror by snippet length ({n})");
        print!("{}", r.render_length_table());
        if r.undefined.any() {
            println!("undefined metrics reported as 0: {:?}", r.undefined);
        }
    }

    fs::create_dir_all(&reports_dir).with_context(|| format!("creating {}", reports_dir.display()))?;
    let stem = a.checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let report_path = reports_dir.join(format!("{stem}.{}.jsonl", a.split));
    let mut out = Vec::new();
    for (n, r) in &rows {
        serde_json::to_writer(&mut out, &ReportLine { name: n, task, split: Some(a.split), report: r })?;
        out.push(b'\n');
    }
    fs::write(&report_path, out).with_context(|| format!("writing {}", report_path.display()))?;
    println!("\nreport: {}", report_path.display());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint(&a.checkpoint)?;
    if !a.labeled.exists() {
        bail!("{} does not exist", a.labeled.display());
    }
    let report = eval::benchmark_run(&ck, &vocab, &a.labeled)?;
    println!("{}", EvalReport::table_header());
    println!("{}", report.table_row(&model_name(&ck)));
    println!("\nerror by snippet length");
    print!("{}", report.render_length_table());
    println!("skipped inputs: {}", report.skipped);
    let line = ReportLine { name: &model_name(&ck), task: ck.header.task, split: None, report: &report };
    println!("{}", serde_json::to_string(&line)?);
    Ok(())
}

/// Reads and parses a C file, printing diagnostics for skipped constructs.
fn file_loops(path: &Path) -> Result<Vec<LoopSnippet>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let source = String::from_utf8_lossy(&bytes);
    let unit = cfront::parse_source(&source).with_context(|| format!("parsing {}", path.display()))?;
    for e in &unit.skipped {
        eprintln!("warning: {}:{e} (construct skipped)", path.display());
    }
    Ok(corpus::loop_snippets(&source, &unit))
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint(&a.checkpoint)?;
    let loops = file_loops(&a.file)?;
    if loops.is_empty() {
        eprintln!("no for loops found in {}", a.file.display());
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for lp in &loops {
        let tokens =
            represent(&lp.code_text, ck.header.repr_kind).with_context(|| format!("loop at line {}", lp.line))?.tokens;
        let pred = ck.model.predict(&tokens, &vocab, ck.header.config.threshold)?;
        writeln!(out, "line {}\tlabel {}\tp {:.4}", lp.line, pred.label, pred.probability)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ExplainLine<'a> {
    file: String,
    line: u32,
    predicted_p: f64,
    n_samples: usize,
    r_squared: f64,
    rows: &'a [explain::ExplanationRow],
}

fn cmd_explain(config: &FileConfig, a: ExplainArgs) -> Result<()> {
    let (ck, vocab) = load_checkpoint(&a.checkpoint)?;
    let seed = config.pick_or(a.seed, "seed", 17)?;
    let loops = file_loops(&a.file)?;
    let Some(lp) = a.loop_index.checked_sub(1).and_then(|i| loops.get(i)) else {
        bail!("{} has {} loop(s); --loop {} is out of range", a.file.display(), loops.len(), a.loop_index);
    };
    let e = explain::explain(&ck.model, &vocab, &lp.code_text, ck.header.repr_kind, a.samples, seed)?;
    let rows = explain::render_explanation(&e, a.top_k);
    println!("{} loop at line {}", a.file.display(), lp.line);
    print!("{}", explain::render_text(&e, &rows));
    if let Some(path) = &a.json {
        let line = ExplainLine {
            file: a.file.display().to_string(),
            line: lp.line,
            predicted_p: e.predicted_p,
            n_samples: e.n_samples,
            r_squared: e.r_squared,
            rows: &rows,
        };
        create_parent(path)?;
        fs::write(path, format!("{}\n", serde_json::to_string(&line)?))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_represent(a: RepresentArgs) -> Result<()> {
    for lp in file_loops(&a.file)? {
        println!("# line {}", lp.line);
        if a.tree {
            let (map, _, root) = omp_advisor::repr::canonicalize(&lp.code_text)?;
            let root = match a.kind {
                ReprKind::RAst | ReprKind::RText => map.rename_ast(&root),
                ReprKind::Ast | ReprKind::Text => root,
            };
            print!("{}", render_tree(&root));
        } else {
            println!("{}", represent(&lp.code_text, a.kind)?.joined());
        }
    }
    Ok(())
}
