//! Synthetic C source trees with known loop labels.
//!
//! Positive loops have independent iterations and carry a
//! `#pragma omp parallel for`. Negative loops either perform I/O or carry a
//! dependence between iterations. Part of the data comes in "twin" pairs: a
//! dependence loop `d[i] = d[i-1] op s[i]` and an independent loop
//! `d[i] = s[i-1] op d[i]` with exactly the same tokens, so only token order
//! separates them.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const DEST: &[&str] = &["a", "x", "out", "dst", "res", "y", "acc", "buf", "tgt", "c"];
const SRC: &[&str] = &["b", "in", "src", "u", "v", "w", "p", "q", "data", "vals"];
const INDEX: &[&str] = &["i", "j", "k", "idx"];
const BOUND: &[&str] = &["n", "N", "len", "size", "count"];
const OPS: &[&str] = &["+", "-", "*"];
const CONSTS: &[&str] = &["2", "3", "0.5", "1.5", "4"];
/// Index names used for positives and negatives when the naming signal is on.
const SIGNAL_POS_INDEX: &[&str] = &["pi", "pj"];
const SIGNAL_NEG_INDEX: &[&str] = &["ni", "nj"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_loops: usize,
    pub seed: u64,
    /// Share of loops drawn from the twin templates.
    pub twin_fraction: f64,
    /// Loops per generated file.
    pub loops_per_file: usize,
    /// Use disjoint index-variable names for the two classes.
    pub naming_signal: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_loops: 2000, seed: 17, twin_fraction: 0.35, loops_per_file: 25, naming_signal: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Elementwise,
    Scaled,
    TwoStatements,
    IndependentTwin,
    IoPrint,
    DependentTwin,
}

impl Pattern {
    pub fn is_positive(self) -> bool {
        matches!(self, Pattern::Elementwise | Pattern::Scaled | Pattern::TwoStatements | Pattern::IndependentTwin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLoop {
    pub code: String,
    pub pattern: Pattern,
}

impl SynthLoop {
    pub fn is_positive(&self) -> bool {
        self.pattern.is_positive()
    }
}

struct Names<'a> {
    i: &'a str,
    n: &'a str,
    d: &'a str,
    d2: &'a str,
    s1: &'a str,
    s2: &'a str,
    op: &'a str,
    c: &'a str,
}

fn pick_names<'a>(rng: &mut ChaCha8Rng, index_pool: &'a [&'a str]) -> Names<'a> {
    let d = *DEST.choose(rng).expect("pool");
    let d2 = loop {
        let x = *DEST.choose(rng).expect("pool");
        if x != d {
            break x;
        }
    };
    let s1 = *SRC.choose(rng).expect("pool");
    let s2 = *SRC.choose(rng).expect("pool");
    Names {
        i: index_pool.choose(rng).expect("pool"),
        n: BOUND.choose(rng).expect("pool"),
        d,
        d2,
        s1,
        s2,
        op: OPS.choose(rng).expect("pool"),
        c: CONSTS.choose(rng).expect("pool"),
    }
}

fn render(pattern: Pattern, v: &Names) -> String {
    let Names { i, n, d, d2, s1, s2, op, c } = v;
    match pattern {
        Pattern::Elementwise => format!("for ({i} = 0; {i} < {n}; {i}++)\n    {d}[{i}] = {s1}[{i}] {op} {s2}[{i}];"),
        Pattern::Scaled => format!("for ({i} = 0; {i} < {n}; {i}++)\n    {d}[{i}] = {s1}[{i}] {op} {c};"),
        Pattern::TwoStatements => format!(
            "for ({i} = 0; {i} < {n}; {i}++) {{\n    {d}[{i}] = {s1}[{i}] {op} {s2}[{i}];\n    {d2}[{i}] = {s1}[{i}] * {c};\n}}"
        ),
        Pattern::IndependentTwin => format!("for ({i} = 1; {i} < {n}; {i}++)\n    {d}[{i}] = {s1}[{i} - 1] {op} {d}[{i}];"),
        Pattern::DependentTwin => format!("for ({i} = 1; {i} < {n}; {i}++)\n    {d}[{i}] = {d}[{i} - 1] {op} {s1}[{i}];"),
        Pattern::IoPrint => format!(
            "for ({i} = 0; {i} < {n}; {i}++) {{\n    {d}[{i}] = {s1}[{i}] {op} {s2}[{i}];\n    fprintf(stderr, \"%f\\n\", {d}[{i}]);\n}}"
        ),
    }
}

/// Generates `n_loops` distinct loops, half positive and half negative.
pub fn generate_loops(config: &SynthConfig) -> Vec<SynthLoop> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(config.n_loops);
    let n_twins = (config.twin_fraction.clamp(0.0, 1.0) * config.n_loops as f64).round() as usize;
    let mut attempts = 0usize;
    while out.len() < config.n_loops && attempts < config.n_loops * 200 {
        attempts += 1;
        let k = out.len();
        let positive = k % 2 == 0;
        let twin = k < n_twins;
        let pattern = match (positive, twin) {
            (true, true) => Pattern::IndependentTwin,
            (false, true) => Pattern::DependentTwin,
            (false, false) => Pattern::IoPrint,
            (true, false) => {
                *[Pattern::Elementwise, Pattern::Scaled, Pattern::TwoStatements].choose(&mut rng).expect("pool")
            }
        };
        let pool = match (config.naming_signal, positive) {
            (false, _) => INDEX,
            (true, true) => SIGNAL_POS_INDEX,
            (true, false) => SIGNAL_NEG_INDEX,
        };
        let code = render(pattern, &pick_names(&mut rng, pool));
        let key: String = code.split_whitespace().collect();
        if seen.insert(key) {
            out.push(SynthLoop { code, pattern });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFile {
    pub name: String,
    pub source: String,
}

fn indent(code: &str) -> String {
    code.lines().map(|l| format!("    {l}\n")).collect()
}

/// Packs loops into C files, each holding at least one annotated loop.
pub fn generate_files(config: &SynthConfig) -> Vec<SynthFile> {
    let loops = generate_loops(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let per_file = config.loops_per_file.max(2);
    let mut files = Vec::new();
    for (f, chunk) in loops.chunks(per_file).enumerate() {
        let mut chunk: Vec<&SynthLoop> = chunk.iter().collect();
        if !chunk.iter().any(|l| l.is_positive()) {
            // Guaranteed by alternation except for a trailing single loop.
            continue;
        }
        let first_pos = chunk.iter().position(|l| l.is_positive()).expect("checked");
        chunk.swap(0, first_pos);
        let mut body = String::new();
        let mut decls: Vec<&str> = Vec::new();
        for l in &chunk {
            for name in INDEX.iter().chain(SIGNAL_POS_INDEX).chain(SIGNAL_NEG_INDEX) {
                if !decls.contains(name) && l.code.contains(&format!("for ({name} =")) {
                    decls.push(name);
                }
            }
        }
        decls.sort_unstable();
        body.push_str(&format!("    int {};\n", decls.join(", ")));
        for l in chunk {
            if l.is_positive() {
                body.push_str("#pragma omp parallel for\n");
            }
            body.push_str(&indent(&l.code));
        }
        let tag: u32 = rng.random();
        files.push(SynthFile {
            name: format!("kernel_{f:03}.c"),
            source: format!(
                "#include <stdio.h>\n\n/* synthetic kernel {tag:08x} */\nvoid kernel_{f}(int n, int N, int len, int size, int count,\n    double *a, double *x, double *out, double *dst, double *res, double *y,\n    double *acc, double *buf, double *tgt, double *c, double *b, double *in,\n    double *src, double *u, double *v, double *w, double *p, double *q,\n    double *data, double *vals)\n{{\n{body}}}\n"
            ),
        });
    }
    files
}

/// Writes the generated files into `dir` and returns their paths.
pub fn write_tree(dir: &Path, config: &SynthConfig) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    generate_files(config)
        .into_iter()
        .map(|f| {
            let path = dir.join(&f.name);
            fs::write(&path, f.source)?;
            Ok(path)
        })
        .collect()
}
