//! Whole-token vocabulary with reserved PAD/UNK/CLS ids and fixed-length
//! encoding.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const RESERVED: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];
pub const DEFAULT_MAX_LEN: usize = 110;
const FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty training set")]
    EmptyTrainingSet,
    #[error("max_len must be at least 2 (got {0})")]
    InvalidMaxLen(usize),
    #[error("min_freq must be at least 1")]
    InvalidMinFreq,
    #[error("vocabulary file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInstance {
    pub ids: Vec<u32>,
    pub true_length: usize,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OovReport {
    pub oov_types: usize,
    pub avg_length: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct FileHeader {
    version: u32,
    min_freq: usize,
    max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_freq: usize,
    max_len: usize,
}

impl Vocabulary {
    /// Counts token frequencies over the training sequences and assigns ids
    /// by descending frequency, then lexicographic order.
    pub fn build<S, T>(train_sequences: &[S], min_freq: usize, max_len: usize) -> Result<Self, VocabError>
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        if min_freq == 0 {
            return Err(VocabError::InvalidMinFreq);
        }
        if max_len < 2 {
            return Err(VocabError::InvalidMaxLen(max_len));
        }
        if train_sequences.iter().all(|s| s.as_ref().is_empty()) {
            return Err(VocabError::EmptyTrainingSet);
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for seq in train_sequences {
            for tok in seq.as_ref() {
                *freq.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, usize)> =
            freq.into_iter().filter(|&(t, n)| n >= min_freq && !RESERVED.contains(&t)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED.iter().copied().chain(entries.into_iter().map(|(t, _)| t)).map(str::to_string);
        Ok(Self::from_tokens(tokens.collect(), min_freq, max_len))
    }

    fn from_tokens(tokens: Vec<String>, min_freq: usize, max_len: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index, min_freq, max_len }
    }

    /// Number of ids including the reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied().filter(|&id| id as usize >= RESERVED.len())
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// `CLS` followed by the token ids, truncated to `max_len` and padded.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T], label: u8) -> EncodedInstance {
        let mut ids = Vec::with_capacity(self.max_len);
        ids.push(CLS);
        ids.extend(tokens.iter().take(self.max_len - 1).map(|t| self.id_or_unk(t.as_ref())));
        let true_length = ids.len();
        ids.resize(self.max_len, PAD);
        EncodedInstance { ids, true_length, label }
    }

    /// Token strings of the non-reserved ids in `ids[..true_length]`.
    pub fn decode(&self, encoded: &EncodedInstance) -> Vec<String> {
        encoded.ids[..encoded.true_length]
            .iter()
            .filter(|&&id| id != CLS && id != PAD)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]).to_string())
            .collect()
    }

    /// Distinct out-of-vocabulary tokens and mean sequence length.
    pub fn oov_report<S, T>(&self, sequences: &[S]) -> OovReport
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        let mut oov = BTreeSet::new();
        let mut total = 0usize;
        for seq in sequences {
            let seq = seq.as_ref();
            total += seq.len();
            oov.extend(seq.iter().map(AsRef::as_ref).filter(|t| self.id(t).is_none()));
        }
        let avg_length = if sequences.is_empty() { 0.0 } else { total as f64 / sequences.len() as f64 };
        OovReport { oov_types: oov.len(), avg_length }
    }

    pub fn to_file_string(&self) -> String {
        let header = FileHeader { version: FILE_VERSION, min_freq: self.min_freq, max_len: self.max_len };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for (id, tok) in self.tokens.iter().enumerate() {
            out.push_str(&escape(tok));
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines();
        let header: FileHeader = serde_json::from_str(lines.next().unwrap_or_default())
            .map_err(|e| VocabError::Format { line: 1, message: e.to_string() })?;
        if header.version != FILE_VERSION {
            return Err(VocabError::Format { line: 1, message: format!("unsupported version {}", header.version) });
        }
        if header.max_len < 2 {
            return Err(VocabError::InvalidMaxLen(header.max_len));
        }
        let mut tokens = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let bad = |message: String| VocabError::Format { line: lineno, message };
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad("expected token<TAB>id".into()))?;
            let id: usize = id.parse().map_err(|_| bad(format!("bad id {id:?}")))?;
            if id != tokens.len() {
                return Err(bad(format!("ids must be dense and ordered, expected {}", tokens.len())));
            }
            tokens.push(unescape(tok).ok_or_else(|| bad("bad escape sequence".into()))?);
        }
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(VocabError::Format { line: 2, message: "reserved ids are missing".into() });
        }
        let vocab = Self::from_tokens(tokens, header.min_freq, header.max_len);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(VocabError::Format { line: 2, message: "duplicate token".into() });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        fs::write(path, self.to_file_string())
            .map_err(|source| VocabError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text =
            fs::read_to_string(path).map_err(|source| VocabError::Io { path: path.display().to_string(), source })?;
        Self::from_file_str(&text)
    }

    /// SHA-256 of the serialized vocabulary file.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

fn escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(text: &str) -> Option<String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(items: &[&str]) -> Vec<Vec<String>> {
        items.iter().map(|s| s.split_whitespace().map(str::to_string).collect()).collect()
    }

    #[test]
    fn min_freq_threshold() {
        let v = Vocabulary::build(&seqs(&["a b a"]), 1, 110).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        let v = Vocabulary::build(&seqs(&["a b a"]), 2, 110).unwrap();
        assert_eq!(v.tokens(), ["a"]);
    }

    #[test]
    fn encode_pads_and_truncates() {
        let v = Vocabulary::build(&seqs(&["a a b"]), 1, 5).unwrap();
        assert_eq!((v.id("a"), v.id("b")), (Some(3), Some(4)));
        let e = v.encode(&["a", "b"], 1);
        assert_eq!(e.ids, [2, 3, 4, 0, 0]);
        assert_eq!(e.true_length, 3);
        assert_eq!(v.encode(&["zzz"], 0).ids[1], UNK);
        let long: Vec<String> = (0..200).map(|_| "a".to_string()).collect();
        let v = Vocabulary::build(std::slice::from_ref(&long), 1, 110).unwrap();
        let e = v.encode(&long, 0);
        assert_eq!((e.ids.len(), e.true_length), (110, 110));
    }

    #[test]
    fn oov_counts_types() {
        let v = Vocabulary::build(&seqs(&["a b"]), 1, 10).unwrap();
        assert_eq!(v.oov_report(&seqs(&["a b a"])).oov_types, 0);
        assert_eq!(v.oov_report(&seqs(&["q q r"])).oov_types, 2);
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(Vocabulary::build::<Vec<String>, String>(&[], 1, 10), Err(VocabError::EmptyTrainingSet)));
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build(&seqs(&["a\tb c\\d \"x y\" c"]), 1, 12).unwrap();
        let back = Vocabulary::from_file_str(&v.to_file_string()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.content_hash(), v.content_hash());
    }
}
