//! Self-describing binary checkpoints.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, a JSON header,
//! then every tensor's values as little-endian `f64` in header order. The
//! vocabulary is written next to the checkpoint and referenced by hash.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::logistic::LogisticModel;
use super::transformer::{TransformerClassifier, TransformerConfig, TransformerParams};
use super::{ClassifierModel, ModelKind, TrainConfig};
use crate::datasets::Task;
use crate::repr::ReprKind;
use crate::vocab::{VocabError, Vocabulary};

pub const MAGIC: &[u8; 8] = b"OMPADVCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("vocabulary hash mismatch: checkpoint expects {expected}, file has {found}")]
    VocabMismatch { expected: String, found: String },
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub task: Task,
    pub repr_kind: ReprKind,
    pub model_kind: ModelKind,
    pub vocab_hash: String,
    pub vocab_file: String,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformer: Option<TransformerConfig>,
    pub best_epoch: usize,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: ClassifierModel,
}

fn model_tensors(model: &ClassifierModel) -> Vec<(String, Array2<f64>)> {
    match model {
        ClassifierModel::Logistic(m) => vec![
            ("weights".into(), Array2::from_shape_vec((1, m.weights.len()), m.weights.clone()).expect("row vector")),
            ("bias".into(), Array2::from_elem((1, 1), m.bias)),
        ],
        ClassifierModel::Transformer(m) => {
            m.config.tensor_layout().into_iter().map(|(n, _)| n).zip(m.params.tensors().into_iter().cloned()).collect()
        }
    }
}

/// Path of the vocabulary file stored beside `checkpoint`.
pub fn vocab_path_for(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    checkpoint.with_file_name(format!("{stem}.vocab.tsv"))
}

impl Checkpoint {
    pub fn new(
        model: ClassifierModel,
        task: Task,
        repr_kind: ReprKind,
        vocab: &Vocabulary,
        vocab_file: String,
        config: TrainConfig,
        best_epoch: usize,
    ) -> Self {
        let transformer = match &model {
            ClassifierModel::Transformer(m) => Some(m.config),
            ClassifierModel::Logistic(_) => None,
        };
        let tensors = model_tensors(&model)
            .into_iter()
            .map(|(name, t)| TensorInfo { name, shape: [t.nrows(), t.ncols()] })
            .collect();
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            task,
            repr_kind,
            model_kind: model.kind(),
            vocab_hash: vocab.content_hash(),
            vocab_file,
            config,
            transformer,
            best_epoch,
            tensors,
        };
        Checkpoint { header, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let tensors = model_tensors(&self.model);
        let n_values: usize = tensors.iter().map(|(_, t)| t.len()).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * n_values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let malformed = |m: &str| CheckpointError::Malformed(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(header.format_version));
        }
        let mut data = bytes[header_end..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let expected: usize = header.tensors.iter().map(|t| t.shape[0] * t.shape[1]).sum();
        if bytes.len() - header_end != expected * 8 {
            return Err(malformed("tensor data length does not match header"));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in &header.tensors {
            let values: Vec<f64> = data.by_ref().take(info.shape[0] * info.shape[1]).collect();
            tensors.push(
                Array2::from_shape_vec((info.shape[0], info.shape[1]), values)
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
            );
        }
        let model = match header.model_kind {
            ModelKind::Bow => {
                let [w, b] =
                    <[Array2<f64>; 2]>::try_from(tensors).map_err(|_| malformed("logistic needs 2 tensors"))?;
                if b.len() != 1 || w.nrows() != 1 {
                    return Err(malformed("bad logistic tensor shapes"));
                }
                ClassifierModel::Logistic(LogisticModel { weights: w.into_raw_vec_and_offset().0, bias: b[[0, 0]] })
            }
            ModelKind::Transformer => {
                let config = header.transformer.ok_or_else(|| malformed("missing transformer config"))?;
                let names: Vec<String> = config.tensor_layout().into_iter().map(|(n, _)| n).collect();
                if names.iter().ne(header.tensors.iter().map(|t| &t.name)) {
                    return Err(malformed("tensor names do not match the transformer layout"));
                }
                let params =
                    TransformerParams::from_tensors(&config, tensors).ok_or_else(|| malformed("bad tensor shapes"))?;
                ClassifierModel::Transformer(TransformerClassifier { config, params })
            }
        };
        Ok(Checkpoint { header, model })
    }

    /// Writes the checkpoint and its vocabulary file.
    pub fn save(
        path: &Path,
        model: ClassifierModel,
        meta: CheckpointMeta,
        vocab: &Vocabulary,
    ) -> Result<Self, CheckpointError> {
        let vocab_path = vocab_path_for(path);
        let vocab_file = vocab_path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        vocab.save(&vocab_path)?;
        let ck = Checkpoint::new(model, meta.task, meta.repr_kind, vocab, vocab_file, meta.config, meta.best_epoch);
        fs::write(path, ck.to_bytes())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Ok(ck)
    }

    /// Reads a checkpoint and the vocabulary it references, verifying the hash.
    pub fn load(path: &Path) -> Result<(Self, Vocabulary), CheckpointError> {
        let bytes =
            fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        let ck = Self::from_bytes(&bytes)?;
        let vocab_path = path.with_file_name(&ck.header.vocab_file);
        let vocab = Vocabulary::load(&vocab_path)?;
        let found = vocab.content_hash();
        if found != ck.header.vocab_hash {
            return Err(CheckpointError::VocabMismatch { expected: ck.header.vocab_hash.clone(), found });
        }
        Ok((ck, vocab))
    }
}

#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub task: Task,
    pub repr_kind: ReprKind,
    pub config: TrainConfig,
    pub best_epoch: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::build(&[vec!["a", "b", "c"]], 1, 8).unwrap()
    }

    #[test]
    fn transformer_round_trip() {
        let cfg = TransformerConfig {
            vocab_size: 6,
            max_len: 8,
            d_model: 4,
            n_heads: 2,
            n_layers: 1,
            d_ff: 6,
            d_head_hidden: 3,
        };
        let model = ClassifierModel::Transformer(TransformerClassifier::new(cfg, 2));
        let ck =
            Checkpoint::new(model, Task::Directive, ReprKind::Ast, &vocab(), "v.tsv".into(), TrainConfig::default(), 3);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn logistic_round_trip_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bow.ckpt");
        let model =
            ClassifierModel::Logistic(LogisticModel { weights: vec![0.5, -1.0, 2.0, 0.0, 1e-300, -0.0], bias: 0.25 });
        let meta = CheckpointMeta {
            task: Task::Private,
            repr_kind: ReprKind::Text,
            config: TrainConfig::bow_default(),
            best_epoch: 1,
        };
        let saved = Checkpoint::save(&path, model, meta, &vocab()).unwrap();
        let (loaded, v) = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, saved);
        assert_eq!(v, vocab());
        assert!(dir.path().join("bow.vocab.tsv").exists());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(CheckpointError::BadMagic)));
    }
}
