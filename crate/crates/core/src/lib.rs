//! Toolkit for learning where OpenMP `parallel for` directives belong.
//!
//! The pipeline runs from C sources to a labeled loop corpus
//! ([`corpus`]), through one of four token representations ([`repr`]) and a
//! vocabulary ([`vocab`]), into balanced task datasets ([`datasets`]), two
//! classifier families ([`models`]), evaluation ([`eval`]) and
//! perturbation-based explanations ([`explain`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cfront;
pub mod corpus;
pub mod datasets;
pub mod eval;
pub mod explain;
pub mod models;
pub mod repr;
pub mod synth;
pub mod vocab;

pub use cfront::{AstNode, NodeKind};
pub use corpus::{CorpusStats, DirectiveInfo, SourceRecord};
pub use datasets::{LabeledSet, Split, Task};
pub use eval::EvalReport;
pub use explain::Explanation;
pub use models::{ClassifierModel, LogisticModel, PredictionResult, TrainConfig, TransformerClassifier};
pub use repr::ReprKind;
pub use vocab::{EncodedInstance, Vocabulary};
