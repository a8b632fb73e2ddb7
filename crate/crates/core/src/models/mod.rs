//! Classifiers: bag-of-words logistic regression and a transformer encoder,
//! both trained on binary cross-entropy.

pub mod checkpoint;
pub mod gradcheck;
pub mod logistic;
pub mod optim;
pub mod transformer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::Vocabulary;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointHeader, CheckpointMeta};
pub use logistic::{bow_featurize, train_logistic, BowVector, LogisticModel};
pub use optim::AdamW;
pub use transformer::{train_transformer, TransformerClassifier, TransformerConfig, TransformerParams};

/// Probability clamp applied before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Binary cross-entropy of the positive-class probability `p` against `y`.
/// The clamp is applied to the probability of the true class, so the loss is
/// symmetric under `(p, 1) <-> (1 - p, 0)` up to the rounding of `1 - p`.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let q = if y == 1 { p } else { 1.0 - p };
    -q.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

/// Derivative of [`bce_loss`] with respect to the logit of `p`; zero where
/// the clamp is active.
pub fn bce_logit_grad(p: f64, y: u8) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    p - f64::from(y)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub probability: f64,
    pub label: u8,
}

impl PredictionResult {
    /// Label 1 only when `p` is strictly above the threshold.
    pub fn from_probability(probability: f64, threshold: f64) -> Self {
        PredictionResult { probability, label: u8::from(probability > threshold) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bow,
    Transformer,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bow => "bow",
            ModelKind::Transformer => "transformer",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bow" => Ok(ModelKind::Bow),
            "transformer" => Ok(ModelKind::Transformer),
            _ => Err(format!("unknown model {s:?} (expected bow or transformer)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub d_head_hidden: usize,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            epochs: 10,
            batch_size: 32,
            seed: 17,
            dropout: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            d_model: 128,
            n_heads: 4,
            n_layers: 4,
            d_ff: 512,
            d_head_hidden: 128,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    /// Defaults for the bag-of-words baseline (plain mini-batch gradient
    /// descent on count features).
    pub fn bow_default() -> Self {
        TrainConfig { learning_rate: 0.05, epochs: 40, weight_decay: 1e-4, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must lie in (0, 1)");
        }
        if [self.d_model, self.n_heads, self.n_layers, self.d_ff, self.d_head_hidden, self.batch_size].contains(&0) {
            return fail("dimensions and batch size must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail("d_model must be divisible by n_heads");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return fail("optimizer betas must lie in [0, 1) and eps must be positive");
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
}

/// Final model, best-validation-loss model and per-epoch curves.
#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub final_model: M,
    pub best_model: M,
    /// Epoch (1-based) of the best model; 0 when no epoch ran.
    pub best_epoch: usize,
    pub curves: Vec<EpochMetrics>,
}

pub fn curves_csv(curves: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,valid_loss,valid_acc\n");
    for c in curves {
        out.push_str(&format!("{},{:.9},{:.9},{:.6}\n", c.epoch, c.train_loss, c.valid_loss, c.valid_acc));
    }
    out
}

/// Either trained model family.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Logistic(LogisticModel),
    Transformer(TransformerClassifier),
}

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierModel::Logistic(_) => ModelKind::Bow,
            ClassifierModel::Transformer(_) => ModelKind::Transformer,
        }
    }

    /// Positive-class probability of a represented token sequence.
    pub fn probability<T: AsRef<str>>(&self, tokens: &[T], vocab: &Vocabulary) -> Result<f64, ModelError> {
        match self {
            ClassifierModel::Logistic(m) => Ok(m.probability(&bow_featurize(tokens, vocab))),
            ClassifierModel::Transformer(m) => m.probability(&vocab.encode(tokens, 0)),
        }
    }

    pub fn predict<T: AsRef<str>>(
        &self,
        tokens: &[T],
        vocab: &Vocabulary,
        threshold: f64,
    ) -> Result<PredictionResult, ModelError> {
        Ok(PredictionResult::from_probability(self.probability(tokens, vocab)?, threshold))
    }
}

/// Mean loss and accuracy of probabilities against labels.
pub(crate) fn loss_and_accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> (f64, f64) {
    if probs.is_empty() {
        return (0.0, 0.0);
    }
    let n = probs.len() as f64;
    let loss = probs.iter().zip(labels).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / n;
    let correct = probs.iter().zip(labels).filter(|(&p, &y)| u8::from(p > threshold) == y).count();
    (loss, correct as f64 / n)
}
