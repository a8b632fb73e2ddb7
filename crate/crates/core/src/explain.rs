//! Perturbation-based local explanations: drop tokens at random, query the
//! model, and fit a kernel-weighted ridge regression whose coefficients
//! attribute the prediction to token positions.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::models::{ClassifierModel, ModelError};
use crate::repr::{represent, ReprError, ReprKind, Representation};
use crate::vocab::Vocabulary;

pub const MIN_SAMPLES: usize = 50;
pub const RIDGE_LAMBDA: f64 = 1.0;
pub const KEEP_PROBABILITY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("sequence has {0} token(s); at least 2 are needed")]
    TooShort(usize),
    #[error("at least {MIN_SAMPLES} samples are required (got {0})")]
    TooFewSamples(usize),
    #[error("surrogate fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainedToken {
    pub position: usize,
    pub lexeme: String,
    /// Byte range in the snippet, for text representations.
    pub span: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub tokens: Vec<ExplainedToken>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub predicted_p: f64,
    pub n_samples: usize,
    /// Weighted R^2 of the surrogate on its own samples.
    pub r_squared: f64,
}

/// Kernel weight for a mask that dropped `dropped` of `len` positions.
pub fn kernel_weight(dropped: usize, len: usize) -> f64 {
    let width2 = len as f64;
    let d = dropped as f64;
    (-(d * d) / width2).exp().sqrt()
}

/// Explains an arbitrary scoring function over a represented sequence.
pub fn explain_with<F>(
    repr: &Representation,
    score: F,
    n_samples: usize,
    seed: u64,
) -> Result<Explanation, ExplainError>
where
    F: Fn(&[&str]) -> Result<f64, ModelError> + Sync,
{
    let len = repr.tokens.len();
    if len < 2 {
        return Err(ExplainError::TooShort(len));
    }
    if n_samples < MIN_SAMPLES {
        return Err(ExplainError::TooFewSamples(n_samples));
    }
    let all: Vec<&str> = repr.tokens.iter().map(String::as_str).collect();
    let predicted_p = score(&all)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<Vec<bool>> =
        (0..n_samples).map(|_| (0..len).map(|_| rng.random::<f64>() < KEEP_PROBABILITY).collect()).collect();
    let targets: Vec<f64> = masks
        .par_iter()
        .map(|mask| {
            let kept: Vec<&str> = all.iter().zip(mask).filter(|(_, &k)| k).map(|(t, _)| *t).collect();
            score(&kept)
        })
        .collect::<Result<_, _>>()?;
    let pis: Vec<f64> = masks.iter().map(|m| kernel_weight(m.iter().filter(|&&k| !k).count(), len)).collect();

    let (weights, intercept, r_squared) = weighted_ridge(&masks, &targets, &pis, RIDGE_LAMBDA)?;
    let tokens = repr
        .tokens
        .iter()
        .enumerate()
        .map(|(i, t)| ExplainedToken { position: i, lexeme: t.clone(), span: repr.spans.get(i).cloned().flatten() })
        .collect();
    Ok(Explanation { tokens, weights, intercept, predicted_p, n_samples, r_squared })
}

/// Ridge regression of `y` on binary features with sample weights and an
/// unpenalized intercept. Returns (coefficients, intercept, weighted R^2).
fn weighted_ridge(x: &[Vec<bool>], y: &[f64], w: &[f64], lambda: f64) -> Result<(Vec<f64>, f64, f64), ExplainError> {
    let n = x.len();
    let p = x[0].len();
    let wsum: f64 = w.iter().sum();
    if !(wsum > 0.0) {
        return Err(ExplainError::Fit("all kernel weights are zero".into()));
    }
    let feat = |i: usize, j: usize| if x[i][j] { 1.0 } else { 0.0 };
    let xbar: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w[i] * feat(i, j)).sum::<f64>() / wsum).collect();
    let ybar = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / wsum;

    let xc = DMatrix::from_fn(n, p, |i, j| (feat(i, j) - xbar[j]) * w[i].sqrt());
    let yc = DVector::from_fn(n, |i, _| (y[i] - ybar) * w[i].sqrt());
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * &yc;
    let chol = gram.cholesky().ok_or_else(|| ExplainError::Fit("normal equations are not positive definite".into()))?;
    let beta = chol.solve(&rhs);
    let intercept = ybar - (0..p).map(|j| xbar[j] * beta[j]).sum::<f64>();

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let pred = intercept + (0..p).map(|j| feat(i, j) * beta[j]).sum::<f64>();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - ybar).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((beta.iter().copied().collect(), intercept, r_squared))
}

/// Explains a model's prediction on a code snippet.
pub fn explain(
    model: &ClassifierModel,
    vocab: &Vocabulary,
    code: &str,
    repr_kind: ReprKind,
    n_samples: usize,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    let repr = represent(code, repr_kind)?;
    explain_with(&repr, |tokens| model.probability(tokens, vocab), n_samples, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationRow {
    pub position: usize,
    pub lexeme: String,
    pub weight: f64,
    pub span: Option<Range<usize>>,
}

/// The `top_k` positions by |weight|, ties broken by earlier position.
pub fn render_explanation(explanation: &Explanation, top_k: usize) -> Vec<ExplanationRow> {
    let mut order: Vec<usize> = (0..explanation.weights.len()).collect();
    order.sort_by(|&a, &b| explanation.weights[b].abs().total_cmp(&explanation.weights[a].abs()).then(a.cmp(&b)));
    order
        .into_iter()
        .take(top_k)
        .map(|i| ExplanationRow {
            position: i,
            lexeme: explanation.tokens[i].lexeme.clone(),
            weight: explanation.weights[i],
            span: explanation.tokens[i].span.clone(),
        })
        .collect()
}

pub fn render_text(explanation: &Explanation, rows: &[ExplanationRow]) -> String {
    let mut out = format!(
        "p(positive) = {:.4}  samples = {}  surrogate R^2 = {:.3}\n",
        explanation.predicted_p, explanation.n_samples, explanation.r_squared
    );
    out.push_str(&format!("{:>5}  {:<24}{:>12}  {}\n", "pos", "token", "weight", "span"));
    for r in rows {
        let span = r.span.as_ref().map(|s| format!("{}..{}", s.start, s.end)).unwrap_or_else(|| "-".into());
        out.push_str(&format!("{:>5}  {:<24}{:>12.6}  {}\n", r.position, r.lexeme, r.weight, span));
    }
    out
}
