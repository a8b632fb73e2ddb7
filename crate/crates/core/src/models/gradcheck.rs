//! Finite-difference verification of analytic gradients.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::logistic::{BowVector, LogisticModel};
use super::transformer::{TransformerClassifier, TransformerParams};
use super::ModelError;
use crate::vocab::EncodedInstance;

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_SAMPLES: usize = 240;

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps entries whose true
/// gradient is ~0 from dividing round-off by round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub index: [usize; 2],
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    fn from_entries(entries: Vec<GradCheckEntry>) -> Self {
        let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
        GradCheckReport { max_rel_error, entries }
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// Distinct tensor names that were sampled.
    pub fn tensors_covered(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.entries.iter().map(|e| e.tensor.as_str()).collect();
        names.dedup();
        names
    }
}

/// Picks parameter coordinates spread evenly over every tensor. Embedding
/// rows are drawn from the ids and positions the instance actually uses.
fn sample_coordinates(
    model: &TransformerClassifier,
    instance: &EncodedInstance,
    n_samples: usize,
    seed: u64,
) -> Vec<(usize, [usize; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = model.config.tensor_layout();
    let per_tensor = n_samples.div_ceil(layout.len()).max(1);
    let n = instance.true_length.clamp(1, instance.ids.len());
    let used_ids: Vec<usize> = instance.ids[..n].iter().map(|&i| i as usize).collect();
    let mut out = Vec::new();
    for (t, (name, shape)) in layout.iter().enumerate() {
        for _ in 0..per_tensor {
            let row = match name.as_str() {
                "tok_emb" => *used_ids.choose(&mut rng).expect("non-empty"),
                "pos_emb" => rng.random_range(0..n),
                _ => rng.random_range(0..shape[0]),
            };
            out.push((t, [row, rng.random_range(0..shape[1])]));
        }
    }
    out
}

/// Compares `grads` against central differences of the instance loss.
pub fn grad_check_against(
    model: &TransformerClassifier,
    instance: &EncodedInstance,
    grads: &TransformerParams,
    n_samples: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let names: Vec<String> = model.config.tensor_layout().into_iter().map(|(n, _)| n).collect();
    let grad_tensors = grads.tensors();
    let mut probe = model.clone();
    let mut entries = Vec::new();
    for (t, idx) in sample_coordinates(model, instance, n_samples, seed) {
        let original = probe.params.tensors()[t][idx];
        probe.params.tensors_mut()[t][idx] = original + FD_STEP;
        let plus = probe.loss(instance)?;
        probe.params.tensors_mut()[t][idx] = original - FD_STEP;
        let minus = probe.loss(instance)?;
        probe.params.tensors_mut()[t][idx] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = grad_tensors[t][idx];
        entries.push(GradCheckEntry {
            tensor: names[t].clone(),
            index: idx,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport::from_entries(entries))
}

/// Checks the model's own backpropagation on one instance (dropout off).
pub fn grad_check(
    model: &TransformerClassifier,
    instance: &EncodedInstance,
    n_samples: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model.loss_and_grad(instance)?;
    grad_check_against(model, instance, &grads, n_samples, seed)
}

/// Same check for the logistic model; every weight the example touches is
/// tested plus `n_samples` random others and the bias.
pub fn logistic_grad_check_against(
    model: &LogisticModel,
    x: &BowVector,
    y: u8,
    grads: &(Vec<f64>, f64),
    n_samples: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<usize> = x.counts.iter().map(|&(id, _)| id as usize).collect();
    coords.extend((0..n_samples).map(|_| rng.random_range(0..model.weights.len().max(1))));
    let mut probe = model.clone();
    let mut entries = Vec::new();
    for j in coords.into_iter().filter(|&j| j < model.weights.len()) {
        let original = probe.weights[j];
        probe.weights[j] = original + FD_STEP;
        let plus = probe.loss(x, y);
        probe.weights[j] = original - FD_STEP;
        let minus = probe.loss(x, y);
        probe.weights[j] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        entries.push(GradCheckEntry {
            tensor: "weights".into(),
            index: [0, j],
            analytic: grads.0[j],
            numeric,
            rel_error: relative_error(grads.0[j], numeric),
        });
    }
    let original = probe.bias;
    probe.bias = original + FD_STEP;
    let plus = probe.loss(x, y);
    probe.bias = original - FD_STEP;
    let minus = probe.loss(x, y);
    let numeric = (plus - minus) / (2.0 * FD_STEP);
    entries.push(GradCheckEntry {
        tensor: "bias".into(),
        index: [0, 0],
        analytic: grads.1,
        numeric,
        rel_error: relative_error(grads.1, numeric),
    });
    GradCheckReport::from_entries(entries)
}

pub fn logistic_grad_check(
    model: &LogisticModel,
    x: &BowVector,
    y: u8,
    n_samples: usize,
    seed: u64,
) -> GradCheckReport {
    let grads = model.gradient(x, y);
    logistic_grad_check_against(model, x, y, &grads, n_samples, seed)
}
