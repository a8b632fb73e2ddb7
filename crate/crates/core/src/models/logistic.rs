//! Bag-of-words features and a logistic regression classifier.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    bce_logit_grad, bce_loss, loss_and_accuracy, sigmoid, EpochMetrics, ModelError, TrainConfig, TrainOutcome,
};
use crate::vocab::Vocabulary;

/// Sparse token counts, sorted by vocabulary id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BowVector {
    pub counts: Vec<(u32, f64)>,
}

impl BowVector {
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(id, c) in &self.counts {
            out[id as usize] += c;
        }
        out
    }
}

/// Occurrence counts over the vocabulary; unknown tokens count toward UNK.
pub fn bow_featurize<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> BowVector {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in tokens {
        *counts.entry(vocab.id_or_unk(t.as_ref())).or_default() += 1.0;
    }
    BowVector { counts: counts.into_iter().collect() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(n_features: usize) -> Self {
        LogisticModel { weights: vec![0.0; n_features], bias: 0.0 }
    }

    pub fn logit(&self, x: &BowVector) -> f64 {
        self.bias
            + x.counts.iter().map(|&(id, c)| self.weights.get(id as usize).copied().unwrap_or(0.0) * c).sum::<f64>()
    }

    pub fn probability(&self, x: &BowVector) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn loss(&self, x: &BowVector, y: u8) -> f64 {
        bce_loss(self.probability(x), y)
    }

    /// Gradient of the loss on one example: (weights, bias).
    pub fn gradient(&self, x: &BowVector, y: u8) -> (Vec<f64>, f64) {
        let d = bce_logit_grad(self.probability(x), y);
        let mut gw = vec![0.0; self.weights.len()];
        for &(id, c) in &x.counts {
            if let Some(g) = gw.get_mut(id as usize) {
                *g += d * c;
            }
        }
        (gw, d)
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

fn evaluate(model: &LogisticModel, data: &[(BowVector, u8)], threshold: f64) -> (f64, f64) {
    let probs: Vec<f64> = data.iter().map(|(x, _)| model.probability(x)).collect();
    let labels: Vec<u8> = data.iter().map(|(_, y)| *y).collect();
    loss_and_accuracy(&probs, &labels, threshold)
}

/// Mini-batch gradient descent on mean cross-entropy with L2 decay.
pub fn train_logistic(
    train: &[(BowVector, u8)],
    valid: &[(BowVector, u8)],
    n_features: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome<LogisticModel>, ModelError> {
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(ModelError::InvalidConfig("batch_size and learning_rate must be positive".into()));
    }
    if train.is_empty() && config.epochs > 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut model = LogisticModel::zeros(n_features);
    let mut best = (f64::INFINITY, model.clone(), 0);
    let mut curves = Vec::with_capacity(config.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let lr = config.learning_rate;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut gw = vec![0.0; n_features];
            let mut gb = 0.0;
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, y) = &train[i];
                let p = model.probability(x);
                batch_loss += bce_loss(p, *y);
                let d = bce_logit_grad(p, *y) * scale;
                for &(id, c) in &x.counts {
                    if let Some(g) = gw.get_mut(id as usize) {
                        *g += d * c;
                    }
                }
                gb += d;
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= lr * (g + config.weight_decay * *w);
            }
            model.bias -= lr * gb;
            if !model.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
        }
        let (valid_loss, valid_acc) = evaluate(&model, valid, config.threshold);
        let train_loss = loss_sum / train.len() as f64;
        log::info!("bow epoch {epoch}: train_loss={train_loss:.4} valid_loss={valid_loss:.4} valid_acc={valid_acc:.4}");
        curves.push(EpochMetrics { epoch, train_loss, valid_loss, valid_acc });
        if valid_loss < best.0 {
            best = (valid_loss, model.clone(), epoch);
        }
    }
    Ok(TrainOutcome { best_model: best.1, best_epoch: best.2, final_model: model, curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bow(pairs: &[(u32, f64)]) -> BowVector {
        BowVector { counts: pairs.to_vec() }
    }

    #[test]
    fn featurize_counts_and_order_invariance() {
        let vocab = Vocabulary::build(&[vec!["a", "b"]], 1, 10).unwrap();
        let a = vocab.id("a").unwrap() as usize;
        let b = vocab.id("b").unwrap() as usize;
        let dense = bow_featurize(&["a", "b", "a"], &vocab).to_dense(vocab.len());
        assert_eq!((dense[a], dense[b]), (2.0, 1.0));
        assert_eq!(bow_featurize(&["b", "a", "a"], &vocab), bow_featurize(&["a", "b", "a"], &vocab));
        assert!(bow_featurize::<&str>(&[], &vocab).to_dense(vocab.len()).iter().all(|&c| c == 0.0));
        assert_eq!(bow_featurize(&["zz"], &vocab).counts, vec![(crate::vocab::UNK, 1.0)]);
    }

    #[test]
    fn separable_set_is_learned() {
        let data: Vec<(BowVector, u8)> =
            (0..40).map(|i| if i % 2 == 0 { (bow(&[(3, 1.0)]), 1) } else { (bow(&[(4, 1.0)]), 0) }).collect();
        let cfg = TrainConfig { learning_rate: 0.5, epochs: 50, batch_size: 8, ..TrainConfig::bow_default() };
        let out = train_logistic(&data, &data, 5, &cfg).unwrap();
        let (_, acc) = evaluate(&out.final_model, &data, 0.5);
        assert!(acc >= 0.99);
    }

    #[test]
    fn single_example_probability_rises() {
        let data = vec![(bow(&[(3, 2.0)]), 1u8)];
        let mut last = 0.5;
        for epochs in 1..6 {
            let cfg = TrainConfig { epochs, ..TrainConfig::bow_default() };
            let p = train_logistic(&data, &data, 4, &cfg).unwrap().final_model.probability(&data[0].0);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn equal_seeds_equal_weights() {
        let data: Vec<(BowVector, u8)> =
            (0..30).map(|i| (bow(&[(i % 5, 1.0 + i as f64)]), (i % 3 == 0) as u8)).collect();
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::bow_default() };
        let a = train_logistic(&data, &data, 6, &cfg).unwrap();
        let b = train_logistic(&data, &data, 6, &cfg).unwrap();
        assert_eq!(a.final_model, b.final_model);
    }
}
