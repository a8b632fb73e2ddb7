//! Adam with decoupled weight decay.

use ndarray::{Array2, Zip};

use super::TrainConfig;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Array2<f64>>, config: &TrainConfig) -> Self {
        let m: Vec<Array2<f64>> = params.into_iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        AdamW {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            weight_decay: config.weight_decay,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update; `params` and `grads` must list tensors in the same order
    /// as at construction.
    pub fn step<'a, 'b>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Array2<f64>>,
        grads: impl IntoIterator<Item = &'b Array2<f64>>,
    ) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *p -= lr * wd * *p;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_matches_closed_form() {
        let cfg = TrainConfig { learning_rate: 0.1, weight_decay: 0.5, ..TrainConfig::default() };
        let mut p = array![[1.0, -2.0]];
        let g = array![[0.3, -0.0]];
        let mut opt = AdamW::new([&p], &cfg);
        opt.step([&mut p], [&g]);
        // Decay first, then a bias-corrected step of size lr * sign(g).
        let want0 = 1.0 - 0.1 * 0.5 * 1.0 - 0.1 * 0.3 / (0.3 + 1e-8);
        let want1 = -2.0 - 0.1 * 0.5 * -2.0;
        assert!((p[[0, 0]] - want0).abs() < 1e-12);
        assert!((p[[0, 1]] - want1).abs() < 1e-12);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = TrainConfig { learning_rate: 0.05, weight_decay: 0.0, ..TrainConfig::default() };
        let mut p = array![[3.0]];
        let mut opt = AdamW::new([&p], &cfg);
        for _ in 0..500 {
            let g = p.mapv(|x| 2.0 * (x - 1.0));
            opt.step([&mut p], [&g]);
        }
        assert!((p[[0, 0]] - 1.0).abs() < 1e-2);
    }
}
