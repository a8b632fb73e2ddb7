//! Post-norm transformer encoder classifier in `f64` with hand-written
//! backpropagation.
//!
//! Each sequence is processed over its first `true_length` positions only.
//! Restricting keys to those positions is exactly an additive `-inf` mask on
//! the padded tail, and no query at a padded position can influence the CLS
//! row, so PAD content never reaches the output.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::{bce_logit_grad, bce_loss, loss_and_accuracy, EpochMetrics, ModelError, TrainConfig, TrainOutcome};
use crate::vocab::EncodedInstance;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub d_head_hidden: usize,
}

impl TransformerConfig {
    pub fn from_train(config: &TrainConfig, vocab_size: usize, max_len: usize) -> Self {
        TransformerConfig {
            vocab_size,
            max_len,
            d_model: config.d_model,
            n_heads: config.n_heads,
            n_layers: config.n_layers,
            d_ff: config.d_ff,
            d_head_hidden: config.d_head_hidden,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Names and shapes of all parameter tensors, in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, [usize; 2])> {
        let (d, f, h) = (self.d_model, self.d_ff, self.d_head_hidden);
        let mut out = vec![("tok_emb".to_string(), [self.vocab_size, d]), ("pos_emb".to_string(), [self.max_len, d])];
        for l in 0..self.n_layers {
            for (name, shape) in LayerParams::layout(d, f) {
                out.push((format!("layers.{l}.{name}"), shape));
            }
        }
        out.extend([
            ("head.w1".to_string(), [d, h]),
            ("head.b1".to_string(), [1, h]),
            ("head.w2".to_string(), [h, 2]),
            ("head.b2".to_string(), [1, 2]),
        ]);
        out
    }
}

/// One encoder layer. Weight matrices are stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln1_g: Array2<f64>,
    pub ln1_b: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub ln2_g: Array2<f64>,
    pub ln2_b: Array2<f64>,
}

impl LayerParams {
    fn layout(d: usize, f: usize) -> [(&'static str, [usize; 2]); 16] {
        [
            ("wq", [d, d]),
            ("bq", [1, d]),
            ("wk", [d, d]),
            ("bk", [1, d]),
            ("wv", [d, d]),
            ("bv", [1, d]),
            ("wo", [d, d]),
            ("bo", [1, d]),
            ("ln1_g", [1, d]),
            ("ln1_b", [1, d]),
            ("w1", [d, f]),
            ("b1", [1, f]),
            ("w2", [f, d]),
            ("b2", [1, d]),
            ("ln2_g", [1, d]),
            ("ln2_b", [1, d]),
        ]
    }

    fn fields(&self) -> [&Array2<f64>; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_g,
            &self.ln1_b,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ln2_g,
            &self.ln2_b,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Array2<f64>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }

    fn from_fields(mut it: impl Iterator<Item = Array2<f64>>) -> Option<Self> {
        Some(LayerParams {
            wq: it.next()?,
            bq: it.next()?,
            wk: it.next()?,
            bk: it.next()?,
            wv: it.next()?,
            bv: it.next()?,
            wo: it.next()?,
            bo: it.next()?,
            ln1_g: it.next()?,
            ln1_b: it.next()?,
            w1: it.next()?,
            b1: it.next()?,
            w2: it.next()?,
            b2: it.next()?,
            ln2_g: it.next()?,
            ln2_b: it.next()?,
        })
    }
}

/// All parameters; the same struct holds gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub head_w1: Array2<f64>,
    pub head_b1: Array2<f64>,
    pub head_w2: Array2<f64>,
    pub head_b2: Array2<f64>,
}

fn uniform(rng: &mut impl Rng, shape: [usize; 2], bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((shape[0], shape[1]), || rng.random_range(-bound..=bound))
}

impl TransformerParams {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero, layer-norm gains one.
    pub fn init(config: &TransformerConfig, rng: &mut impl Rng) -> Self {
        let tensors = config
            .tensor_layout()
            .into_iter()
            .map(|(name, shape)| {
                let short = name.rsplit('.').next().unwrap_or(&name);
                if short.starts_with("ln") && short.ends_with("_g") {
                    Array2::ones((shape[0], shape[1]))
                } else if shape[0] == 1 {
                    Array2::zeros((1, shape[1]))
                } else if name.ends_with("_emb") {
                    uniform(rng, shape, 1.0 / (shape[1] as f64).sqrt())
                } else {
                    uniform(rng, shape, 1.0 / (shape[0] as f64).sqrt())
                }
            })
            .collect();
        Self::from_tensors(config, tensors).expect("layout matches")
    }

    pub fn from_tensors(config: &TransformerConfig, tensors: Vec<Array2<f64>>) -> Option<Self> {
        let layout = config.tensor_layout();
        if tensors.len() != layout.len()
            || tensors.iter().zip(&layout).any(|(t, (_, shape))| t.shape() != shape.as_slice())
        {
            return None;
        }
        let mut it = tensors.into_iter();
        let tok_emb = it.next()?;
        let pos_emb = it.next()?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams::from_fields(it.by_ref().take(16))?);
        }
        Some(TransformerParams {
            tok_emb,
            pos_emb,
            layers,
            head_w1: it.next()?,
            head_b1: it.next()?,
            head_w2: it.next()?,
            head_b2: it.next()?,
        })
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend(l.fields());
        }
        out.extend([&self.head_w1, &self.head_b1, &self.head_w2, &self.head_b2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend(l.fields_mut());
        }
        out.extend([&mut self.head_w1, &mut self.head_b1, &mut self.head_w2, &mut self.head_b2]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerClassifier {
    pub config: TransformerConfig,
    pub params: TransformerParams,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Softmax outputs per head, before dropout.
    attn: Vec<Array2<f64>>,
    /// Dropout multipliers per head (0 or 1/(1-rho)).
    attn_mask: Option<Vec<Array2<f64>>>,
    concat: Array2<f64>,
    ln1: LnCache,
    y1: Array2<f64>,
    hpre: Array2<f64>,
    gact: Array2<f64>,
    ln2: LnCache,
}

struct ForwardCache {
    ids: Vec<usize>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    head_in: Array1<f64>,
    head_mask: Option<Array1<f64>>,
    h1: Array1<f64>,
    relu: Array1<f64>,
    logits: [f64; 2],
}

fn dropout_mask<D: ndarray::Dimension>(
    shape: D,
    rng: &mut Option<(&mut ChaCha8Rng, f64)>,
) -> Option<ndarray::Array<f64, D>> {
    let (rng, rate) = rng.as_mut()?;
    if *rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - *rate);
    let rate = *rate;
    Some(ndarray::Array::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep }))
}

fn layer_norm(x: &Array2<f64>, g: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * &rstd.view().insert_axis(Axis(1));
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

/// Returns dx and accumulates into the gain/bias gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array2<f64>,
    dg: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * g;
    let d = dy.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    Zip::from(dx.rows_mut()).and(cache.xhat.rows()).and(&cache.rstd).and(&mean_dxhat).and(&mean_dxhat_xhat).for_each(
        |mut row, xh, &rstd, &m1, &m2| {
            Zip::from(&mut row).and(&xh).for_each(|v, &xh| *v = rstd * (*v - m1 - xh * m2));
        },
    );
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn add_row_sum(bias_grad: &mut Array2<f64>, d: &Array2<f64>) {
    *bias_grad += &d.sum_axis(Axis(0)).insert_axis(Axis(0));
}

fn two_way_softmax(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

impl TransformerClassifier {
    pub fn new(config: TransformerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TransformerClassifier { params: TransformerParams::init(&config, &mut rng), config }
    }

    fn check_ids(&self, ids: &[u32]) -> Result<Vec<usize>, ModelError> {
        ids.iter()
            .map(|&id| {
                if (id as usize) < self.config.vocab_size {
                    Ok(id as usize)
                } else {
                    Err(ModelError::IdOutOfRange { id, vocab_size: self.config.vocab_size })
                }
            })
            .collect()
    }

    fn forward(
        &self,
        instance: &EncodedInstance,
        mut dropout: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Result<ForwardCache, ModelError> {
        let n = instance.true_length.clamp(1, self.config.max_len.min(instance.ids.len()));
        let ids = self.check_ids(&instance.ids[..n])?;
        let p = &self.params;
        let d = self.config.d_model;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = Array2::zeros((n, d));
        for (t, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(t);
            row += &p.tok_emb.row(id);
            row += &p.pos_emb.row(t);
        }
        let emb_mask = dropout_mask(x.raw_dim(), &mut dropout);
        if let Some(m) = &emb_mask {
            x *= m;
        }

        let mut layers = Vec::with_capacity(p.layers.len());
        for l in &p.layers {
            let q = x.dot(&l.wq) + &l.bq;
            let k = x.dot(&l.wk) + &l.bk;
            let v = x.dot(&l.wv) + &l.bv;
            let mut concat = Array2::zeros((n, d));
            let mut attn = Vec::with_capacity(self.config.n_heads);
            let mut masks = Vec::new();
            for h in 0..self.config.n_heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut a);
                let out = match dropout_mask(a.raw_dim(), &mut dropout) {
                    Some(m) => {
                        let o = (&a * &m).dot(&v.slice(cols));
                        masks.push(m);
                        o
                    }
                    None => a.dot(&v.slice(cols)),
                };
                concat.slice_mut(cols).assign(&out);
                attn.push(a);
            }
            let r1 = &x + &(concat.dot(&l.wo) + &l.bo);
            let (y1, ln1) = layer_norm(&r1, &l.ln1_g, &l.ln1_b);
            let hpre = y1.dot(&l.w1) + &l.b1;
            let gact = hpre.mapv(gelu);
            let r2 = &y1 + &(gact.dot(&l.w2) + &l.b2);
            let (out, ln2) = layer_norm(&r2, &l.ln2_g, &l.ln2_b);
            let x_in = std::mem::replace(&mut x, out);
            layers.push(LayerCache {
                x_in,
                q,
                k,
                v,
                attn,
                attn_mask: (!masks.is_empty()).then_some(masks),
                concat,
                ln1,
                y1,
                hpre,
                gact,
                ln2,
            });
        }

        let mut head_in = x.row(0).to_owned();
        let head_mask = dropout_mask(head_in.raw_dim(), &mut dropout);
        if let Some(m) = &head_mask {
            head_in *= m;
        }
        let h1 = head_in.dot(&p.head_w1) + &p.head_b1.row(0);
        let relu = h1.mapv(|v| v.max(0.0));
        let z = relu.dot(&p.head_w2) + &p.head_b2.row(0);
        Ok(ForwardCache { ids, emb_mask, layers, head_in, head_mask, h1, relu, logits: [z[0], z[1]] })
    }

    /// Accumulates `weight * dLoss/dparams` into `grads`.
    fn backward(&self, cache: &ForwardCache, label: u8, weight: f64, grads: &mut TransformerParams) {
        let p = &self.params;
        let d = self.config.d_model;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let n = cache.ids.len();

        let prob = two_way_softmax(cache.logits)[1];
        let g = bce_logit_grad(prob, label) * weight;
        if g == 0.0 {
            return;
        }
        let dz = Array1::from(vec![-g, g]);
        grads.head_w2 += &outer(cache.relu.view(), dz.view());
        grads.head_b2 += &dz.view().insert_axis(Axis(0));
        let drelu = p.head_w2.dot(&dz);
        let dh1 = Zip::from(&drelu).and(&cache.h1).map_collect(|&g, &h| if h > 0.0 { g } else { 0.0 });
        grads.head_w1 += &outer(cache.head_in.view(), dh1.view());
        grads.head_b1 += &dh1.view().insert_axis(Axis(0));
        let mut dcls = p.head_w1.dot(&dh1);
        if let Some(m) = &cache.head_mask {
            dcls *= m;
        }

        let mut dx = Array2::zeros((n, d));
        dx.row_mut(0).assign(&dcls);

        for (li, (l, c)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
            let gl = &mut grads.layers[li];
            let dr2 = layer_norm_backward(&dx, &c.ln2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);
            gl.w2 += &c.gact.t().dot(&dr2);
            add_row_sum(&mut gl.b2, &dr2);
            let mut dhpre = dr2.dot(&l.w2.t());
            Zip::from(&mut dhpre).and(&c.hpre).for_each(|g, &h| *g *= gelu_grad(h));
            gl.w1 += &c.y1.t().dot(&dhpre);
            add_row_sum(&mut gl.b1, &dhpre);
            let dy1 = dr2 + dhpre.dot(&l.w1.t());

            let dr1 = layer_norm_backward(&dy1, &c.ln1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
            gl.wo += &c.concat.t().dot(&dr1);
            add_row_sum(&mut gl.bo, &dr1);
            let dconcat = dr1.dot(&l.wo.t());

            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for h in 0..self.config.n_heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let a = &c.attn[h];
                let dout = dconcat.slice(cols);
                let mut da = dout.dot(&c.v.slice(cols).t());
                match &c.attn_mask {
                    Some(masks) => {
                        dv.slice_mut(cols).assign(&(a * &masks[h]).t().dot(&dout));
                        da *= &masks[h];
                    }
                    None => dv.slice_mut(cols).assign(&a.t().dot(&dout)),
                }
                let row_dot = (&da * a).sum_axis(Axis(1));
                let mut ds = da;
                Zip::from(ds.rows_mut()).and(a.rows()).and(&row_dot).for_each(|mut ds, a, &rd| {
                    Zip::from(&mut ds).and(&a).for_each(|g, &a| *g = a * (*g - rd) * scale);
                });
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            gl.wq += &c.x_in.t().dot(&dq);
            gl.wk += &c.x_in.t().dot(&dk);
            gl.wv += &c.x_in.t().dot(&dv);
            add_row_sum(&mut gl.bq, &dq);
            add_row_sum(&mut gl.bk, &dk);
            add_row_sum(&mut gl.bv, &dv);
            dx = dr1 + dq.dot(&l.wq.t()) + dk.dot(&l.wk.t()) + dv.dot(&l.wv.t());
        }

        if let Some(m) = &cache.emb_mask {
            dx *= m;
        }
        for (t, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(t);
            let mut e = grads.tok_emb.row_mut(id);
            e += &row;
            let mut pe = grads.pos_emb.row_mut(t);
            pe += &row;
        }
    }

    /// Pre-softmax outputs of the classification head (dropout off).
    pub fn logits(&self, instance: &EncodedInstance) -> Result<[f64; 2], ModelError> {
        Ok(self.forward(instance, None)?.logits)
    }

    /// Both softmax outputs (dropout off).
    pub fn softmax(&self, instance: &EncodedInstance) -> Result<[f64; 2], ModelError> {
        Ok(two_way_softmax(self.logits(instance)?))
    }

    /// Positive-class probability (dropout off).
    pub fn probability(&self, instance: &EncodedInstance) -> Result<f64, ModelError> {
        Ok(self.softmax(instance)?[1])
    }

    /// Attention weights per layer and head over the first `true_length`
    /// positions (dropout off).
    pub fn attention_maps(&self, instance: &EncodedInstance) -> Result<Vec<Vec<Array2<f64>>>, ModelError> {
        Ok(self.forward(instance, None)?.layers.into_iter().map(|l| l.attn).collect())
    }

    /// Loss on one instance and its full gradient (dropout off).
    pub fn loss_and_grad(&self, instance: &EncodedInstance) -> Result<(f64, TransformerParams), ModelError> {
        let cache = self.forward(instance, None)?;
        let mut grads = self.params.zeros_like();
        self.backward(&cache, instance.label, 1.0, &mut grads);
        Ok((bce_loss(two_way_softmax(cache.logits)[1], instance.label), grads))
    }

    pub fn loss(&self, instance: &EncodedInstance) -> Result<f64, ModelError> {
        Ok(bce_loss(self.probability(instance)?, instance.label))
    }

    /// Probabilities for many instances, computed in parallel and returned
    /// in input order.
    pub fn probabilities(&self, instances: &[EncodedInstance]) -> Result<Vec<f64>, ModelError> {
        instances.par_iter().map(|i| self.probability(i)).collect()
    }
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2: ArrayView2<f64> = a.insert_axis(Axis(1));
    let b2: ArrayView2<f64> = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

fn evaluate(model: &TransformerClassifier, data: &[EncodedInstance], threshold: f64) -> Result<(f64, f64), ModelError> {
    let probs = model.probabilities(data)?;
    let labels: Vec<u8> = data.iter().map(|i| i.label).collect();
    Ok(loss_and_accuracy(&probs, &labels, threshold))
}

/// Mini-batch AdamW training on mean cross-entropy. Returns the final model,
/// the model with the lowest validation loss, and per-epoch curves.
pub fn train_transformer(
    train: &[EncodedInstance],
    valid: &[EncodedInstance],
    vocab_size: usize,
    max_len: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome<TransformerClassifier>, ModelError> {
    config.validate()?;
    if train.is_empty() && config.epochs > 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let model_config = TransformerConfig::from_train(config, vocab_size, max_len);
    let mut model = TransformerClassifier::new(model_config, config.seed);
    let mut optimizer = AdamW::new(model.params.tensors(), config);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curves = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, model.clone(), 0);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let weight = 1.0 / batch.len() as f64;
            let mut grads = model.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let inst = &train[i];
                let cache = model.forward(inst, Some((&mut dropout_rng, config.dropout)))?;
                batch_loss += bce_loss(two_way_softmax(cache.logits)[1], inst.label);
                model.backward(&cache, inst.label, weight, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            optimizer.step(model.params.tensors_mut(), grads.tensors());
            if !model.params.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        let (valid_loss, valid_acc) = evaluate(&model, valid, config.threshold)?;
        if !valid_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: 0 });
        }
        log::info!(
            "transformer epoch {epoch}: train_loss={train_loss:.4} valid_loss={valid_loss:.4} valid_acc={valid_acc:.4}"
        );
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

    fn tiny() -> TransformerConfig {
        TransformerConfig {
            vocab_size: 12,
            max_len: 8,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            d_head_hidden: 6,
        }
    }

    fn inst(ids: &[u32], max_len: usize, label: u8) -> EncodedInstance {
        let mut v = ids.to_vec();
        let n = v.len();
        v.resize(max_len, 0);
        EncodedInstance { ids: v, true_length: n, label }
    }

    #[test]
    fn layout_round_trip() {
        let m = TransformerClassifier::new(tiny(), 3);
        let tensors: Vec<_> = m.params.tensors().into_iter().cloned().collect();
        assert_eq!(tensors.len(), tiny().tensor_layout().len());
        assert_eq!(TransformerParams::from_tensors(&tiny(), tensors).unwrap(), m.params);
    }

    #[test]
    fn softmax_sums_to_one() {
        let m = TransformerClassifier::new(tiny(), 1);
        let s = m.softmax(&inst(&[2, 5, 7, 3], 8, 1)).unwrap();
        assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pad_region_is_ignored() {
        let m = TransformerClassifier::new(tiny(), 1);
        let a = inst(&[2, 5, 7, 3], 8, 1);
        let mut b = a.clone();
        b.ids[5] = 9;
        b.ids[7] = 11;
        assert_eq!(m.logits(&a).unwrap(), m.logits(&b).unwrap());
    }

    #[test]
    fn id_out_of_range() {
        let m = TransformerClassifier::new(tiny(), 1);
        assert!(matches!(m.probability(&inst(&[2, 40], 8, 0)), Err(ModelError::IdOutOfRange { id: 40, .. })));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = TransformerClassifier::new(tiny(), 4);
        for layer in m.attention_maps(&inst(&[2, 4, 6, 8, 10], 8, 0)).unwrap() {
            for a in layer {
                assert_eq!(a.dim(), (5, 5));
                for row in a.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig {
            epochs: 0,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 8,
            d_head_hidden: 4,
            ..TrainConfig::default()
        };
        let out = train_transformer(&[], &[], 12, 8, &cfg).unwrap();
        let init = TransformerClassifier::new(TransformerConfig::from_train(&cfg, 12, 8), cfg.seed);
        assert_eq!(out.final_model, init);
        assert!(out.curves.is_empty());
    }
}
