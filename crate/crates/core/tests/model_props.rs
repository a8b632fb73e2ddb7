use omp_advisor::models::{bce_loss, bow_featurize, sigmoid, LogisticModel, TransformerConfig, TransformerParams};
use omp_advisor::vocab::{EncodedInstance, CLS, PAD};
use omp_advisor::{PredictionResult, TransformerClassifier, Vocabulary};
use proptest::prelude::*;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const CUBIC: f64 = 0.044_715;
const NORM_EPS: f64 = 1e-5;

type Mat = Vec<Vec<f64>>;

fn small_config(vocab_size: usize) -> TransformerConfig {
    TransformerConfig { vocab_size, max_len: 24, d_model: 16, n_heads: 4, n_layers: 2, d_ff: 32, d_head_hidden: 8 }
}

fn to_mat(a: &ndarray::Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn add_bias(a: &Mat, b: &Mat) -> Mat {
    a.iter().map(|r| r.iter().zip(&b[0]).map(|(x, y)| x + y).collect()).collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn layer_norm(a: &Mat, g: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            r.iter().enumerate().map(|(j, x)| (x - mean) / (var + NORM_EPS).sqrt() * g[0][j] + b[0][j]).collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + CUBIC * x * x * x)).tanh())
}

/// Full-length forward pass with an additive `-inf` mask on padded keys.
fn naive_logits(p: &TransformerParams, cfg: &TransformerConfig, inst: &EncodedInstance) -> [f64; 2] {
    let len = cfg.max_len;
    let tok = to_mat(&p.tok_emb);
    let pos = to_mat(&p.pos_emb);
    let mut x: Mat =
        (0..len).map(|t| (0..cfg.d_model).map(|j| tok[inst.ids[t] as usize][j] + pos[t][j]).collect()).collect();
    let dh = cfg.d_model / cfg.n_heads;
    for l in &p.layers {
        let q = add_bias(&matmul(&x, &to_mat(&l.wq)), &to_mat(&l.bq));
        let k = add_bias(&matmul(&x, &to_mat(&l.wk)), &to_mat(&l.bk));
        let v = add_bias(&matmul(&x, &to_mat(&l.wv)), &to_mat(&l.bv));
        let mut concat = vec![vec![0.0; cfg.d_model]; len];
        for h in 0..cfg.n_heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..len {
                let scores: Vec<f64> = (0..len)
                    .map(|j| {
                        if j >= inst.true_length {
                            f64::NEG_INFINITY
                        } else {
                            cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt()
                        }
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    concat[i][c] = (0..len).map(|j| e[j] / z * v[j][c]).sum();
                }
            }
        }
        let attn = add_bias(&matmul(&concat, &to_mat(&l.wo)), &to_mat(&l.bo));
        let y1 = layer_norm(&add(&x, &attn), &to_mat(&l.ln1_g), &to_mat(&l.ln1_b));
        let hidden: Mat = add_bias(&matmul(&y1, &to_mat(&l.w1)), &to_mat(&l.b1))
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let ff = add_bias(&matmul(&hidden, &to_mat(&l.w2)), &to_mat(&l.b2));
        x = layer_norm(&add(&y1, &ff), &to_mat(&l.ln2_g), &to_mat(&l.ln2_b));
    }
    let cls = vec![x[0].clone()];
    let h: Mat = add_bias(&matmul(&cls, &to_mat(&p.head_w1)), &to_mat(&p.head_b1))
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let out = add_bias(&matmul(&h, &to_mat(&p.head_w2)), &to_mat(&p.head_b2));
    [out[0][0], out[0][1]]
}

fn instance(vocab_size: usize, max_len: usize) -> impl Strategy<Value = EncodedInstance> {
    (1..max_len, prop::collection::vec(3..vocab_size as u32, max_len)).prop_map(move |(n, body)| {
        let ids = (0..max_len)
            .map(|t| {
                if t == 0 {
                    CLS
                } else if t <= n {
                    body[t]
                } else {
                    PAD
                }
            })
            .collect();
        EncodedInstance { ids, true_length: n + 1, label: 1 }
    })
}

/// Randomizes biases and layer-norm parameters so their paths are exercised.
fn perturbed(model: &mut TransformerClassifier, seed: u64) {
    let mut state = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    for t in model.params.tensors_mut() {
        if t.nrows() == 1 {
            t.mapv_inplace(|v| {
                state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
                v + ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4
            });
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_matches_naive_masked_oracle(seed in any::<u64>(), inst in instance(40, 24)) {
        let cfg = small_config(40);
        let mut model = TransformerClassifier::new(cfg, seed);
        perturbed(&mut model, seed);
        let got = model.logits(&inst).unwrap();
        let want = naive_logits(&model.params, &cfg, &inst);
        for c in 0..2 {
            prop_assert!((got[c] - want[c]).abs() <= 1e-9 * (1.0 + want[c].abs()), "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn pad_content_never_matters(seed in any::<u64>(), inst in instance(40, 24), fill in 0u32..40) {
        let model = TransformerClassifier::new(small_config(40), seed);
        let mut other = inst.clone();
        for id in &mut other.ids[inst.true_length..] {
            *id = fill;
        }
        prop_assert_eq!(model.logits(&inst).unwrap(), model.logits(&other).unwrap());
    }

    #[test]
    fn probabilities_and_attention_are_normalized(seed in any::<u64>(), inst in instance(40, 24)) {
        let model = TransformerClassifier::new(small_config(40), seed);
        let s = model.softmax(&inst).unwrap();
        prop_assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
        prop_assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
        for layer in model.attention_maps(&inst).unwrap() {
            prop_assert_eq!(layer.len(), 4);
            for head in layer {
                prop_assert_eq!(head.shape(), &[inst.true_length, inst.true_length]);
                for row in head.rows() {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                    prop_assert!(row.iter().all(|&a| a >= 0.0));
                }
            }
        }
    }

    #[test]
    fn bce_is_symmetric_and_non_negative(p in 0.0f64..=1.0) {
        let (a, b) = (bce_loss(p, 1), bce_loss(1.0 - p, 0));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{} vs {}", a, b);
        prop_assert!(bce_loss(p, 0) >= 0.0 && bce_loss(p, 1) >= 0.0);
        prop_assert!(bce_loss(p, 1).is_finite());
    }

    #[test]
    fn threshold_rule(p in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        prop_assert_eq!(PredictionResult::from_probability(p, t).label, u8::from(p > t));
    }

    #[test]
    fn bow_ignores_token_order(
        tokens in prop::collection::vec("[a-d]|x", 1..40),
        weights in prop::collection::vec(-3.0f64..3.0, 8),
        bias in -1.0f64..1.0,
        rot in 0usize..40,
    ) {
        let vocab = Vocabulary::build(&[vec!["a", "b", "c", "d"]], 1, 110).unwrap();
        let model = LogisticModel { weights: weights[..vocab.len()].to_vec(), bias };
        let mut shuffled = tokens.clone();
        shuffled.rotate_left(rot % tokens.len());
        shuffled.reverse();
        let a = model.probability(&bow_featurize(&tokens, &vocab));
        prop_assert_eq!(a, model.probability(&bow_featurize(&shuffled, &vocab)));

        let dense = bow_featurize(&tokens, &vocab).to_dense(vocab.len());
        let z = bias + dense.iter().zip(&model.weights).map(|(x, w)| x * w).sum::<f64>();
        prop_assert!((a - sigmoid(z)).abs() < 1e-12);
        prop_assert!((a - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
    }
}

#[test]
fn untrained_model_is_uncommitted() {
    let cfg = TransformerConfig { vocab_size: 60, max_len: 110, ..small_config(60) };
    let mut total = 0.0;
    let mut count = 0;
    for seed in 0..8u64 {
        let model = TransformerClassifier::new(cfg, seed);
        for k in 0..8u32 {
            let n = 10 + 12 * k as usize;
            let mut ids = vec![PAD; 110];
            ids[0] = CLS;
            for (t, id) in ids.iter_mut().enumerate().take(n).skip(1) {
                *id = 3 + ((t as u32 * 7 + k * 13 + seed as u32) % 57);
            }
            total += model.probability(&EncodedInstance { ids, true_length: n, label: 0 }).unwrap();
            count += 1;
        }
    }
    let mean = total / f64::from(count);
    assert!((mean - 0.5).abs() < 0.15, "mean initial probability {mean}");
}
