//! Naive reference implementations shared by the integration tests.
#![allow(dead_code)]

use adacm::nn::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect()
}

/// Rows on the simplex, some of them sharply peaked.
pub fn random_probs(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let sharp = rng.gen_range(0.5..8.0);
            let e: Vec<f64> = (0..c).map(|_| (rng.gen::<f64>() * sharp).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn oracle_ce(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..probs.len() {
        let p = probs[i][labels[i]];
        s += -(if p < 1e-12 { 1e-12 } else { p }).ln();
    }
    s / probs.len() as f64
}

pub fn oracle_avg(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..a.len() {
        out.push(0.5 * a[k] + 0.5 * b[k]);
    }
    out
}

pub fn oracle_cos(u: &[f64], v: &[f64]) -> f64 {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for k in 0..u.len() {
        uv += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

pub fn oracle_contrastive(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> f64 {
    let n = a.len();
    if n <= 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let num = (oracle_cos(&a[i], &b[i]) / tau).exp();
        let mut den = 0.0;
        for j in 0..n {
            if j != i {
                den += (oracle_cos(&a[i], &a[j]) / tau).exp();
            }
        }
        for k in 0..n {
            den += (oracle_cos(&a[i], &b[k]) / tau).exp();
        }
        total += -(num / den).ln();
    }
    total / n as f64
}

pub fn oracle_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k] > row[best] {
            best = k;
        }
    }
    best
}

pub fn oracle_raw_margins(probs: &[Vec<f64>], labels: &[usize], previous: &[f64]) -> Vec<f64> {
    let c = previous.len();
    let mut out = Vec::new();
    for class in 0..c {
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..probs.len() {
            if labels[i] == class && oracle_argmax(&probs[i]) == class {
                sum += probs[i][class];
                count += 1;
            }
        }
        out.push(if count == 0 { previous[class] } else { sum / count as f64 });
    }
    out
}

pub fn oracle_effective(raw: f64, scale: f64, growth: f64, epoch: usize) -> f64 {
    let g = growth.powi(epoch as i32);
    scale * raw * g / (g + 1.0)
}

/// `(subset I as (row, class), subset II rows)`
pub fn oracle_partition(rows: &[Vec<f64>], thresholds: &[f64]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut one = Vec::new();
    let mut two = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let c = oracle_argmax(r);
        if r[c] >= thresholds[c] {
            one.push((i, c));
        } else {
            two.push(i);
        }
    }
    (one, two)
}

pub fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let mut m = z[0];
    for &v in z {
        if v > m {
            m = v;
        }
    }
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Dense tanh network read from the `enc{i}` / `head` parameter layout.
pub struct NaiveNet {
    /// `(weight[in][out], bias[out])`
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    pub head: (Vec<Vec<f64>>, Vec<f64>),
}

fn read_layer(params: &ModelParams, prefix: &str) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w = params.get(&format!("{prefix}.weight")).unwrap();
    let b = params.get(&format!("{prefix}.bias")).unwrap();
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    let wm = (0..rows)
        .map(|r| (0..cols).map(|c| w.data()[r * cols + c]).collect())
        .collect();
    (wm, b.data().to_vec())
}

impl NaiveNet {
    pub fn from_params(params: &ModelParams) -> Self {
        let mut layers = Vec::new();
        let mut i = 0;
        while params.get(&format!("enc{i}.weight")).is_some() {
            layers.push(read_layer(params, &format!("enc{i}")));
            i += 1;
        }
        Self {
            layers,
            head: read_layer(params, "head"),
        }
    }

    fn affine(x: &[f64], (w, b): &(Vec<Vec<f64>>, Vec<f64>)) -> Vec<f64> {
        let mut out = b.clone();
        for (i, xi) in x.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += xi * w[i][j];
            }
        }
        out
    }

    /// `(embedding, probabilities)`
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = Self::affine(&h, layer).iter().map(|v| v.tanh()).collect();
        }
        let z = Self::affine(&h, &self.head);
        (h.clone(), oracle_softmax(&z))
    }
}

/// Gradients of `-ln p_y(x)` for a one-layer tanh encoder plus linear head,
/// flattened in parameter order `enc0.weight, enc0.bias, head.weight, head.bias`.
pub fn one_layer_ce_grad(net: &NaiveNet, x: &[f64], y: usize) -> Vec<f64> {
    assert_eq!(net.layers.len(), 1);
    let (w1, _) = &net.layers[0];
    let (w2, _) = &net.head;
    let (e, p) = net.forward(x);
    let c = p.len();
    let k = e.len();
    let delta: Vec<f64> = (0..c).map(|j| p[j] - if j == y { 1.0 } else { 0.0 }).collect();
    let mut de = vec![0.0; k];
    for i in 0..k {
        for j in 0..c {
            de[i] += w2[i][j] * delta[j];
        }
    }
    let dz: Vec<f64> = (0..k).map(|i| de[i] * (1.0 - e[i] * e[i])).collect();
    let mut g = Vec::new();
    for xi in x.iter().take(w1.len()) {
        for dzj in &dz {
            g.push(xi * dzj);
        }
    }
    g.extend(&dz);
    for ei in &e {
        for dj in &delta {
            g.push(ei * dj);
        }
    }
    g.extend(&delta);
    g
}

/// One bias-corrected Adam step from zero moments.
pub fn oracle_first_adam_step(params: &[f64], grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    params
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let m = (1.0 - b1) * g / (1.0 - b1);
            let v = (1.0 - b2) * g * g / (1.0 - b2);
            p - lr * m / (v.sqrt() + eps)
        })
        .collect()
}
