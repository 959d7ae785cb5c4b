//! Objective terms.
//!
//! Each term exists twice: a plain evaluator over rows of `f64`, and a
//! tape-recorded builder used for training. Labels are class indices; a class
//! index `c` stands for the one-hot vector with a 1 at position `c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Var};

/// Floor applied inside the logarithm of both cross-entropy terms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// λ₁, supervised cross-entropy.
    #[serde(default = "default_supervised")]
    pub supervised: f64,
    /// λ₂, pseudo-label cross-entropy on subset I.
    #[serde(default = "default_unsupervised")]
    pub unsupervised: f64,
    /// λ₃, contrastive term on subset II.
    #[serde(default = "default_contrastive")]
    pub contrastive: f64,
    /// τ
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_supervised() -> f64 {
    0.5
}
fn default_unsupervised() -> f64 {
    1.0
}
fn default_contrastive() -> f64 {
    0.1
}
fn default_temperature() -> f64 {
    0.1
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            supervised: default_supervised(),
            unsupervised: default_unsupervised(),
            contrastive: default_contrastive(),
            temperature: default_temperature(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("supervised", self.supervised),
            ("unsupervised", self.unsupervised),
            ("contrastive", self.contrastive),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Spec(format!("loss weight {name}={w} must be finite and >= 0")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Spec(format!("temperature {} must be > 0", self.temperature)));
        }
        Ok(())
    }
}

fn cross_entropy<R: AsRef<[f64]>>(probs: &[R], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &label) in probs.iter().zip(labels) {
        let row = row.as_ref();
        let p = *row.get(label).ok_or_else(|| {
            Error::Alignment(format!("label {label} outside {} classes", row.len()))
        })?;
        total -= p.max(LOG_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

/// Mean cross-entropy of labeled predictions.
pub fn supervised_ce<R: AsRef<[f64]>>(probs: &[R], labels: &[usize]) -> Result<f64> {
    cross_entropy(probs, labels)
}

/// Mean cross-entropy of strong-view predictions against pseudo labels; 0 when empty.
pub fn unsupervised_ce<R: AsRef<[f64]>>(strong_probs: &[R], pseudo_labels: &[usize]) -> Result<f64> {
    cross_entropy(strong_probs, pseudo_labels)
}

/// Elementwise mean of two distributions.
pub fn average_distribution(pa: &[f64], pb: &[f64]) -> Result<Vec<f64>> {
    if pa.len() != pb.len() {
        return Err(Error::Alignment(format!("{} vs {} classes", pa.len(), pb.len())));
    }
    Ok(pa.iter().zip(pb).map(|(a, b)| 0.5 * (a + b)).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Alignment(format!("{} vs {} dimensions", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateEmbedding("zero-norm vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// One-sided InfoNCE over paired weak-view embeddings.
///
/// For anchor `a_i` the positive is `b_i`; the denominator sums over `a_j`
/// (`j ≠ i`) and every `b_k` including `k = i`. Returns 0 for fewer than two pairs.
pub fn contrastive_loss<R: AsRef<[f64]>>(emb_a: &[R], emb_b: &[R], temperature: f64) -> Result<f64> {
    if emb_a.len() != emb_b.len() {
        return Err(Error::Alignment(format!(
            "{} a-view vs {} b-view embeddings",
            emb_a.len(),
            emb_b.len()
        )));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Spec(format!("temperature {temperature} must be > 0")));
    }
    let n = emb_a.len();
    for e in emb_a.iter().chain(emb_b) {
        if norm(e.as_ref()) == 0.0 {
            return Err(Error::DegenerateEmbedding("zero-norm embedding".into()));
        }
    }
    if n <= 1 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        let a = emb_a[i].as_ref();
        let pos = cosine_sim(a, emb_b[i].as_ref())? / temperature;
        let mut den = 0.0;
        for j in 0..n {
            if j != i {
                den += (cosine_sim(a, emb_a[j].as_ref())? / temperature).exp();
            }
            den += (cosine_sim(a, emb_b[j].as_ref())? / temperature).exp();
        }
        total -= pos - den.ln();
    }
    Ok(total / n as f64)
}

pub fn total_loss(l_s: f64, l_u: f64, l_c: f64, weights: &LossWeights) -> f64 {
    weights.supervised * l_s + weights.unsupervised * l_u + weights.contrastive * l_c
}

/// Tape-recorded mean cross-entropy of probability rows against class labels.
/// An empty batch yields a constant 0.
pub fn cross_entropy_on_tape(tape: &mut Tape, probs: Option<Var>, labels: &[usize]) -> Result<Var> {
    let Some(probs) = probs else {
        if !labels.is_empty() {
            return Err(Error::Alignment(format!("no rows for {} labels", labels.len())));
        }
        return Ok(tape.scalar_constant(0.0));
    };
    let (rows, classes) = tape.value(probs)?.matrix_dims();
    if rows != labels.len() {
        return Err(Error::Alignment(format!("{rows} probability rows for {} labels", labels.len())));
    }
    let mut mask = vec![0.0; rows * classes];
    for (i, &c) in labels.iter().enumerate() {
        if c >= classes {
            return Err(Error::Alignment(format!("label {c} outside {classes} classes")));
        }
        mask[i * classes + c] = 1.0;
    }
    let mask = tape.constant(Tensor::new(vec![rows, classes], mask)?);
    let logp = tape.ln_clamped(probs, LOG_FLOOR)?;
    let picked = tape.mul(logp, mask)?;
    let s = tape.sum(picked)?;
    tape.scale(s, -1.0 / rows as f64)
}

/// Tape-recorded [`contrastive_loss`]; `None` or a single pair gives a constant 0.
pub fn contrastive_on_tape(
    tape: &mut Tape,
    pairs: Option<(Var, Var)>,
    temperature: f64,
) -> Result<Var> {
    let Some((a, b)) = pairs else {
        return Ok(tape.scalar_constant(0.0));
    };
    let (n, _) = tape.value(a)?.matrix_dims();
    if tape.value(b)?.matrix_dims() != tape.value(a)?.matrix_dims() {
        return Err(Error::Alignment("a/b embedding shapes differ".into()));
    }
    let na = tape.row_normalize(a)?;
    let nb = tape.row_normalize(b)?;
    if n <= 1 {
        return Ok(tape.scalar_constant(0.0));
    }
    let inv_t = 1.0 / temperature;
    let saa = tape.matmul_transpose_b(na, na)?;
    let saa = tape.scale(saa, inv_t)?;
    let sab = tape.matmul_transpose_b(na, nb)?;
    let sab = tape.scale(sab, inv_t)?;

    let mut off_diag = vec![1.0; n * n];
    let mut diag = vec![0.0; n * n];
    for i in 0..n {
        off_diag[i * n + i] = 0.0;
        diag[i * n + i] = 1.0;
    }
    let off_diag = tape.constant(Tensor::new(vec![n, n], off_diag)?);
    let diag = tape.constant(Tensor::new(vec![n, n], diag)?);

    let eaa = tape.exp(saa)?;
    let eaa = tape.mul(eaa, off_diag)?;
    let eab = tape.exp(sab)?;
    let den_a = tape.row_sum(eaa)?;
    let den_b = tape.row_sum(eab)?;
    let den = tape.add(den_a, den_b)?;
    let log_den = tape.ln_clamped(den, f64::MIN_POSITIVE)?;
    let pos = tape.mul(sab, diag)?;
    let pos = tape.row_sum(pos)?;
    let per_anchor = tape.sub(log_den, pos)?;
    let s = tape.sum(per_anchor)?;
    tape.scale(s, 1.0 / n as f64)
}

/// Weighted sum of the three terms on the tape.
pub fn total_on_tape(tape: &mut Tape, l_s: Var, l_u: Var, l_c: Var, w: &LossWeights) -> Result<Var> {
    let s = tape.scale(l_s, w.supervised)?;
    let u = tape.scale(l_u, w.unsupervised)?;
    let c = tape.scale(l_c, w.contrastive)?;
    let su = tape.add(s, u)?;
    tape.add(su, c)
}
