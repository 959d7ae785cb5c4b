//! Encoder + linear classifier head.
//!
//! Default stack: flatten → dense(hidden…) → act → dense(embedding_dim) → act = embedding
//! → dense(C) = logits. With `conv` set, two stride-2 3×3 convolutions run
//! before the dense layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tape::{ConvGeometry, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Output channels of the two convolution layers; image inputs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<[usize; 2]>,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

fn default_embedding_dim() -> usize {
    32
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            embedding_dim: default_embedding_dim(),
            activation: default_activation(),
            conv: None,
        }
    }
}

/// Full architecture: layer widths plus the data-dependent input shape and class count.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub config: ModelConfig,
}

impl ModelSpec {
    pub fn new(input_shape: &[usize], classes: usize, config: ModelConfig) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        if classes < 2 {
            return Err(Error::Spec(format!("need at least 2 classes, got {classes}")));
        }
        if config.embedding_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::Spec("layer widths must be positive".into()));
        }
        if config.conv.is_some() && !(2..=3).contains(&input_shape.len()) {
            return Err(Error::Spec(
                "convolution front-end needs [h, w] or [c, h, w] inputs".into(),
            ));
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            classes,
            config,
        })
    }

    pub fn input_features(&self) -> usize {
        self.input_shape.iter().product()
    }

    fn conv_geometries(&self) -> Vec<ConvGeometry> {
        let Some(channels) = self.config.conv else {
            return Vec::new();
        };
        let (mut c, mut h, mut w) = match self.input_shape[..] {
            [h, w] => (1, h, w),
            [c, h, w] => (c, h, w),
            _ => unreachable!("validated in ModelSpec::new"),
        };
        let mut out = Vec::new();
        for oc in channels {
            let g = ConvGeometry {
                in_channels: c,
                height: h,
                width: w,
                out_channels: oc,
                kernel: 3,
                stride: 2,
                pad: 1,
            };
            (c, h, w) = (oc, g.out_height(), g.out_width());
            out.push(g);
        }
        out
    }

    /// `(name, shape)` of every parameter in forward order.
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = Vec::new();
        let mut width = self.input_features();
        for (i, g) in self.conv_geometries().iter().enumerate() {
            layout.push((
                format!("conv{i}.weight"),
                vec![g.out_channels, g.in_channels, g.kernel, g.kernel],
            ));
            layout.push((format!("conv{i}.bias"), vec![g.out_channels]));
            width = g.out_features();
        }
        let widths = self
            .config
            .hidden
            .iter()
            .chain(std::iter::once(&self.config.embedding_dim));
        for (i, &w) in widths.enumerate() {
            layout.push((format!("enc{i}.weight"), vec![width, w]));
            layout.push((format!("enc{i}.bias"), vec![w]));
            width = w;
        }
        layout.push(("head.weight".into(), vec![width, self.classes]));
        layout.push(("head.bias".into(), vec![self.classes]));
        layout
    }
}

/// Per-sample outputs of a forward pass, each `[batch, ·]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub embedding: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
}

/// Tape handles for the outputs of a recorded forward pass.
#[derive(Clone, Copy, Debug)]
pub struct TapeOutput {
    pub embedding: Var,
    pub logits: Var,
    pub probs: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ModelParams,
}

impl Model {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let named = spec
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".bias") {
                    Tensor::zeros(&shape)
                } else {
                    let (fan_in, fan_out) = if shape.len() == 4 {
                        let k = shape[2] * shape[3];
                        (shape[1] * k, shape[0] * k)
                    } else {
                        (shape[0], shape[1])
                    };
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| rng.gen_range(-a..a)).collect();
                    Tensor::new(shape, data).expect("layout shape")
                };
                (name, t)
            })
            .collect();
        let params = ModelParams::new(named).expect("unique layout names");
        Self { spec, params }
    }

    pub fn zeros(spec: ModelSpec) -> Self {
        let named = spec
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let t = Tensor::zeros(&shape);
                (name, t)
            })
            .collect();
        let params = ModelParams::new(named).expect("unique layout names");
        Self { spec, params }
    }

    pub fn from_params(spec: ModelSpec, params: ModelParams) -> Result<Self> {
        Self::zeros(spec.clone()).params.check_compatible(&params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// Registers every parameter as a leaf on `tape`.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.params.len())
            .map(|i| tape.param(i, self.params.tensor(i)))
            .collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let shape = batch.shape();
        let trailing_ok = shape.len() == self.spec.input_shape.len() + 1
            && shape[1..] == self.spec.input_shape[..];
        let flat_ok = shape.len() == 2 && shape[1] == self.spec.input_features();
        if trailing_ok || flat_ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "batch shape {shape:?} does not match model input {:?}",
                self.spec.input_shape
            )))
        }
    }

    /// Records a forward pass of `batch` (`[n, input...]`) using the leaves in `vars`.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &[Var], batch: &Tensor) -> Result<TapeOutput> {
        self.check_batch(batch)?;
        if vars.len() != self.params.len() {
            return Err(Error::Graph(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let act = self.spec.config.activation;
        let apply = |tape: &mut Tape, x: Var| match act {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        };
        let mut h = tape.constant(batch.clone());
        let mut p = 0;
        for g in self.spec.conv_geometries() {
            let z = tape.conv2d(h, vars[p], vars[p + 1], g)?;
            h = apply(tape, z)?;
            p += 2;
        }
        let dense_layers = self.spec.config.hidden.len() + 1;
        for _ in 0..dense_layers {
            let z = tape.matmul(h, vars[p])?;
            let z = tape.add_bias(z, vars[p + 1])?;
            h = apply(tape, z)?;
            p += 2;
        }
        let embedding = h;
        let z = tape.matmul(embedding, vars[p])?;
        let logits = tape.add_bias(z, vars[p + 1])?;
        let probs = tape.softmax(logits)?;
        Ok(TapeOutput {
            embedding,
            logits,
            probs,
        })
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let out = self.forward_on_tape(&mut tape, &vars, batch)?;
        Ok(ForwardOutput {
            embedding: tape.value(out.embedding)?.clone(),
            logits: tape.value(out.logits)?.clone(),
            probs: tape.value(out.probs)?.clone(),
        })
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput(format!("logits {logits:?}")));
    }
    let mut out = vec![0.0; logits.len()];
    super::tape::softmax_row(logits, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(input: &[usize], classes: usize, cfg: ModelConfig) -> ModelSpec {
        ModelSpec::new(input, classes, cfg).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let p = softmax(&[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.73105857863).abs() < 1e-11);
        assert!((p[1] - 0.26894142137).abs() < 1e-11);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            softmax(&[f64::NAN, 0.0]),
            Err(Error::NumericInput(_))
        ));
        assert!(matches!(
            softmax(&[f64::INFINITY]),
            Err(Error::NumericInput(_))
        ));
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let m = Model::zeros(spec(&[5], 4, ModelConfig::default()));
        let batch = Tensor::new(vec![3, 5], (0..15).map(|v| v as f64).collect()).unwrap();
        let out = m.forward(&batch).unwrap();
        assert!(out.logits.data().iter().all(|&v| v == 0.0));
        assert!(out.probs.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn batch_shape_mismatch() {
        let m = Model::init(spec(&[5], 3, ModelConfig::default()), 1);
        let bad = Tensor::zeros(&[2, 4]);
        assert!(matches!(m.forward(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn layout_names_and_widths() {
        let m = Model::init(spec(&[16], 4, ModelConfig::default()), 0);
        let names: Vec<_> = m.params().names().to_vec();
        assert_eq!(
            names,
            ["enc0.weight", "enc0.bias", "enc1.weight", "enc1.bias", "head.weight", "head.bias"]
        );
        assert_eq!(m.params().get("enc1.weight").unwrap().shape(), &[64, 32]);
        assert_eq!(m.params().get("head.weight").unwrap().shape(), &[32, 4]);
    }

    #[test]
    fn conv_front_end_shapes() {
        let cfg = ModelConfig {
            conv: Some([4, 6]),
            hidden: vec![8],
            embedding_dim: 5,
            ..ModelConfig::default()
        };
        let m = Model::init(spec(&[1, 8, 8], 3, cfg), 2);
        // 8x8 → 4x4 → 2x2, 6 channels
        assert_eq!(m.params().get("enc0.weight").unwrap().shape(), &[24, 8]);
        let out = m.forward(&Tensor::filled(&[2, 1, 8, 8], 0.3)).unwrap();
        assert_eq!(out.probs.shape(), &[2, 3]);
        assert_eq!(out.embedding.shape(), &[2, 5]);
    }

    #[test]
    fn conv_rejects_vector_inputs() {
        let cfg = ModelConfig {
            conv: Some([2, 2]),
            ..ModelConfig::default()
        };
        assert!(ModelSpec::new(&[16], 3, cfg).is_err());
    }
}
