//! The training loop and its baseline modes.
//!
//! Each epoch starts with a margin pass over weakly augmented labeled data,
//! then runs `max(⌈N_u/B_u⌉, ⌈N_s/B_s⌉)` batches. Every batch pairs a
//! labeled batch with an unlabeled batch drawn from independent, cycling,
//! shuffled streams.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{derive_seed, view_rng, AugmentConfig, Augmenter, ViewKind};
use crate::data::{stack, Dataset, UnlabeledSet};
use crate::error::{Error, Result};
use crate::losses::{contrastive_on_tape, cross_entropy_on_tape, total_on_tape, LossWeights};
use crate::margin::{
    argmax, collect_correct, partition_batch, partition_with, ConfidenceMargin, MarginSchedule, Partition,
};
use crate::metrics::{self, EpochRow, RunMetrics, SealedLabels};
use crate::nn::{adam_update, AdamConfig, AdamState, Model, ModelConfig, ModelSpec, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// Labeled cross-entropy only; the unlabeled pool is ignored.
    Supervised,
    /// One global threshold; samples below it are dropped.
    FixedThreshold(f64),
    AdaCm,
    AdaCmNoContrastive,
    ContrastiveOnly,
}

impl Mode {
    fn uses_unlabeled(self) -> bool {
        self != Mode::Supervised
    }

    /// Loss weights after the mode's forced zeros.
    pub fn effective_weights(self, w: &LossWeights) -> LossWeights {
        let mut w = *w;
        match self {
            Mode::Supervised => {
                w.unsupervised = 0.0;
                w.contrastive = 0.0;
            }
            Mode::FixedThreshold(_) | Mode::AdaCmNoContrastive => w.contrastive = 0.0,
            Mode::ContrastiveOnly => w.unsupervised = 0.0,
            Mode::AdaCm => {}
        }
        w
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Supervised => f.write_str("supervised"),
            Mode::FixedThreshold(t) => write!(f, "fixed-threshold:{t}"),
            Mode::AdaCm => f.write_str("ada-cm"),
            Mode::AdaCmNoContrastive => f.write_str("ada-cm-no-contrastive"),
            Mode::ContrastiveOnly => f.write_str("contrastive-only"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "supervised" => Mode::Supervised,
            "ada-cm" => Mode::AdaCm,
            "ada-cm-no-contrastive" => Mode::AdaCmNoContrastive,
            "contrastive-only" => Mode::ContrastiveOnly,
            _ => {
                let t = s
                    .strip_prefix("fixed-threshold:")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Spec(format!(
                            "unknown mode {s:?} (expected supervised, fixed-threshold:<FT>, ada-cm, \
                             ada-cm-no-contrastive or contrastive-only)"
                        ))
                    })?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::Spec(format!("fixed threshold {t} not in (0,1)")));
                }
                Mode::FixedThreshold(t)
            }
        })
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the loss terms update the parameters within one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateScheme {
    /// One step on the weighted total.
    #[default]
    Combined,
    /// Unweighted steps on `l_u`, `l_c`, `l_s` in turn, re-running the forward pass before each.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub labeled_batch: usize,
    #[serde(default = "default_batch")]
    pub unlabeled_batch: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub margin: MarginSchedule,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub update: UpdateScheme,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> Mode {
    Mode::AdaCm
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    16
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            epochs: default_epochs(),
            labeled_batch: default_batch(),
            unlabeled_batch: default_batch(),
            optimizer: AdamConfig::default(),
            weights: LossWeights::default(),
            margin: MarginSchedule::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            update: UpdateScheme::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.labeled_batch == 0 || self.unlabeled_batch == 0 {
            return Err(Error::Spec("epochs and batch sizes must be at least 1".into()));
        }
        if let Mode::FixedThreshold(t) = self.mode {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Spec(format!("fixed threshold {t} not in (0,1)")));
            }
        }
        self.optimizer.validate()?;
        self.weights.validate()?;
        self.margin.validate()?;
        self.augment.validate()
    }
}

/// Subset I is every row with `max p̃ ≥ ft`; the rest is subset II.
pub fn fixed_threshold_partition<R: AsRef<[f64]>>(avg_probs: &[R], ft: f64) -> Partition {
    partition_with(avg_probs, |_| ft)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class: Vec<Option<f64>>,
    pub predictions: Vec<usize>,
}

/// Un-augmented test accuracy with lowest-index tie-breaking.
pub fn evaluate(model: &Model, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Spec("empty test set".into()));
    }
    let all: Vec<usize> = (0..test.len()).collect();
    let out = model.forward(&test.batch(&all)?)?;
    let predictions: Vec<usize> = out.probs.row_iter().map(argmax).collect();
    let (accuracy, per_class) = metrics::accuracy(&predictions, test.labels(), test.classes())?;
    Ok(Evaluation {
        accuracy,
        per_class,
        predictions,
    })
}

/// Inputs to a training run. The unlabeled pool carries no labels; `truth`
/// is only forwarded to the metrics module for pseudo-label precision.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub labeled: &'a Dataset,
    pub unlabeled: &'a UnlabeledSet,
    pub test: &'a Dataset,
    pub truth: Option<&'a SealedLabels>,
}

/// One sample drawn from a stream: its index and how many full passes
/// the stream had completed this epoch when it was drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub index: usize,
    pub visit: usize,
}

/// Per-batch callback passed to [`train_model`].
pub type Observer<'o> = &'o mut dyn FnMut(&BatchReport, &Model);

/// What happened in one batch, handed to the observer after the update.
#[derive(Clone, Debug)]
pub struct BatchReport {
    pub epoch: usize,
    pub batch: usize,
    pub labeled: Vec<Draw>,
    pub unlabeled: Vec<Draw>,
    pub raw_margins: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub labeled_inputs: Vec<Vec<f64>>,
    pub weak_a: Vec<Vec<f64>>,
    pub weak_b: Vec<Vec<f64>>,
    pub strong: Vec<Vec<f64>>,
    pub avg_probs: Vec<Vec<f64>>,
    pub partition: Partition,
    pub l_s: f64,
    pub l_u: f64,
    pub l_c: f64,
    pub l_total: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub metrics: RunMetrics,
    pub adam_steps: u64,
}

const STREAM_MODEL: u64 = 1;
const STREAM_LABELED: u64 = 2;
const STREAM_UNLABELED: u64 = 3;
const STREAM_AUGMENT: u64 = 4;

/// Seed of the freshly initialized model for a run seed.
pub fn model_seed(seed: u64) -> u64 {
    derive_seed(&[seed, STREAM_MODEL])
}

/// Per-epoch cycling shuffled order over `0..n`.
struct Stream {
    n: usize,
    key: u64,
    epoch: usize,
    order: Vec<usize>,
    pos: usize,
    pass: usize,
}

impl Stream {
    fn new(n: usize, seed: u64, stream: u64) -> Self {
        Self {
            n,
            key: derive_seed(&[seed, stream]),
            epoch: 0,
            order: Vec::new(),
            pos: 0,
            pass: 0,
        }
    }

    fn start_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
        self.pass = 0;
        self.reshuffle();
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.key, self.epoch as u64, self.pass as u64]));
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    fn take(&mut self, k: usize) -> Vec<Draw> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k && self.n > 0 {
            if self.pos == self.n {
                self.pass += 1;
                self.reshuffle();
            }
            out.push(Draw {
                index: self.order[self.pos],
                visit: self.pass,
            });
            self.pos += 1;
        }
        out
    }
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    t.row_iter().map(<[f64]>::to_vec).collect()
}

struct Trainer<'a, 'o> {
    config: &'a TrainConfig,
    data: TrainData<'a>,
    model: Model,
    adam: AdamState,
    margin: ConfidenceMargin,
    augmenter: Augmenter,
    aug_seed: u64,
    weights: LossWeights,
    observer: Option<Observer<'o>>,
}

#[derive(Default)]
struct EpochTotals {
    batches: usize,
    l_s: f64,
    l_u: f64,
    l_c: f64,
    l_total: f64,
    drawn: usize,
    confident: usize,
    correct: usize,
}

struct Views {
    labeled: Vec<Vec<f64>>,
    weak_a: Vec<Vec<f64>>,
    weak_b: Vec<Vec<f64>>,
    strong: Vec<Vec<f64>>,
}

impl<'a, 'o> Trainer<'a, 'o> {
    fn shape(&self) -> &[usize] {
        self.data.labeled.sample_shape()
    }

    fn tensor(&self, rows: &[Vec<f64>]) -> Result<Tensor> {
        stack(self.shape(), rows.iter().cloned())
    }

    fn margin_pass(&mut self, epoch: usize) -> Result<()> {
        let s = self.data.labeled;
        let views: Vec<Vec<f64>> = (0..s.len())
            .map(|i| {
                let mut rng = view_rng(self.aug_seed, epoch, i, ViewKind::Margin, 0);
                self.augmenter.weak(s.sample(i), &mut rng)
            })
            .collect();
        let probs = self.model.forward(&self.tensor(&views)?)?.probs;
        let correct = collect_correct(&rows_of(&probs), s.labels());
        self.margin.refresh(epoch, &correct);
        Ok(())
    }

    fn views(&self, epoch: usize, labeled: &[Draw], unlabeled: &[Draw]) -> Views {
        let aug = &self.augmenter;
        let view = |d: &Draw, kind: ViewKind, sample: &[f64], strong: bool| {
            let mut rng = view_rng(self.aug_seed, epoch, d.index, kind, d.visit);
            if strong {
                aug.strong(sample, &mut rng)
            } else {
                aug.weak(sample, &mut rng)
            }
        };
        let s = self.data.labeled;
        let u = self.data.unlabeled;
        Views {
            labeled: labeled
                .iter()
                .map(|d| view(d, ViewKind::Labeled, s.sample(d.index), false))
                .collect(),
            weak_a: unlabeled
                .iter()
                .map(|d| view(d, ViewKind::WeakA, u.sample(d.index), false))
                .collect(),
            weak_b: unlabeled
                .iter()
                .map(|d| view(d, ViewKind::WeakB, u.sample(d.index), false))
                .collect(),
            strong: unlabeled
                .iter()
                .map(|d| view(d, ViewKind::Strong, u.sample(d.index), true))
                .collect(),
        }
    }

    fn partition(&self, avg: &[Vec<f64>]) -> Result<Partition> {
        match self.config.mode {
            Mode::FixedThreshold(ft) => Ok(fixed_threshold_partition(avg, ft)),
            _ => partition_batch(avg, &self.margin.effective_all()),
        }
    }

    /// Forward of both weak views; returns the handles and `p̃`.
    fn weak_pair(&self, tape: &mut Tape, vars: &[Var], views: &Views) -> Result<(Var, Var, Vec<Vec<f64>>)> {
        let a = self.model.forward_on_tape(tape, vars, &self.tensor(&views.weak_a)?)?;
        let b = self.model.forward_on_tape(tape, vars, &self.tensor(&views.weak_b)?)?;
        let pa = tape.value(a.probs)?;
        let pb = tape.value(b.probs)?;
        let avg = pa
            .row_iter()
            .zip(pb.row_iter())
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p + q) / 2.0).collect())
            .collect();
        Ok((a.embedding, b.embedding, avg))
    }

    fn supervised_term(&self, tape: &mut Tape, vars: &[Var], views: &Views, labels: &[usize]) -> Result<Var> {
        let out = self.model.forward_on_tape(tape, vars, &self.tensor(&views.labeled)?)?;
        cross_entropy_on_tape(tape, Some(out.probs), labels)
    }

    fn unsupervised_term(&self, tape: &mut Tape, vars: &[Var], views: &Views, part: &Partition) -> Result<Var> {
        if part.confident.is_empty() {
            return cross_entropy_on_tape(tape, None, &[]);
        }
        let rows: Vec<Vec<f64>> = part.confident.iter().map(|p| views.strong[p.index].clone()).collect();
        let out = self.model.forward_on_tape(tape, vars, &self.tensor(&rows)?)?;
        cross_entropy_on_tape(tape, Some(out.probs), &part.pseudo_classes())
    }

    fn contrastive_term(&self, tape: &mut Tape, ea: Var, eb: Var, part: &Partition) -> Result<Var> {
        if part.uncertain.is_empty() {
            return contrastive_on_tape(tape, None, self.weights.temperature);
        }
        let a = tape.select_rows(ea, &part.uncertain)?;
        let b = tape.select_rows(eb, &part.uncertain)?;
        contrastive_on_tape(tape, Some((a, b)), self.weights.temperature)
    }

    fn step(&mut self, tape: &Tape, loss: Var) -> Result<()> {
        let grads = tape.backward(loss, self.model.params())?;
        adam_update(self.model.params_mut(), &grads, &mut self.adam)
    }

    fn batch(&mut self, epoch: usize, batch: usize, labeled: Vec<Draw>, unlabeled: Vec<Draw>) -> Result<BatchReport> {
        let views = self.views(epoch, &labeled, &unlabeled);
        let labels: Vec<usize> = labeled.iter().map(|d| self.data.labeled.labels()[d.index]).collect();
        let w = self.weights;
        let (l_s, l_u, l_c, avg, part) = match self.config.update {
            UpdateScheme::Combined => {
                let mut tape = Tape::new();
                let vars = self.model.register(&mut tape);
                let ls = self.supervised_term(&mut tape, &vars, &views, &labels)?;
                let (lu, lc, avg, part) = if unlabeled.is_empty() {
                    let z = tape.scalar_constant(0.0);
                    (z, z, Vec::new(), Partition::default())
                } else {
                    let (ea, eb, avg) = self.weak_pair(&mut tape, &vars, &views)?;
                    let part = self.partition(&avg)?;
                    let lu = if w.unsupervised > 0.0 {
                        self.unsupervised_term(&mut tape, &vars, &views, &part)?
                    } else {
                        tape.scalar_constant(0.0)
                    };
                    let lc = if w.contrastive > 0.0 {
                        self.contrastive_term(&mut tape, ea, eb, &part)?
                    } else {
                        tape.scalar_constant(0.0)
                    };
                    (lu, lc, avg, part)
                };
                let total = total_on_tape(&mut tape, ls, lu, lc, &w)?;
                let values = (tape.scalar(ls)?, tape.scalar(lu)?, tape.scalar(lc)?);
                self.check_finite(epoch, batch, values, tape.scalar(total)?)?;
                self.step(&tape, total)?;
                (values.0, values.1, values.2, avg, part)
            }
            UpdateScheme::Sequential => {
                let (avg, part) = if unlabeled.is_empty() {
                    (Vec::new(), Partition::default())
                } else {
                    let mut tape = Tape::new();
                    let vars = self.model.register(&mut tape);
                    let (_, _, avg) = self.weak_pair(&mut tape, &vars, &views)?;
                    let part = self.partition(&avg)?;
                    (avg, part)
                };
                let mut lu = 0.0;
                if w.unsupervised > 0.0 && !part.confident.is_empty() {
                    let mut tape = Tape::new();
                    let vars = self.model.register(&mut tape);
                    let loss = self.unsupervised_term(&mut tape, &vars, &views, &part)?;
                    lu = tape.scalar(loss)?;
                    self.check_finite(epoch, batch, (0.0, lu, 0.0), lu)?;
                    self.step(&tape, loss)?;
                }
                let mut lc = 0.0;
                if w.contrastive > 0.0 && part.uncertain.len() > 1 {
                    let mut tape = Tape::new();
                    let vars = self.model.register(&mut tape);
                    let (ea, eb, _) = self.weak_pair(&mut tape, &vars, &views)?;
                    let loss = self.contrastive_term(&mut tape, ea, eb, &part)?;
                    lc = tape.scalar(loss)?;
                    self.check_finite(epoch, batch, (0.0, lu, lc), lc)?;
                    self.step(&tape, loss)?;
                }
                let mut tape = Tape::new();
                let vars = self.model.register(&mut tape);
                let loss = self.supervised_term(&mut tape, &vars, &views, &labels)?;
                let ls = tape.scalar(loss)?;
                self.check_finite(epoch, batch, (ls, lu, lc), ls)?;
                if w.supervised > 0.0 {
                    self.step(&tape, loss)?;
                }
                (ls, lu, lc, avg, part)
            }
        };
        Ok(BatchReport {
            epoch,
            batch,
            labeled,
            unlabeled,
            raw_margins: self.margin.raw().to_vec(),
            thresholds: self.margin.effective_all(),
            labeled_inputs: views.labeled,
            weak_a: views.weak_a,
            weak_b: views.weak_b,
            strong: views.strong,
            avg_probs: avg,
            partition: part,
            l_s,
            l_u,
            l_c,
            l_total: crate::losses::total_loss(l_s, l_u, l_c, &w),
        })
    }

    fn check_finite(&self, epoch: usize, batch: usize, (l_s, l_u, l_c): (f64, f64, f64), total: f64) -> Result<()> {
        if [l_s, l_u, l_c, total].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteLoss {
                epoch,
                batch,
                l_s,
                l_u,
                l_c,
            })
        }
    }

    fn run(mut self) -> Result<TrainOutcome> {
        let s = self.data.labeled;
        let u = self.data.unlabeled;
        let cfg = self.config;
        let use_u = cfg.mode.uses_unlabeled() && !u.is_empty();
        let batches = s
            .len()
            .div_ceil(cfg.labeled_batch)
            .max(u.len().div_ceil(cfg.unlabeled_batch));
        let mut ls_stream = Stream::new(s.len(), cfg.seed, STREAM_LABELED);
        let mut u_stream = Stream::new(u.len(), cfg.seed, STREAM_UNLABELED);
        let mut run = RunMetrics::new(cfg.mode.to_string(), cfg.seed, "", s.classes());

        for epoch in 0..cfg.epochs {
            self.margin_pass(epoch)?;
            ls_stream.start_epoch(epoch);
            u_stream.start_epoch(epoch);
            let mut acc = EpochTotals::default();
            for b in 0..batches {
                let labeled = ls_stream.take(cfg.labeled_batch);
                let unlabeled = if use_u {
                    u_stream.take(cfg.unlabeled_batch)
                } else {
                    Vec::new()
                };
                let report = match self.batch(epoch, b, labeled, unlabeled) {
                    Err(Error::NumericInput(_)) => Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        l_s: f64::NAN,
                        l_u: f64::NAN,
                        l_c: f64::NAN,
                    }),
                    other => other,
                }?;
                acc.batches += 1;
                acc.l_s += report.l_s;
                acc.l_u += report.l_u;
                acc.l_c += report.l_c;
                acc.l_total += report.l_total;
                acc.drawn += report.unlabeled.len();
                acc.confident += report.partition.confident_len();
                if let Some(truth) = self.data.truth {
                    let ids: Vec<usize> = report.unlabeled.iter().map(|d| d.index).collect();
                    acc.correct += metrics::pseudo_label_hits(&report.partition, &ids, truth)?.0;
                }
                if let Some(obs) = self.observer.as_mut() {
                    obs(&report, &self.model);
                }
            }
            let n = acc.batches as f64;
            let drawn = acc.drawn as f64;
            let eval = if self.data.test.is_empty() {
                None
            } else {
                Some(evaluate(&self.model, self.data.test)?)
            };
            run.rows.push(EpochRow {
                epoch,
                l_s: acc.l_s / n,
                l_u: acc.l_u / n,
                l_c: acc.l_c / n,
                l_total: acc.l_total / n,
                margin_raw: self.margin.raw().to_vec(),
                margin_eff: self.margin.effective_all(),
                subset1_frac: use_u.then(|| acc.confident as f64 / drawn),
                pseudo_precision: (self.data.truth.is_some() && acc.confident > 0)
                    .then(|| acc.correct as f64 / acc.confident as f64),
                discard_frac: match cfg.mode {
                    Mode::FixedThreshold(_) if use_u => Some((acc.drawn - acc.confident) as f64 / drawn),
                    _ => None,
                },
                test_acc: eval.as_ref().map(|e| e.accuracy),
                acc_class: eval
                    .map(|e| e.per_class)
                    .unwrap_or_else(|| vec![None; s.classes()]),
            });
        }
        Ok(TrainOutcome {
            adam_steps: self.adam.step(),
            model: self.model,
            metrics: run,
        })
    }
}

/// Trains a freshly initialized model.
pub fn train(config: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    let spec = ModelSpec::new(data.labeled.sample_shape(), data.labeled.classes(), config.model.clone())?;
    train_model(config, Model::init(spec, model_seed(config.seed)), data, None)
}

/// Trains `model` in place of a fresh one; `observer` sees every batch after its update.
pub fn train_model(
    config: &TrainConfig,
    model: Model,
    data: TrainData<'_>,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let s = data.labeled;
    if s.is_empty() {
        return Err(Error::Spec("labeled set is empty".into()));
    }
    if data.unlabeled.sample_shape() != s.sample_shape() || data.test.sample_shape() != s.sample_shape() {
        return Err(Error::Shape("labeled, unlabeled and test sample shapes differ".into()));
    }
    if data.test.classes() != s.classes() || model.spec().classes != s.classes() {
        return Err(Error::Shape("class counts differ between data and model".into()));
    }
    if let Some(t) = data.truth {
        if t.len() != data.unlabeled.len() {
            return Err(Error::Audit(format!(
                "{} sealed labels for {} unlabeled samples",
                t.len(),
                data.unlabeled.len()
            )));
        }
    }
    let samples: Vec<&[f64]> = s.samples().collect();
    let augmenter = Augmenter::fit(config.augment.clone(), s.sample_shape(), &samples)?;
    Trainer {
        config,
        data,
        adam: AdamState::new(model.params(), config.optimizer),
        model,
        margin: ConfidenceMargin::new(s.classes(), config.margin)?,
        augmenter,
        aug_seed: derive_seed(&[config.seed, STREAM_AUGMENT]),
        weights: config.mode.effective_weights(&config.weights),
        observer,
    }
    .run()
}
