//! Per-class adaptive confidence margins.
//!
//! Raw margins are the mean confidence of correctly predicted labeled samples
//! of each class. The effective margin at epoch `t` is `B·T_c / (1 + γ^{-t})`,
//! ramping from half of `B·T_c` at `t = 0` towards `B·T_c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A labeled sample whose predicted class equals its ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectPrediction {
    pub id: usize,
    pub class: usize,
    pub confidence: f64,
}

/// Keeps the samples whose argmax prediction matches the label.
pub fn collect_correct<R: AsRef<[f64]>>(probs: &[R], labels: &[usize]) -> Vec<CorrectPrediction> {
    probs
        .iter()
        .zip(labels)
        .enumerate()
        .filter_map(|(id, (row, &label))| {
            let row = row.as_ref();
            (argmax(row) == label).then(|| CorrectPrediction {
                id,
                class: label,
                confidence: row[label],
            })
        })
        .collect()
}

/// Per-class mean confidence; classes without correct predictions keep `previous`.
pub fn compute_raw_margins(correct: &[CorrectPrediction], previous: &[f64]) -> Vec<f64> {
    let classes = previous.len();
    let mut sum = vec![0.0; classes];
    let mut count = vec![0usize; classes];
    for c in correct {
        if c.class < classes {
            sum[c.class] += c.confidence;
            count[c.class] += 1;
        }
    }
    (0..classes)
        .map(|c| {
            if count[c] == 0 {
                previous[c]
            } else {
                sum[c] / count[c] as f64
            }
        })
        .collect()
}

/// `B·T / (1 + γ^{-t})`
pub fn effective_margin(raw: f64, scale: f64, growth: f64, epoch: usize) -> f64 {
    scale * raw / (1.0 + growth.powf(-(epoch as f64)))
}

/// Distance `B·T − effective_margin`, evaluated without cancellation.
pub fn margin_headroom(raw: f64, scale: f64, growth: f64, epoch: usize) -> f64 {
    let decay = growth.powf(-(epoch as f64));
    scale * raw * decay / (1.0 + decay)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSchedule {
    /// `B ∈ (0, 1)`
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// `γ > 1`
    #[serde(default = "default_growth")]
    pub growth: f64,
    /// Raw margin of every class before any correct prediction is seen.
    #[serde(default = "default_initial")]
    pub initial: f64,
}

fn default_scale() -> f64 {
    0.97
}
fn default_growth() -> f64 {
    std::f64::consts::E
}
fn default_initial() -> f64 {
    0.8
}

impl Default for MarginSchedule {
    fn default() -> Self {
        Self {
            scale: default_scale(),
            growth: default_growth(),
            initial: default_initial(),
        }
    }
}

impl MarginSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale < 1.0) {
            return Err(Error::Spec(format!("margin scale B={} not in (0,1)", self.scale)));
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return Err(Error::Spec(format!("margin growth γ={} must exceed 1", self.growth)));
        }
        if !(self.initial > 0.0 && self.initial <= 1.0) {
            return Err(Error::Spec(format!(
                "initial margin {} not in (0,1]",
                self.initial
            )));
        }
        Ok(())
    }
}

/// Raw per-class margins plus the schedule that turns them into thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMargin {
    raw: Vec<f64>,
    schedule: MarginSchedule,
    epoch: usize,
}

impl ConfidenceMargin {
    pub fn new(classes: usize, schedule: MarginSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            raw: vec![schedule.initial; classes],
            schedule,
            epoch: 0,
        })
    }

    pub fn classes(&self) -> usize {
        self.raw.len()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn schedule(&self) -> &MarginSchedule {
        &self.schedule
    }

    /// Recomputes raw margins from this epoch's correct predictions.
    pub fn refresh(&mut self, epoch: usize, correct: &[CorrectPrediction]) {
        self.raw = compute_raw_margins(correct, &self.raw);
        self.epoch = epoch;
    }

    pub fn effective(&self, class: usize) -> f64 {
        effective_margin(
            self.raw[class],
            self.schedule.scale,
            self.schedule.growth,
            self.epoch,
        )
    }

    pub fn effective_all(&self) -> Vec<f64> {
        (0..self.classes()).map(|c| self.effective(c)).collect()
    }
}

/// A subset-I member: batch position and hard pseudo label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PseudoLabel {
    pub index: usize,
    pub class: usize,
}

impl PseudoLabel {
    pub fn one_hot(&self, classes: usize) -> Vec<f64> {
        let mut v = vec![0.0; classes];
        v[self.class] = 1.0;
        v
    }
}

/// Disjoint split of an unlabeled batch into confident (I) and uncertain (II) samples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    pub confident: Vec<PseudoLabel>,
    pub uncertain: Vec<usize>,
}

impl Partition {
    /// `N_h`
    pub fn confident_len(&self) -> usize {
        self.confident.len()
    }

    /// `N_l`
    pub fn uncertain_len(&self) -> usize {
        self.uncertain.len()
    }

    pub fn len(&self) -> usize {
        self.confident.len() + self.uncertain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn confident_indices(&self) -> Vec<usize> {
        self.confident.iter().map(|p| p.index).collect()
    }

    pub fn pseudo_classes(&self) -> Vec<usize> {
        self.confident.iter().map(|p| p.class).collect()
    }
}

/// Splits rows by `max(p̃) ≥ threshold(argmax p̃)`.
pub fn partition_with<R: AsRef<[f64]>>(avg_probs: &[R], threshold: impl Fn(usize) -> f64) -> Partition {
    let mut part = Partition::default();
    for (index, row) in avg_probs.iter().enumerate() {
        let row = row.as_ref();
        let class = argmax(row);
        if row[class] >= threshold(class) {
            part.confident.push(PseudoLabel { index, class });
        } else {
            part.uncertain.push(index);
        }
    }
    part
}

/// Partition against per-class effective thresholds.
pub fn partition_batch<R: AsRef<[f64]>>(avg_probs: &[R], thresholds: &[f64]) -> Result<Partition> {
    if let Some(bad) = avg_probs.iter().position(|r| r.as_ref().len() != thresholds.len()) {
        return Err(Error::Alignment(format!(
            "row {bad} has {} classes, margin has {}",
            avg_probs[bad].as_ref().len(),
            thresholds.len()
        )));
    }
    Ok(partition_with(avg_probs, |c| thresholds[c]))
}
