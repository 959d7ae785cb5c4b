//! Accuracy, pseudo-label precision, per-epoch run records and multi-seed aggregation.
//!
//! Run CSV columns, for `C` classes:
//!
//! ```text
//! epoch,l_s,l_u,l_c,l_total,margin_raw_1..C,margin_eff_1..C,subset1_frac,pseudo_precision,discard_frac,test_acc,acc_class_1..C
//! ```
//!
//! Floats are written with 17 significant digits. Undefined values are blank
//! cells in CSV and absent keys in JSON. Aggregates use the sample (n − 1)
//! standard deviation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::Partition;

/// Ground-truth labels of the unlabeled pool. Only this module can read them.
///
/// ```compile_fail
/// fn peek(s: &adacm::metrics::SealedLabels) -> usize {
///     s.0[0]
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedLabels(Vec<usize>);

impl SealedLabels {
    pub(crate) fn seal(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `(correct, total)` pseudo labels in subset I. `ids[row]` is the pool index of batch row `row`.
pub fn pseudo_label_hits(partition: &Partition, ids: &[usize], truth: &SealedLabels) -> Result<(usize, usize)> {
    let mut correct = 0;
    for p in &partition.confident {
        let id = *ids
            .get(p.index)
            .ok_or_else(|| Error::Audit(format!("batch row {} has no pool id", p.index)))?;
        let t = *truth
            .0
            .get(id)
            .ok_or_else(|| Error::Audit(format!("no sealed label for sample {id}")))?;
        correct += usize::from(t == p.class);
    }
    Ok((correct, partition.confident.len()))
}

/// Fraction of correct pseudo labels; `None` when subset I is empty.
pub fn pseudo_label_precision(partition: &Partition, ids: &[usize], truth: &SealedLabels) -> Result<Option<f64>> {
    let (correct, total) = pseudo_label_hits(partition, ids, truth)?;
    Ok((total > 0).then(|| correct as f64 / total as f64))
}

/// Overall accuracy and per-class accuracy (`None` for classes absent from `labels`).
pub fn accuracy(predictions: &[usize], labels: &[usize], classes: usize) -> Result<(f64, Vec<Option<f64>>)> {
    if predictions.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Spec("accuracy of an empty set".into()));
    }
    let mut hits = vec![0usize; classes];
    let mut seen = vec![0usize; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= classes {
            return Err(Error::Alignment(format!("label {l} outside {classes} classes")));
        }
        seen[l] += 1;
        hits[l] += usize::from(p == l);
    }
    let overall = hits.iter().sum::<usize>() as f64 / labels.len() as f64;
    let per_class = hits
        .iter()
        .zip(&seen)
        .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
        .collect();
    Ok((overall, per_class))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub l_s: f64,
    pub l_u: f64,
    pub l_c: f64,
    pub l_total: f64,
    pub margin_raw: Vec<f64>,
    pub margin_eff: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset1_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discard_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<f64>,
    pub acc_class: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: String,
    pub seed: u64,
    /// Digest of the run configuration with the seed left out.
    pub config_digest: String,
    pub classes: usize,
    pub rows: Vec<EpochRow>,
}

impl RunMetrics {
    pub fn new(mode: impl Into<String>, seed: u64, config_digest: impl Into<String>, classes: usize) -> Self {
        Self {
            mode: mode.into(),
            seed,
            config_digest: config_digest.into(),
            classes,
            rows: Vec::new(),
        }
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.test_acc)
    }
}

/// Header line of the run CSV.
pub fn csv_header(classes: usize) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "l_s", "l_u", "l_c", "l_total"].map(String::from).into();
    h.extend((1..=classes).map(|c| format!("margin_raw_{c}")));
    h.extend((1..=classes).map(|c| format!("margin_eff_{c}")));
    h.extend(["subset1_frac", "pseudo_precision", "discard_frac", "test_acc"].map(String::from));
    h.extend((1..=classes).map(|c| format!("acc_class_{c}")));
    h
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn parse_f64(s: &str, line: u64) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::format(line, format!("bad number {s:?}")))
}

fn parse_opt(s: &str, line: u64) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, line).map(Some)
    }
}

pub fn write_run_csv<W: std::io::Write>(run: &RunMetrics, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(run.classes))?;
    for r in &run.rows {
        let mut rec = vec![r.epoch.to_string(), fmt(r.l_s), fmt(r.l_u), fmt(r.l_c), fmt(r.l_total)];
        rec.extend(r.margin_raw.iter().copied().map(fmt));
        rec.extend(r.margin_eff.iter().copied().map(fmt));
        rec.extend([r.subset1_frac, r.pseudo_precision, r.discard_frac, r.test_acc].map(fmt_opt));
        rec.extend(r.acc_class.iter().copied().map(fmt_opt));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Parses a run CSV. The mode, seed and digest are not part of the CSV and are left empty.
pub fn read_run_csv<R: std::io::Read>(input: R) -> Result<RunMetrics> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header.len() < 9 || !(header.len() - 9).is_multiple_of(3) {
        return Err(Error::format(0, format!("{} columns do not fit the run schema", header.len())));
    }
    let classes = (header.len() - 9) / 3;
    if header != csv_header(classes) {
        return Err(Error::format(0, "header does not match the run schema"));
    }
    let mut run = RunMetrics::new("", 0, "", classes);
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.byte());
        let f = |i: usize| parse_f64(&rec[i], line);
        let o = |i: usize| parse_opt(&rec[i], line);
        let c = classes;
        run.rows.push(EpochRow {
            epoch: rec[0]
                .parse()
                .map_err(|_| Error::format(line, "bad epoch"))?,
            l_s: f(1)?,
            l_u: f(2)?,
            l_c: f(3)?,
            l_total: f(4)?,
            margin_raw: (5..5 + c).map(f).collect::<Result<_>>()?,
            margin_eff: (5 + c..5 + 2 * c).map(f).collect::<Result<_>>()?,
            subset1_frac: o(5 + 2 * c)?,
            pseudo_precision: o(6 + 2 * c)?,
            discard_frac: o(7 + 2 * c)?,
            test_acc: o(8 + 2 * c)?,
            acc_class: (9 + 2 * c..9 + 3 * c).map(o).collect::<Result<_>>()?,
        });
    }
    Ok(run)
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn export_run_csv(run: &RunMetrics, path: &Path) -> Result<()> {
    write_run_csv(run, create(path)?)
}

pub fn import_run_csv(path: &Path) -> Result<RunMetrics> {
    read_run_csv(read(path)?)
}

pub fn export_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn import_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(read(path)?))?)
}

/// Final-epoch test accuracy of several seeds of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mode: String,
    pub config_digest: String,
    /// Seeds in ascending order, aligned with `accuracies`.
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean and sample standard deviation of final test accuracy.
///
/// The result does not depend on the order of `runs`.
pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateReport> {
    if runs.len() < 2 {
        return Err(Error::Aggregation(format!("need at least 2 runs, got {}", runs.len())));
    }
    let first = &runs[0];
    if let Some(other) = runs
        .iter()
        .find(|r| r.config_digest != first.config_digest || r.mode != first.mode)
    {
        return Err(Error::Aggregation(format!(
            "runs differ in configuration: {}/{} vs {}/{}",
            first.mode, first.config_digest, other.mode, other.config_digest
        )));
    }
    let mut pairs = runs
        .iter()
        .map(|r| {
            r.final_accuracy()
                .map(|a| (r.seed, a))
                .ok_or_else(|| Error::Aggregation(format!("seed {} has no final test accuracy", r.seed)))
        })
        .collect::<Result<Vec<_>>>()?;
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let seeds: Vec<u64> = pairs.iter().map(|p| p.0).collect();
    let accuracies: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    let mut sorted = accuracies.clone();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let n = sorted.len() as f64;
    let mean = (sorted.iter().sum::<f64>() / n).clamp(min, max);
    let var = sorted.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(AggregateReport {
        mode: first.mode.clone(),
        config_digest: first.config_digest.clone(),
        seeds,
        accuracies,
        mean,
        std: var.sqrt(),
        min,
        max,
    })
}

pub const AGGREGATE_HEADER: &str = "mode,n,mean,std,min,max,config_digest,seeds,accuracies";

/// One row per report, in the given order. Seeds and accuracies are `;`-separated.
pub fn write_aggregate_csv<W: std::io::Write>(reports: &[AggregateReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER.split(','))?;
    for r in reports {
        let join = |v: Vec<String>| v.join(";");
        w.write_record([
            r.mode.clone(),
            r.seeds.len().to_string(),
            fmt(r.mean),
            fmt(r.std),
            fmt(r.min),
            fmt(r.max),
            r.config_digest.clone(),
            join(r.seeds.iter().map(u64::to_string).collect()),
            join(r.accuracies.iter().copied().map(fmt).collect()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_aggregate_csv<R: std::io::Read>(input: R) -> Result<Vec<AggregateReport>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>().join(",") != AGGREGATE_HEADER {
        return Err(Error::format(0, "header does not match the aggregate schema"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.byte());
        let split = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split(';').map(String::from).collect()
            }
        };
        out.push(AggregateReport {
            mode: rec[0].to_string(),
            mean: parse_f64(&rec[2], line)?,
            std: parse_f64(&rec[3], line)?,
            min: parse_f64(&rec[4], line)?,
            max: parse_f64(&rec[5], line)?,
            config_digest: rec[6].to_string(),
            seeds: split(&rec[7])
                .iter()
                .map(|s| s.parse().map_err(|_| Error::format(line, "bad seed")))
                .collect::<Result<_>>()?,
            accuracies: split(&rec[8])
                .iter()
                .map(|s| parse_f64(s, line))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

pub fn export_aggregate_csv(reports: &[AggregateReport], path: &Path) -> Result<()> {
    write_aggregate_csv(reports, create(path)?)
}

pub fn import_aggregate_csv(path: &Path) -> Result<Vec<AggregateReport>> {
    read_aggregate_csv(read(path)?)
}
