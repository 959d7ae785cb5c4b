//! Datasets, file loaders, deterministic splits and the synthetic benchmark.
//!
//! Labels are 0-based class indices everywhere.
//!
//! File formats:
//! - **idx**: a pair of files in the MNIST container layout. Four magic bytes
//!   `00 00 <type> <rank>`, `rank` big-endian `u32` extents, then the payload.
//!   Sample files use type `0x08` (u8, scaled to `[0, 1]`), `0x0D` (f32) or
//!   `0x0E` (f64, taken as-is); label files use `0x08` or `0x0C` (i32).
//! - **manifest**: comma-separated `path,label` lines; paths are raster images
//!   relative to the manifest's directory, scaled to `[0, 1]`.
//! - **delimited**: comma-separated numeric rows, last column the label.
//!   Feature columns are standardized to zero mean and unit variance.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SealedLabels;
use crate::nn::Tensor;

/// Samples of a uniform shape with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    sample_shape: Vec<usize>,
    data: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(sample_shape: Vec<usize>, data: Vec<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let width: usize = sample_shape.iter().product();
        if sample_shape.is_empty() || width == 0 {
            return Err(Error::Shape(format!("invalid sample shape {sample_shape:?}")));
        }
        if data.len() != width * labels.len() {
            return Err(Error::Shape(format!(
                "{} values for {} samples of {width}",
                data.len(),
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::Spec(format!("need at least 2 classes, got {classes}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Manifest(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self {
            sample_shape,
            data,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_width(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.sample_width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.sample_width())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn raw_data(&self) -> &[f64] {
        &self.data
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(indices.len() * self.sample_width());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Dataset {
            sample_shape: self.sample_shape.clone(),
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// `[n, sample_shape...]` tensor of the chosen rows.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        stack(&self.sample_shape, indices.iter().map(|&i| self.sample(i).to_vec()))
    }

    /// Drops the labels. Used to build an [`UnlabeledSet`] without a truth channel.
    pub fn without_labels(&self) -> UnlabeledSet {
        UnlabeledSet {
            sample_shape: self.sample_shape.clone(),
            data: self.data.clone(),
        }
    }
}

pub(crate) fn stack(shape: &[usize], rows: impl Iterator<Item = Vec<f64>>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        data.extend(r);
        n += 1;
    }
    let mut full = vec![n];
    full.extend_from_slice(shape);
    Tensor::new(full, data)
}

/// Training samples whose labels are not available to the trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSet {
    sample_shape: Vec<usize>,
    data: Vec<f64>,
}

impl UnlabeledSet {
    pub fn empty(sample_shape: &[usize]) -> Self {
        Self {
            sample_shape: sample_shape.to_vec(),
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.sample_width()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_width(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.sample_width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.sample_width())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf },
    Manifest { path: PathBuf },
    Delimited { path: PathBuf },
}

/// Loads a dataset. `classes` fixes the class count; otherwise it is
/// `max(label) + 1` (at least 2).
pub fn load_dataset(source: &DataSource, classes: Option<usize>) -> Result<Dataset> {
    let (shape, data, labels) = match source {
        DataSource::Idx { images, labels } => {
            let (dims, values) = read_idx(images, true)?;
            let (ldims, lvalues) = read_idx(labels, false)?;
            if dims.len() < 2 || ldims.len() != 1 || ldims[0] != dims[0] {
                return Err(Error::format(
                    3,
                    format!("sample dims {dims:?} do not pair with label dims {ldims:?}"),
                ));
            }
            let labels = lvalues
                .into_iter()
                .map(|v| {
                    if v < 0.0 {
                        Err(Error::Manifest(format!("negative label {v}")))
                    } else {
                        Ok(v as usize)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            (dims[1..].to_vec(), values, labels)
        }
        DataSource::Manifest { path } => load_manifest(path)?,
        DataSource::Delimited { path } => load_delimited(path)?,
    };
    let inferred = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let classes = match classes {
        Some(c) => {
            if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::Manifest(format!("unknown label {bad} (classes = {c})")));
            }
            c
        }
        None => inferred,
    };
    Dataset::new(shape, data, labels, classes)
}

fn read_idx(path: &Path, samples: bool) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(0, format!("{}: bad idx magic", path.display())));
    }
    let (ty, rank) = (bytes[2], bytes[3] as usize);
    let elem = match ty {
        0x08 => 1,
        0x0C | 0x0D => 4,
        0x0E => 8,
        other => {
            return Err(Error::format(2, format!("{}: unsupported idx type 0x{other:02X}", path.display())))
        }
    };
    if rank == 0 {
        return Err(Error::format(3, "idx rank must be positive"));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::format(bytes.len() as u64, "truncated idx header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::format(4 + 4 * i as u64, "zero idx extent"));
    }
    let count: usize = dims.iter().product();
    let expect = header + count * elem;
    if bytes.len() != expect {
        return Err(Error::format(
            bytes.len().min(expect) as u64,
            format!("{}: payload should end at byte {expect}, file has {}", path.display(), bytes.len()),
        ));
    }
    let body = &bytes[header..];
    let values = match ty {
        0x08 if samples => body.iter().map(|&b| b as f64 / 255.0).collect(),
        0x08 => body.iter().map(|&b| b as f64).collect(),
        0x0C => body
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        0x0D => body
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        _ => body
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((dims, values))
}

/// Writes samples as an f64 idx file and labels as a u8 (or i32 beyond 255 classes) idx file.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let mut out = vec![0, 0, 0x0E, (dataset.sample_shape.len() + 1) as u8];
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for &d in &dataset.sample_shape {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for v in &dataset.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(images, out).map_err(|e| Error::io(images, e))?;

    let wide = dataset.classes > 256;
    let mut out = vec![0, 0, if wide { 0x0C } else { 0x08 }, 1];
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for &l in &dataset.labels {
        if wide {
            out.extend_from_slice(&(l as i32).to_be_bytes());
        } else {
            out.push(l as u8);
        }
    }
    std::fs::write(labels, out).map_err(|e| Error::io(labels, e))
}

fn parse_label(field: &str, offset: u64) -> Result<usize> {
    let f = field.trim();
    f.parse::<usize>()
        .map_err(|_| Error::format(offset, format!("label {f:?} is not a non-negative integer")))
}

/// Byte offset and content of every non-blank, non-comment line.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (u64, &str)> {
    let mut offset = 0u64;
    text.split_inclusive('\n').filter_map(move |raw| {
        let at = offset;
        offset += raw.len() as u64;
        let line = raw.trim_end_matches(['\n', '\r']);
        let t = line.trim();
        (!t.is_empty() && !t.starts_with('#')).then_some((at, line))
    })
}

type Loaded = (Vec<usize>, Vec<f64>, Vec<usize>);

fn load_manifest(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut shape: Option<Vec<usize>> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, (offset, line)) in lines_with_offsets(&text).enumerate() {
        let Some((file, label)) = line.rsplit_once(',') else {
            return Err(Error::format(offset, "expected `path,label`"));
        };
        if i == 0 && label.trim().eq_ignore_ascii_case("label") {
            continue;
        }
        let label = parse_label(label, offset)?;
        let file_path = base.join(file.trim());
        if !file_path.is_file() {
            return Err(Error::Manifest(format!("missing file {}", file_path.display())));
        }
        let img = image::open(&file_path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", file_path.display())))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, pixels): (usize, Vec<u8>) = if img.color().has_color() {
            (3, img.to_rgb8().into_raw())
        } else {
            (1, img.to_luma8().into_raw())
        };
        let this = vec![channels, h, w];
        match &shape {
            None => shape = Some(this.clone()),
            Some(s) if *s != this => {
                return Err(Error::format(
                    offset,
                    format!("{} is {this:?}, expected {s:?}", file_path.display()),
                ))
            }
            _ => {}
        }
        // interleaved HWC → planar CHW
        let mut planar = vec![0.0; channels * h * w];
        for (p, &v) in pixels.iter().enumerate() {
            let (pix, ch) = (p / channels, p % channels);
            planar[ch * h * w + pix] = v as f64 / 255.0;
        }
        data.extend(planar);
        labels.push(label);
    }
    let shape = shape.ok_or_else(|| Error::Manifest(format!("{} lists no samples", path.display())))?;
    Ok((shape, data, labels))
}

fn load_delimited(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (i, (offset, line)) in lines_with_offsets(&text).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::format(offset, "need at least one feature and a label"));
        }
        let (label, feats) = fields.split_last().unwrap();
        let parsed: std::result::Result<Vec<f64>, _> = feats.iter().map(|f| f.trim().parse::<f64>()).collect();
        let feats = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue, // header
            Err(_) => return Err(Error::format(offset, "non-numeric feature")),
        };
        if feats.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(offset, "non-finite feature"));
        }
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(Error::format(
                    offset,
                    format!("row has {} features, expected {w}", feats.len()),
                ))
            }
            _ => {}
        }
        labels.push(parse_label(label, offset)?);
        rows.push(feats);
    }
    let width = width.ok_or_else(|| Error::format(0, format!("{} has no rows", path.display())))?;
    let n = rows.len() as f64;
    for d in 0..width {
        let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for r in rows.iter_mut() {
            r[d] -= mean;
            if std > 0.0 {
                r[d] /= std;
            }
        }
    }
    Ok((vec![width], rows.concat(), labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// `N_s`
    pub labeled: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_balanced")]
    pub class_balanced: bool,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_balanced() -> bool {
    true
}
fn default_test_fraction() -> f64 {
    0.1
}

impl SplitSpec {
    /// The split used by run `run_seed`: the same for every mode sharing this spec.
    pub fn for_run(&self, run_seed: u64) -> SplitSpec {
        SplitSpec {
            seed: crate::augment::derive_seed(&[self.seed, run_seed]),
            ..self.clone()
        }
    }
}

/// Positions of each part in the source dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Split {
    pub labeled: Dataset,
    pub unlabeled: UnlabeledSet,
    /// Ground truth of `unlabeled`, readable only by metrics.
    pub unlabeled_truth: SealedLabels,
    pub test: Dataset,
    pub indices: SplitIndices,
}

pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::Spec(format!(
            "test fraction {} not in [0, 1)",
            spec.test_fraction
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    let (test, train) = order.split_at(n_test);
    if spec.labeled > train.len() {
        return Err(Error::Spec(format!(
            "{} labeled samples requested, only {} training samples",
            spec.labeled,
            train.len()
        )));
    }
    let labeled: Vec<usize> = if spec.class_balanced {
        let c = dataset.classes();
        if !spec.labeled.is_multiple_of(c) {
            return Err(Error::Spec(format!(
                "class-balanced split needs N_s divisible by {c}, got {}",
                spec.labeled
            )));
        }
        let per = spec.labeled / c;
        let mut taken = vec![0usize; c];
        let picked: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&i| {
                let l = dataset.labels()[i];
                if taken[l] < per {
                    taken[l] += 1;
                    true
                } else {
                    false
                }
            })
            .collect();
        if let Some(short) = taken.iter().position(|&t| t < per) {
            return Err(Error::Spec(format!(
                "class {short} has fewer than {per} training samples"
            )));
        }
        picked
    } else {
        train[..spec.labeled].to_vec()
    };
    let mut is_labeled = vec![false; n];
    labeled.iter().for_each(|&i| is_labeled[i] = true);
    let unlabeled: Vec<usize> = train.iter().copied().filter(|&i| !is_labeled[i]).collect();

    let u = dataset.subset(&unlabeled);
    Ok(Split {
        labeled: dataset.subset(&labeled),
        unlabeled: u.without_labels(),
        unlabeled_truth: SealedLabels::seal(u.labels().to_vec()),
        test: dataset.subset(test),
        indices: SplitIndices {
            labeled,
            unlabeled,
            test: test.to_vec(),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_synth_classes")]
    pub classes: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_difficulty")]
    pub difficulty: f64,
}

fn default_synth_classes() -> usize {
    4
}
fn default_per_class() -> usize {
    600
}
fn default_dim() -> usize {
    16
}
fn default_difficulty() -> f64 {
    0.6
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: default_synth_classes(),
            per_class: default_per_class(),
            dim: default_dim(),
            difficulty: default_difficulty(),
        }
    }
}

/// Class-mean distance scale at difficulty 1.
const SYNTH_SEPARATION: f64 = 1.6;

/// Random orthonormal basis (rows) by Gram-Schmidt on Gaussian vectors.
fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Mean, rotation and per-axis scale of one class.
type Cluster = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// Anisotropic Gaussian clusters, one per class, with class-dependent spread.
///
/// Class `c` has spread factor rising linearly from 0.7 (class 0) to 1.3
/// (last class), so later classes overlap their neighbours more. Means are
/// random directions at radius `SYNTH_SEPARATION / difficulty · √dim / 4`.
/// Samples are interleaved by class: sample `i` has label `i mod C`.
pub fn synth_benchmark(spec: &SynthSpec) -> Result<Dataset> {
    if !(spec.difficulty > 0.0 && spec.difficulty <= 1.0) {
        return Err(Error::Spec(format!("difficulty {} not in (0, 1]", spec.difficulty)));
    }
    if spec.classes < 2 || spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::Spec("synth needs >= 2 classes, samples and dimensions".into()));
    }
    let (c, d) = (spec.classes, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radius = SYNTH_SEPARATION / spec.difficulty * (d as f64).sqrt() / 4.0;
    let clusters: Vec<Cluster> = (0..c)
        .map(|k| {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mean = dir.iter().map(|x| x / norm * radius).collect();
            let rotation = random_rotation(&mut rng, d);
            let spread = 0.7 + 0.6 * k as f64 / (c - 1) as f64;
            let axes = (0..d).map(|_| spread * rng.gen_range(0.5..1.5)).collect();
            (mean, rotation, axes)
        })
        .collect();
    let n = c * spec.per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % c;
        let (mean, rotation, axes) = &clusters[k];
        let z: Vec<f64> = axes
            .iter()
            .map(|a| {
                let g: f64 = StandardNormal.sample(&mut rng);
                a * g
            })
            .collect();
        let mut x = mean.clone();
        for (zi, row) in z.iter().zip(rotation) {
            for (xj, rj) in x.iter_mut().zip(row) {
                *xj += zi * rj;
            }
        }
        data.extend(x);
        labels.push(k);
    }
    Dataset::new(vec![d], data, labels, c)
}
