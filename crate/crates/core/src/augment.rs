//! Weak and strong stochastic augmentation for vector and image samples.
//!
//! Samples of rank 1 take the vector path (Gaussian jitter, coordinate
//! dropout, sign flips). Samples shaped `[h, w]` or `[c, h, w]` take the image
//! path (pad-and-crop, horizontal flip, and a small RandAugment-style pool).
//! Every view draws from its own RNG stream keyed by
//! `(seed, epoch, sample, view, visit)` so results do not depend on batch order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which stream a view consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViewKind {
    /// Weak view of a labeled sample used for the per-epoch margin pass.
    Margin,
    /// Weak view of a labeled sample in a training batch.
    Labeled,
    WeakA,
    WeakB,
    Strong,
}

impl ViewKind {
    fn id(self) -> u64 {
        match self {
            ViewKind::Margin => 1,
            ViewKind::Labeled => 2,
            ViewKind::WeakA => 3,
            ViewKind::WeakB => 4,
            ViewKind::Strong => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key tuple into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// RNG for one augmented view. `visit` counts repeated draws of the same
/// sample within an epoch (the labeled stream recycles).
pub fn view_rng(seed: u64, epoch: usize, sample: usize, view: ViewKind, visit: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[
        seed,
        epoch as u64,
        sample as u64,
        view.id(),
        visit as u64,
    ]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakPolicy {
    /// Jitter σ as a multiple of each dimension's standard deviation.
    #[serde(default = "default_weak_jitter")]
    pub jitter: f64,
    /// Zero padding before the random crop (images).
    #[serde(default = "default_crop_pad")]
    pub crop_pad: usize,
    /// Horizontal flip with probability ½ (images).
    #[serde(default = "default_true")]
    pub flip: bool,
}

fn default_weak_jitter() -> f64 {
    0.05
}
fn default_crop_pad() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl Default for WeakPolicy {
    fn default() -> Self {
        Self {
            jitter: default_weak_jitter(),
            crop_pad: default_crop_pad(),
            flip: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrongOp {
    Jitter,
    Dropout,
    SignFlip,
    Invert,
    Contrast,
    Cutout,
    Translate,
    Rotate,
}

impl StrongOp {
    pub const ALL: [StrongOp; 8] = [
        StrongOp::Jitter,
        StrongOp::Dropout,
        StrongOp::SignFlip,
        StrongOp::Invert,
        StrongOp::Contrast,
        StrongOp::Cutout,
        StrongOp::Translate,
        StrongOp::Rotate,
    ];

    fn applies_to_images(self) -> bool {
        !matches!(self, StrongOp::Jitter | StrongOp::Dropout | StrongOp::SignFlip)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongPolicy {
    /// Transforms applied per call, drawn with replacement from the pool.
    #[serde(default = "default_ops")]
    pub ops_per_sample: usize,
    #[serde(default = "default_pool")]
    pub pool: Vec<StrongOp>,
    /// Jitter σ as a multiple of each dimension's standard deviation.
    #[serde(default = "default_strong_jitter")]
    pub jitter: f64,
    /// Per-coordinate dropout probability range.
    #[serde(default = "default_dropout")]
    pub dropout: [f64; 2],
    /// Per-coordinate sign-flip probability range.
    #[serde(default = "default_sign_flip")]
    pub sign_flip: [f64; 2],
    #[serde(default = "default_contrast")]
    pub contrast: [f64; 2],
    #[serde(default = "default_brightness")]
    pub brightness: [f64; 2],
    /// Cutout side as a fraction of the image side.
    #[serde(default = "default_cutout")]
    pub cutout: [f64; 2],
    /// Maximum translation as a fraction of the image side.
    #[serde(default = "default_translate")]
    pub translate: [f64; 2],
}

fn default_ops() -> usize {
    2
}
fn default_pool() -> Vec<StrongOp> {
    StrongOp::ALL.to_vec()
}
fn default_strong_jitter() -> f64 {
    0.25
}
fn default_dropout() -> [f64; 2] {
    [0.05, 0.2]
}
fn default_sign_flip() -> [f64; 2] {
    [0.0, 0.1]
}
fn default_contrast() -> [f64; 2] {
    [0.5, 1.5]
}
fn default_brightness() -> [f64; 2] {
    [-0.2, 0.2]
}
fn default_cutout() -> [f64; 2] {
    [0.25, 0.5]
}
fn default_translate() -> [f64; 2] {
    [0.0, 0.25]
}

impl Default for StrongPolicy {
    fn default() -> Self {
        Self {
            ops_per_sample: default_ops(),
            pool: default_pool(),
            jitter: default_strong_jitter(),
            dropout: default_dropout(),
            sign_flip: default_sign_flip(),
            contrast: default_contrast(),
            brightness: default_brightness(),
            cutout: default_cutout(),
            translate: default_translate(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default)]
    pub weak: WeakPolicy,
    #[serde(default)]
    pub strong: StrongPolicy,
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Spec(format!("augment: invalid {what}")));
        if !(self.weak.jitter >= 0.0 && self.weak.jitter.is_finite()) {
            return bad("weak.jitter");
        }
        let s = &self.strong;
        if !(s.jitter >= 0.0 && s.jitter.is_finite()) {
            return bad("strong.jitter");
        }
        let ranges = [
            ("strong.dropout", s.dropout, 0.0, 1.0),
            ("strong.sign_flip", s.sign_flip, 0.0, 1.0),
            ("strong.contrast", s.contrast, 0.0, f64::MAX),
            ("strong.brightness", s.brightness, -1.0, 1.0),
            ("strong.cutout", s.cutout, 0.0, 1.0),
            ("strong.translate", s.translate, 0.0, 1.0),
        ];
        for (name, [lo, hi], min, max) in ranges {
            if !(lo <= hi && lo >= min && hi <= max) {
                return bad(name);
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// `(channels, height, width)` of an image-shaped sample.
fn image_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [h, w] => Some((1, h, w)),
        [c, h, w] => Some((c, h, w)),
        _ => None,
    }
}

/// Pads each channel with `pad` zeros and crops the original size back out at
/// offset `(dy, dx)` into the padded grid (`0 ≤ dy, dx ≤ 2·pad`).
pub fn pad_crop(img: &[f64], dims: (usize, usize, usize), pad: usize, dy: usize, dx: usize) -> Vec<f64> {
    let (c, h, w) = dims;
    let mut out = vec![0.0; img.len()];
    for ch in 0..c {
        for y in 0..h {
            let sy = (y + dy) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = (x + dx) as isize - pad as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                out[(ch * h + y) * w + x] = img[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    out
}

pub fn hflip(img: &[f64], dims: (usize, usize, usize)) -> Vec<f64> {
    let (c, h, w) = dims;
    let mut out = vec![0.0; img.len()];
    for row in 0..c * h {
        for x in 0..w {
            out[row * w + x] = img[row * w + (w - 1 - x)];
        }
    }
    out
}

/// Zeroes the `rh × rw` rectangle at `(top, left)` in every channel.
pub fn cutout(img: &mut [f64], dims: (usize, usize, usize), top: usize, left: usize, rh: usize, rw: usize) {
    let (c, h, w) = dims;
    for ch in 0..c {
        for y in top..(top + rh).min(h) {
            for x in left..(left + rw).min(w) {
                img[(ch * h + y) * w + x] = 0.0;
            }
        }
    }
}

fn translate(img: &[f64], dims: (usize, usize, usize), dy: isize, dx: isize) -> Vec<f64> {
    let (c, h, w) = dims;
    let mut out = vec![0.0; img.len()];
    for ch in 0..c {
        for y in 0..h as isize {
            let sy = y - dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w as isize {
                let sx = x - dx;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                out[(ch * h + y as usize) * w + x as usize] =
                    img[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    out
}

/// Rotates by `quarter_turns × 90°` counter-clockwise. Non-square images only support 180°.
fn rotate(img: &[f64], dims: (usize, usize, usize), quarter_turns: usize) -> Vec<f64> {
    let (c, h, w) = dims;
    let mut out = vec![0.0; img.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let (ty, tx) = match quarter_turns % 4 {
                    0 => (y, x),
                    1 => (w - 1 - x, y),
                    2 => (h - 1 - y, w - 1 - x),
                    _ => (x, h - 1 - y),
                };
                // Output grid has the same shape because either k is even or h == w.
                out[(ch * h + ty) * w + tx] = img[(ch * h + y) * w + x];
            }
        }
    }
    out
}

/// Augmentation bound to one dataset's sample shape and per-dimension scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmenter {
    config: AugmentConfig,
    sample_shape: Vec<usize>,
    scale: Vec<f64>,
}

impl Augmenter {
    /// `scale` is the per-dimension standard deviation used by the jitter transforms.
    pub fn new(config: AugmentConfig, sample_shape: &[usize], scale: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n: usize = sample_shape.iter().product();
        if scale.len() != n {
            return Err(Error::Shape(format!(
                "{} scale entries for samples of {n} values",
                scale.len()
            )));
        }
        Ok(Self {
            config,
            sample_shape: sample_shape.to_vec(),
            scale,
        })
    }

    /// Uses the population standard deviation of `samples` as the jitter scale.
    pub fn fit<R: AsRef<[f64]>>(config: AugmentConfig, sample_shape: &[usize], samples: &[R]) -> Result<Self> {
        let n: usize = sample_shape.iter().product();
        let mut mean = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for s in samples {
            let s = s.as_ref();
            if s.len() != n {
                return Err(Error::Shape(format!("sample of {} values, expected {n}", s.len())));
            }
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        let count = samples.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        for s in samples {
            for ((q, v), m) in sq.iter_mut().zip(s.as_ref()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let scale = sq.into_iter().map(|q| (q / count).sqrt()).collect();
        Self::new(config, sample_shape, scale)
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    fn check(&self, sample: &[f64]) {
        assert_eq!(sample.len(), self.scale.len(), "sample does not match augmenter shape");
    }

    pub fn weak(&self, sample: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.check(sample);
        let policy = &self.config.weak;
        match image_dims(&self.sample_shape) {
            Some(dims) => {
                let (_, h, w) = dims;
                if h == 1 && w == 1 {
                    return sample.to_vec();
                }
                let p = policy.crop_pad;
                let dy = rng.gen_range(0..=2 * p);
                let dx = rng.gen_range(0..=2 * p);
                let flip = rng.gen_bool(0.5);
                let out = pad_crop(sample, dims, p, dy, dx);
                if policy.flip && flip {
                    hflip(&out, dims)
                } else {
                    out
                }
            }
            None => sample
                .iter()
                .zip(&self.scale)
                .map(|(&v, &s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + policy.jitter * s * z
                })
                .collect(),
        }
    }

    /// Images start from a weak crop/flip view; vectors start from the raw sample.
    pub fn strong(&self, sample: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.check(sample);
        let policy = &self.config.strong;
        let dims = image_dims(&self.sample_shape);
        let pool: Vec<StrongOp> = policy
            .pool
            .iter()
            .copied()
            .filter(|op| op.applies_to_images() == dims.is_some())
            .collect();
        let mut out = match dims {
            Some(_) => self.weak(sample, rng),
            None => sample.to_vec(),
        };
        if pool.is_empty() {
            return out;
        }
        for _ in 0..policy.ops_per_sample {
            let op = *pool.choose(rng).expect("non-empty pool");
            out = match dims {
                None => self.apply_vector(op, out, rng),
                Some(d) => apply_image(policy, op, out, d, rng),
            };
        }
        out
    }

    fn apply_vector(&self, op: StrongOp, mut x: Vec<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let policy = &self.config.strong;
        match op {
            StrongOp::Jitter => {
                for (v, &s) in x.iter_mut().zip(&self.scale) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += policy.jitter * s * z;
                }
            }
            StrongOp::Dropout => {
                let p = draw(rng, policy.dropout);
                for v in x.iter_mut() {
                    if rng.gen::<f64>() < p {
                        *v = 0.0;
                    }
                }
            }
            StrongOp::SignFlip => {
                let p = draw(rng, policy.sign_flip);
                for v in x.iter_mut() {
                    if rng.gen::<f64>() < p {
                        *v = -*v;
                    }
                }
            }
            _ => unreachable!("image op on vector sample"),
        }
        x
    }
}

fn apply_image(
    policy: &StrongPolicy,
    op: StrongOp,
    mut img: Vec<f64>,
    dims: (usize, usize, usize),
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let (c, h, w) = dims;
    match op {
        StrongOp::Invert => img.iter_mut().for_each(|v| *v = 1.0 - *v),
        StrongOp::Contrast => {
            let factor = draw(rng, policy.contrast);
            let shift = draw(rng, policy.brightness);
            for chan in img.chunks_mut(h * w).take(c) {
                let mean = chan.iter().sum::<f64>() / chan.len() as f64;
                for v in chan.iter_mut() {
                    *v = ((*v - mean) * factor + mean + shift).clamp(0.0, 1.0);
                }
            }
        }
        StrongOp::Cutout => {
            let frac = draw(rng, policy.cutout);
            let rh = ((frac * h as f64).round() as usize).clamp(1, h);
            let rw = ((frac * w as f64).round() as usize).clamp(1, w);
            let top = rng.gen_range(0..=h - rh);
            let left = rng.gen_range(0..=w - rw);
            cutout(&mut img, dims, top, left, rh, rw);
        }
        StrongOp::Translate => {
            let frac = draw(rng, policy.translate);
            let my = (frac * h as f64).round() as isize;
            let mx = (frac * w as f64).round() as isize;
            let dy = rng.gen_range(-my..=my);
            let dx = rng.gen_range(-mx..=mx);
            img = translate(&img, dims, dy, dx);
        }
        StrongOp::Rotate => {
            let k = if h == w { rng.gen_range(1..=3) } else { 2 };
            img = rotate(&img, dims, k);
        }
        _ => unreachable!("vector op on image sample"),
    }
    img
}
