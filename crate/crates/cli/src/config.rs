use std::path::{Path, PathBuf};

use adacm::data::{load_dataset, synth_benchmark, DataSource, Dataset, SplitSpec, SynthSpec};
use adacm::trainer::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// One experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Modes run by `compare`, in table order.
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    pub dataset: DatasetConfig,
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

pub fn default_modes() -> Vec<Mode> {
    vec![
        Mode::Supervised,
        Mode::FixedThreshold(0.5),
        Mode::FixedThreshold(0.8),
        Mode::FixedThreshold(0.95),
        Mode::AdaCmNoContrastive,
        Mode::ContrastiveOnly,
        Mode::AdaCm,
    ]
}

/// Exactly one of `synth` or `file`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<FileDataset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    pub source: DataSource,
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads, applies overrides, anchors relative paths at the config's directory and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
            .canonicalize()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(s) = overrides.seed {
            cfg.seeds = vec![s];
        }
        if let Some(m) = overrides.mode {
            cfg.train.mode = m;
            cfg.modes = vec![m];
        }
        if let Some(o) = &overrides.out {
            cfg.out = std::env::current_dir().map_err(|e| e.to_string())?.join(o);
        }
        if let Some(e) = overrides.epochs {
            cfg.train.epochs = e;
        }
        absolutize(&base, &mut cfg.out);
        if let Some(f) = &mut cfg.dataset.file {
            match &mut f.source {
                DataSource::Idx { images, labels } => {
                    absolutize(&base, images);
                    absolutize(&base, labels);
                }
                DataSource::Manifest { path } | DataSource::Delimited { path } => absolutize(&base, path),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            return Err("seeds: at least one seed is required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err("seeds: duplicate seed".into());
        }
        if self.modes.is_empty() {
            return Err("modes: at least one mode is required".into());
        }
        if self.train.seed != 0 {
            return Err("train.seed: set run seeds with the top-level `seeds` list".into());
        }
        match (&self.dataset.synth, &self.dataset.file) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err("dataset: set exactly one of [dataset.synth] or [dataset.file]".into()),
        }
        if !(0.0..1.0).contains(&self.split.test_fraction) {
            return Err(format!("split.test_fraction: {} not in [0, 1)", self.split.test_fraction));
        }
        self.train.validate().map_err(|e| format!("train: {e}"))
    }

    pub fn dataset(&self) -> adacm::Result<Dataset> {
        match (&self.dataset.synth, &self.dataset.file) {
            (Some(s), _) => synth_benchmark(s),
            (_, Some(f)) => load_dataset(&f.source, f.classes),
            _ => unreachable!("validated"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let canonical = serde_json::to_value(&c).expect("config serializes").to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Digest shared by every seed of `mode`.
    pub fn run_digest(&self, mode: Mode) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.modes = vec![mode];
        c.train.mode = mode;
        c.digest()
    }
}
