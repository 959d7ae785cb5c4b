mod config;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adacm::data::{split, Dataset, Split};
use adacm::metrics::{aggregate, export_aggregate_csv, export_json, export_run_csv, RunMetrics};
use adacm::nn::{load_checkpoint, save_checkpoint, Model, ModelSpec};
use adacm::trainer::{evaluate, train, Mode, TrainConfig, TrainData};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "adacm", version, about = "Semi-supervised training with adaptive confidence margins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train `train.mode` once per seed.
    Train(Common),
    /// Train every configured mode for every seed and tabulate.
    Compare(Common),
    /// Score a checkpoint on the test split of one seed.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the configured mode (and the compare list).
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let o = Overrides {
            seed: self.seed,
            mode: self.mode,
            out: self.out.clone(),
            epochs: self.epochs,
        };
        RunConfig::load(&self.config, &o).map_err(Failure::setup)
    }
}

/// Exit 2 for bad input, 3 for failures while running.
enum Failure {
    Setup(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn setup(e: impl Display) -> Self {
        Failure::Setup(anyhow::anyhow!("{e}"))
    }
}

fn runtime<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => c.load().and_then(|cfg| cmd_train(&cfg)),
        Command::Compare(c) => c.load().and_then(|cfg| cmd_compare(&cfg)),
        Command::Eval { common, checkpoint } => common.load().and_then(|cfg| cmd_eval(&cfg, common.seed, checkpoint)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Setup(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ADACM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::setup(format!("ADACM_THREADS: expected a positive integer, found {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(Failure::setup)
}

struct Prepared {
    dataset: Dataset,
    splits: Vec<(u64, Split)>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, Failure> {
    let dataset = cfg.dataset().map_err(Failure::setup)?;
    let splits = cfg
        .seeds
        .iter()
        .map(|&s| {
            split(&dataset, &cfg.split.for_run(s))
                .map(|sp| (s, sp))
                .map_err(|e| Failure::setup(format!("split for seed {s}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    Ok(Prepared { dataset, splits })
}

struct Finished {
    mode: Mode,
    metrics: RunMetrics,
    model: Model,
}

fn run_one(cfg: &RunConfig, mode: Mode, seed: u64, s: &Split) -> anyhow::Result<Finished> {
    let train_cfg = TrainConfig {
        mode,
        seed,
        ..cfg.train.clone()
    };
    let data = TrainData {
        labeled: &s.labeled,
        unlabeled: &s.unlabeled,
        test: &s.test,
        truth: Some(&s.unlabeled_truth),
    };
    let out = train(&train_cfg, data).with_context(|| format!("{mode} seed {seed}"))?;
    let mut metrics = out.metrics;
    metrics.config_digest = cfg.run_digest(mode);
    if let Some(acc) = metrics.final_accuracy() {
        eprintln!("{mode} seed {seed}: final accuracy {:.2}%", 100.0 * acc);
    }
    Ok(Finished {
        mode,
        metrics,
        model: out.model,
    })
}

fn run_all(cfg: &RunConfig, prepared: &Prepared, modes: &[Mode]) -> Result<Vec<Finished>, Failure> {
    let jobs: Vec<(Mode, &(u64, Split))> =
        modes.iter().flat_map(|&m| prepared.splits.iter().map(move |s| (m, s))).collect();
    let pool = thread_pool()?;
    let results: Vec<anyhow::Result<Finished>> =
        pool.install(|| jobs.par_iter().map(|&(m, (seed, s))| run_one(cfg, m, *seed, s)).collect());
    runtime(results.into_iter().collect())
}

fn write_run(dir: &Path, f: &Finished) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    export_run_csv(&f.metrics, &dir.join("metrics.csv"))?;
    export_json(&f.metrics, &dir.join("metrics.json"))?;
    save_checkpoint(f.model.params(), &dir.join("final.ckpt"))?;
    Ok(())
}

fn write_header(cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out).with_context(|| cfg.out.display().to_string())?;
    let p = cfg.out.join("config.resolved.toml");
    std::fs::write(&p, cfg.to_toml()).with_context(|| p.display().to_string())?;
    let p = cfg.out.join("config.digest");
    std::fs::write(&p, format!("{}\n", cfg.digest())).with_context(|| p.display().to_string())?;
    Ok(())
}

fn seed_dir(base: &Path, seed: u64) -> PathBuf {
    base.join(format!("seed-{seed}"))
}

/// Writes per-seed outputs and, with two or more seeds, the aggregate.
fn write_mode(dir: &Path, runs: &[&Finished]) -> anyhow::Result<()> {
    for f in runs {
        write_run(&seed_dir(dir, f.metrics.seed), f)?;
    }
    if runs.len() >= 2 {
        let metrics: Vec<RunMetrics> = runs.iter().map(|f| f.metrics.clone()).collect();
        let report = aggregate(&metrics)?;
        export_json(&report, &dir.join("aggregate.json"))?;
        export_aggregate_csv(&[report], &dir.join("aggregate.csv"))?;
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), Failure> {
    let prepared = prepare(cfg)?;
    let runs = run_all(cfg, &prepared, &[cfg.train.mode])?;
    runtime(write_header(cfg))?;
    let refs: Vec<&Finished> = runs.iter().collect();
    runtime(write_mode(&cfg.out, &refs))?;
    println!("{}", cfg.out.display());
    Ok(())
}

/// One line of the comparison table; `std` is blank with a single seed.
#[derive(Debug, Serialize, Deserialize)]
struct ComparisonRow {
    mode: String,
    n: usize,
    mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    std: Option<f64>,
    min: f64,
    max: f64,
    config_digest: String,
}

pub const COMPARISON_HEADER: &str = "mode,n,mean,std,min,max,config_digest";

fn comparison_row(mode: Mode, runs: &[&Finished]) -> anyhow::Result<ComparisonRow> {
    let accs: Vec<f64> = runs
        .iter()
        .map(|f| f.metrics.final_accuracy().context("run has no test accuracy"))
        .collect::<anyhow::Result<_>>()?;
    if runs.len() >= 2 {
        let metrics: Vec<RunMetrics> = runs.iter().map(|f| f.metrics.clone()).collect();
        let r = aggregate(&metrics)?;
        return Ok(ComparisonRow {
            mode: r.mode,
            n: r.seeds.len(),
            mean: r.mean,
            std: Some(r.std),
            min: r.min,
            max: r.max,
            config_digest: r.config_digest,
        });
    }
    Ok(ComparisonRow {
        mode: mode.to_string(),
        n: 1,
        mean: accs[0],
        std: None,
        min: accs[0],
        max: accs[0],
        config_digest: runs[0].metrics.config_digest.clone(),
    })
}

fn write_comparison(out: &Path, rows: &[ComparisonRow]) -> anyhow::Result<()> {
    let mut text = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let std = r.std.map(|v| format!("{v:.16e}")).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{:.16e},{},{:.16e},{:.16e},{}\n",
            r.mode, r.n, r.mean, std, r.min, r.max, r.config_digest
        ));
    }
    let p = out.join("comparison.csv");
    std::fs::write(&p, text).with_context(|| p.display().to_string())?;
    export_json(&rows, &out.join("comparison.json"))?;
    Ok(())
}

fn mode_slug(mode: Mode) -> String {
    mode.to_string().replace(':', "-")
}

fn cmd_compare(cfg: &RunConfig) -> Result<(), Failure> {
    let prepared = prepare(cfg)?;
    let runs = run_all(cfg, &prepared, &cfg.modes)?;
    runtime(write_header(cfg))?;
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        let of_mode: Vec<&Finished> = runs.iter().filter(|f| f.mode == mode).collect();
        runtime(write_mode(&cfg.out.join(mode_slug(mode)), &of_mode))?;
        rows.push(runtime(comparison_row(mode, &of_mode))?);
    }
    runtime(write_comparison(&cfg.out, &rows))?;
    println!("{:<24} {:>3} {:>8} {:>8}", "mode", "n", "mean%", "std%");
    for r in &rows {
        let std = r.std.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into());
        println!("{:<24} {:>3} {:>8.2} {:>8}", r.mode, r.n, 100.0 * r.mean, std);
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, seed: Option<u64>, checkpoint: &Path) -> Result<(), Failure> {
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let prepared = prepare(&RunConfig {
        seeds: vec![seed],
        ..cfg.clone()
    })?;
    let (_, s) = &prepared.splits[0];
    if s.test.is_empty() {
        return Err(Failure::setup("split has no test samples; set split.test_fraction > 0"));
    }
    let spec = ModelSpec::new(
        prepared.dataset.sample_shape(),
        prepared.dataset.classes(),
        cfg.train.model.clone(),
    )
    .map_err(Failure::setup)?;
    let params = load_checkpoint(checkpoint)
        .map_err(|e| Failure::setup(format!("{}: {e}", checkpoint.display())))?;
    let model = Model::from_params(spec, params)
        .map_err(|e| Failure::setup(format!("{}: {e}", checkpoint.display())))?;
    let e = runtime(evaluate(&model, &s.test).map_err(Into::into))?;
    println!("accuracy {}", e.accuracy);
    for (c, a) in e.per_class.iter().enumerate() {
        match a {
            Some(a) => println!("class {c} {a}"),
            None => println!("class {c} -"),
        }
    }
    Ok(())
}
