//! End-to-end experiments: generate, train, evaluate, report.
//!
//! Every stage reads and writes files under `output_dir`, one subdirectory
//! per run seed:
//!
//! ```text
//! <output_dir>/
//!   config.toml            resolved configuration, output_dir = "."
//!   manifest.json          every other file with its sha256
//!   summary.json           medians across seeds
//!   seed-<s>/
//!     stream.csv           generate
//!     checkpoint.json      train
//!     train_log.csv        train
//!     train_error.txt      train, only when training diverged
//!     metrics.csv          evaluate
//!     steps.csv            evaluate (greedy policy only)
//!     heatmap.csv          evaluate (greedy policy only)
//!     report.json          report
//!     report_cnfs.txt      report
//!     report_alerts.txt    report
//! ```
//!
//! The manifest is derived from the directory contents alone, so running
//! the stages one by one leaves the same bytes as running them together.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dqn::{train_on_stream, GreedyPolicy, TrainConfig, TrainOutcome};
use crate::env::{write_step_log, EnvConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    run_policy_traced, static_name, write_metrics_csv, ComparisonReport, EpisodeMetrics, Heatmap, Policy,
    DQN_POLICY,
};
use crate::neuro::Checkpoint;
use crate::synth::{generate_stream, Stream, StreamConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STREAM_FILE: &str = "stream.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const TRAIN_ERROR_FILE: &str = "train_error.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CNFS_TABLE_FILE: &str = "report_cnfs.txt";
pub const ALERT_TABLE_FILE: &str = "report_alerts.txt";

/// Day ranges of the two partitions; both are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_start_day: u32,
    pub train_end_day: u32,
    pub test_end_day: u32,
}

impl Default for SplitConfig {
    /// March through September for training, October through December for
    /// testing.
    fn default() -> Self {
        SplitConfig {
            train_start_day: 60,
            train_end_day: 273,
            test_end_day: 365,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seeds, one independent run each.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Use `stream.seed` for every run instead of each run's own seed.
    pub shared_stream: bool,
    /// Replace `env.money_scale` and `env.money_scale_state` with the 95th
    /// percentile of daily fraud dollars in the training partition.
    pub auto_money_scale: bool,
    pub split: SplitConfig,
    pub stream: StreamConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("runs"),
            shared_stream: false,
            auto_money_scale: true,
            split: SplitConfig::default(),
            stream: StreamConfig::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        self.stream.validate()?;
        self.env.validate()?;
        self.train.validate()?;
        let SplitConfig {
            train_start_day,
            train_end_day,
            test_end_day,
        } = self.split;
        if !(1 <= train_start_day && train_start_day <= train_end_day) {
            return Err(Error::config("split", "need 1 <= train_start_day <= train_end_day"));
        }
        if !(train_end_day < test_end_day && test_end_day <= self.stream.num_days) {
            return Err(Error::config(
                "split",
                format!(
                    "need train_end_day < test_end_day <= stream.num_days ({})",
                    self.stream.num_days
                ),
            ));
        }
        Ok(())
    }

    /// sha256 of the resolved configuration, excluding where results go.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }

    /// Environment settings for a run trained on `train_part`.
    pub fn env_for(&self, train_part: &Stream) -> EnvConfig {
        if self.auto_money_scale {
            self.env.clone().scaled_to(train_part)
        } else {
            self.env.clone()
        }
    }

    fn stream_config_for(&self, seed: u64) -> StreamConfig {
        let mut s = self.stream.clone();
        if !self.shared_stream {
            s.seed = seed;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Train,
    Evaluate,
    Report,
    All,
}

impl Stage {
    pub const NAMES: [&'static str; 5] = ["generate", "train", "evaluate", "report", "all"];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "generate" => Stage::Generate,
            "train" => Stage::Train,
            "evaluate" => Stage::Evaluate,
            "report" => Stage::Report,
            "all" => Stage::All,
            _ => {
                return Err(Error::Input(format!(
                    "unknown stage `{name}`, expected one of {}",
                    Stage::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// Evaluate only the static thresholds; no checkpoint is needed.
    pub static_only: bool,
}

/// Per-seed outcome of the training stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStatus {
    pub seed: u64,
    pub trained: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub dqn_cnfs: Option<f64>,
    pub dqn_over_under: Option<u64>,
    pub best_static: String,
    pub best_static_cnfs: f64,
    pub best_static_over_under: u64,
    pub worst_static: String,
    pub worst_static_cnfs: f64,
    /// Static threshold index winning each test month.
    pub best_static_by_month: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub seeds: Vec<SeedSummary>,
    pub median_dqn_cnfs: Option<f64>,
    pub median_best_static_cnfs: f64,
    pub median_worst_static_cnfs: f64,
    pub median_dqn_over_under: Option<f64>,
    pub median_best_static_over_under: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub status: Vec<SeedStatus>,
    pub files: Vec<ManifestEntry>,
}

/// Runs one stage, or all of them, and refreshes the manifest.
pub fn run_stage(config: &ExperimentConfig, stage: Stage, options: StageOptions) -> Result<()> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    // Stored relative to itself so the artifacts do not depend on their location.
    let stored = ExperimentConfig {
        output_dir: PathBuf::from("."),
        ..config.clone()
    };
    write_file(&config.output_dir.join(CONFIG_FILE), stored.to_toml().as_bytes())?;
    match stage {
        Stage::Generate => generate(config)?,
        Stage::Train => train(config)?,
        Stage::Evaluate => evaluate(config, options)?,
        Stage::Report => {
            report(config)?;
        }
        Stage::All => {
            generate(config)?;
            if !options.static_only {
                train(config)?;
            }
            evaluate(config, options)?;
            report(config)?;
        }
    }
    write_manifest(config)?;
    Ok(())
}

/// All stages in sequence; returns the cross-seed summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    run_stage(config, Stage::All, StageOptions::default())?;
    read_summary(&config.output_dir)
}

pub fn generate(config: &ExperimentConfig) -> Result<()> {
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stream = generate_stream(&config.stream_config_for(seed))?;
        stream.write_csv(&dir.join(STREAM_FILE))?;
    }
    Ok(())
}

fn partitions(config: &ExperimentConfig, seed: u64) -> Result<(Stream, Stream)> {
    let path = config.seed_dir(seed).join(STREAM_FILE);
    let stream = read_stream(&path)?;
    let s = config.split;
    if stream.first_day() > s.train_start_day || stream.last_day() < s.test_end_day {
        return Err(Error::format(
            &path,
            format!(
                "covers days {}..={}, split needs {}..={}",
                stream.first_day(),
                stream.last_day(),
                s.train_start_day,
                s.test_end_day
            ),
        ));
    }
    let (train, test) = stream.slice_days(s.train_start_day, s.test_end_day)?.split(s.train_end_day, s.test_end_day)?;
    Ok((train, test))
}

fn read_stream(path: &Path) -> Result<Stream> {
    require(path, "run the generate stage first")?;
    Stream::read_csv(path)
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Input(format!("missing input file {} ({hint})", path.display())))
    }
}

/// Trains one policy per seed. A diverged seed leaves `train_error.txt`
/// instead of a checkpoint and the remaining seeds still run.
pub fn train(config: &ExperimentConfig) -> Result<()> {
    let hash = config.config_hash();
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let (train_part, _) = partitions(config, seed)?;
        let error_path = dir.join(TRAIN_ERROR_FILE);
        match train_on_stream(&config.env_for(&train_part), &train_part, &config.train, seed) {
            Ok(TrainOutcome {
                params,
                adam,
                log,
                seeds,
                ..
            }) => {
                remove_if_present(&error_path)?;
                log.write_csv(&dir.join(TRAIN_LOG_FILE))?;
                Checkpoint::new(params, adam, seeds, hash.clone()).save(&dir.join(CHECKPOINT_FILE))?;
            }
            Err(Error::Numeric(msg)) => {
                remove_if_present(&dir.join(CHECKPOINT_FILE))?;
                remove_if_present(&dir.join(TRAIN_LOG_FILE))?;
                write_file(&error_path, format!("{msg}\n").as_bytes())?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn load_policy(config: &ExperimentConfig, seed: u64) -> Result<Option<GreedyPolicy>> {
    let dir = config.seed_dir(seed);
    if dir.join(TRAIN_ERROR_FILE).is_file() {
        return Ok(None);
    }
    let path = dir.join(CHECKPOINT_FILE);
    require(&path, "run the train stage first, or evaluate with static thresholds only")?;
    let ckpt = Checkpoint::load(&path)?;
    let expected = config.config_hash();
    if ckpt.config_hash != expected {
        return Err(Error::format(
            &path,
            format!("trained under config {}, current config is {expected}", ckpt.config_hash),
        ));
    }
    Ok(Some(GreedyPolicy::new(ckpt.params)))
}

/// Evaluates every static threshold and, unless `static_only`, the trained
/// greedy policy on the test partition.
pub fn evaluate(config: &ExperimentConfig, options: StageOptions) -> Result<()> {
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let (train_part, test) = partitions(config, seed)?;
        let env = config.env_for(&train_part);
        let mut runs: Vec<(String, Vec<EpisodeMetrics>)> = Vec::new();
        for k in 0..env.num_actions() {
            let run = run_policy_traced(Policy::Static(k), &test, &env, seed)?;
            runs.push((static_name(k), run.metrics));
        }
        let policy = if options.static_only { None } else { load_policy(config, seed)? };
        match policy {
            Some(policy) => {
                let run = run_policy_traced(Policy::Greedy(&policy), &test, &env, seed)?;
                write_step_log(&dir.join(STEPS_FILE), &run.steps)?;
                let heatmap = Heatmap::from_actions(&run.actions, env.num_actions())?;
                write_file(&dir.join(HEATMAP_FILE), heatmap.to_csv().as_bytes())?;
                runs.push((DQN_POLICY.to_string(), run.metrics));
            }
            None => {
                remove_if_present(&dir.join(STEPS_FILE))?;
                remove_if_present(&dir.join(HEATMAP_FILE))?;
            }
        }
        write_metrics_csv(&dir.join(METRICS_FILE), &runs)?;
    }
    Ok(())
}

/// Builds per-seed reports from `metrics.csv` and the cross-seed summary.
pub fn report(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let path = dir.join(METRICS_FILE);
        require(&path, "run the evaluate stage first")?;
        let runs = crate::metrics::read_metrics_csv(&path)?;
        let report = ComparisonReport::build(&runs, None)?;
        write_file(&dir.join(REPORT_FILE), report.to_json().as_bytes())?;
        write_file(&dir.join(CNFS_TABLE_FILE), report.cnfs_table().as_bytes())?;
        write_file(&dir.join(ALERT_TABLE_FILE), report.alert_table().as_bytes())?;
        seeds.push(seed_summary(seed, &report)?);
    }
    let summary = summarize(config.config_hash(), seeds);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&config.output_dir.join(SUMMARY_FILE), text.as_bytes())?;
    Ok(summary)
}

fn seed_summary(seed: u64, report: &ComparisonReport) -> Result<SeedSummary> {
    let missing = || Error::Input(format!("seed {seed}: no static thresholds were evaluated"));
    let best = report.best_static.as_deref().ok_or_else(missing)?;
    let worst = report.worst_static.as_deref().ok_or_else(missing)?;
    let best = report.policy(best).ok_or_else(missing)?;
    let worst = report.policy(worst).ok_or_else(missing)?;
    let dqn = report.policy(DQN_POLICY);
    Ok(SeedSummary {
        seed,
        dqn_cnfs: dqn.map(|p| p.total_cnfs.dollars()),
        dqn_over_under: dqn.map(|p| p.alerts.sum),
        best_static: best.name.clone(),
        best_static_cnfs: best.total_cnfs.dollars(),
        best_static_over_under: best.alerts.sum,
        worst_static: worst.name.clone(),
        worst_static_cnfs: worst.total_cnfs.dollars(),
        best_static_by_month: report.best_static_by_month.iter().map(|&(_, k)| k).collect(),
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn summarize(config_hash: String, seeds: Vec<SeedSummary>) -> ExperimentSummary {
    let col = |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Vec<f64> { seeds.iter().filter_map(f).collect() };
    let med = |v: Vec<f64>| median(&v).unwrap_or(f64::NAN);
    ExperimentSummary {
        median_dqn_cnfs: median(&col(&|s| s.dqn_cnfs)),
        median_best_static_cnfs: med(col(&|s| Some(s.best_static_cnfs))),
        median_worst_static_cnfs: med(col(&|s| Some(s.worst_static_cnfs))),
        median_dqn_over_under: median(&col(&|s| s.dqn_over_under.map(|v| v as f64))),
        median_best_static_over_under: med(col(&|s| Some(s.best_static_over_under as f64))),
        config_hash,
        seeds,
    }
}

pub fn read_summary(output_dir: &Path) -> Result<ExperimentSummary> {
    let path = output_dir.join(SUMMARY_FILE);
    require(&path, "run the report stage first")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e))
}

pub fn read_manifest(output_dir: &Path) -> Result<Manifest> {
    let path = output_dir.join(MANIFEST_FILE);
    require(&path, "no stage has completed in this directory")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e))
}

/// Rewrites the manifest from the files currently under `output_dir`.
pub fn write_manifest(config: &ExperimentConfig) -> Result<Manifest> {
    let root = &config.output_dir;
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.retain(|e: &ManifestEntry| e.path != MANIFEST_FILE);
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let status = config
        .seeds
        .iter()
        .map(|&seed| {
            let dir = config.seed_dir(seed);
            let error = fs::read_to_string(dir.join(TRAIN_ERROR_FILE)).ok().map(|s| s.trim_end().to_string());
            SeedStatus {
                seed,
                trained: dir.join(CHECKPOINT_FILE).is_file(),
                error,
            }
        })
        .collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash(),
        seeds: config.seeds.clone(),
        status,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&root.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<ManifestEntry>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let rel = path.strip_prefix(root).expect("under root");
            let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(ManifestEntry {
                path: rel.join("/"),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn remove_if_present(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}
