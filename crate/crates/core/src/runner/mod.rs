//! Experiment orchestration: TOML configs with named presets, multi-seed
//! runs persisted as [`ResultRecord`] JSON, and comparison/report tables.
//!
//! A config file may name a `preset`; its own keys are deep-merged on top of
//! the preset before deserialization, so
//!
//! ```toml
//! preset = "seq-cifar10-duca-b200"
//! seeds = [0]
//! [train]
//! epochs_per_task = 1
//! ```
//!
//! runs the preset with one seed and one epoch per task.

mod presets;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::write_atomic;
use crate::data::loaders::{load_cifar10, load_cifar100, load_mnist, load_pixel_csv, split_per_class, synthetic_blobs};
use crate::data::manifest::DomainManifest;
use crate::data::stream::{
    build_domain_stream, build_gcil, build_sequential, rotate_mnist, rotation_angles, DomainSet, GcilConfig, Setting,
    TaskStream,
};
use crate::data::{ImageSet, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{average_accuracy, plasticity, recency_bias, stability, AccuracyMatrix, PredictionLog};
use crate::nn::{save_checkpoint, ArchKind, ArchitectureSpec};
use crate::trainer::{build_learner, train_stream, DucaConfig, LossBreakdown, Method, Telemetry};

pub use presets::{preset, preset_names};

/// Environment variable overriding the dataset root of every config.
pub const DATA_ROOT_ENV: &str = "DUCA_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum DatasetSpec {
    /// CIFAR-10 binary batches; `path` may be the extracted directory or
    /// its parent.
    Cifar10 {
        #[serde(default = "default_cifar10")]
        path: PathBuf,
    },
    Cifar100 {
        #[serde(default = "default_cifar100")]
        path: PathBuf,
    },
    /// MNIST IDX files (optionally gzipped).
    Mnist {
        #[serde(default = "default_mnist")]
        path: PathBuf,
    },
    /// One image per CSV row: pixels (0–255) then the label. Split per class.
    PixelCsv {
        path: PathBuf,
        shape: (usize, usize, usize),
        num_classes: usize,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    Synthetic {
        num_classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        shape: (usize, usize, usize),
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Domain manifest (`path class domain split` TSV); image paths are
    /// relative to `images` (default: the manifest's directory).
    Manifest {
        path: PathBuf,
        #[serde(default)]
        images: Option<PathBuf>,
        shape: (usize, usize, usize),
        num_classes: usize,
    },
}

fn default_cifar10() -> PathBuf {
    "cifar-10-batches-bin".into()
}
fn default_cifar100() -> PathBuf {
    "cifar-100-binary".into()
}
fn default_mnist() -> PathBuf {
    "mnist".into()
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_noise() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub setting: Setting,
    /// Sequential splits and rotations; ignored for GCIL (see `gcil`) and
    /// manifest streams (one task per domain).
    #[serde(default)]
    pub num_tasks: Option<usize>,
    /// Shuffles the class order before splitting (identity when absent).
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    #[serde(default)]
    pub gcil: GcilConfig,
    #[serde(default)]
    pub gcil_seed: u64,
    /// Rotation streams: angles evenly spaced over `[0, rotation_span)`.
    #[serde(default = "default_span")]
    pub rotation_span: f64,
    /// Keep only the first N training images of each class.
    #[serde(default)]
    pub train_per_class: Option<usize>,
}

fn default_span() -> f64 {
    180.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub name: ArchKind,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub depth: Option<usize>,
}

impl ArchConfig {
    pub fn spec(&self, input_shape: (usize, usize, usize)) -> Result<ArchitectureSpec> {
        let mut spec = match self.name {
            ArchKind::Mlp => ArchitectureSpec::mlp(input_shape),
            ArchKind::SmallCnn => ArchitectureSpec::small_cnn(input_shape),
            ArchKind::Resnet18 => ArchitectureSpec::resnet18(input_shape),
        };
        if let Some(w) = self.width {
            spec.width = w;
        }
        if let Some(d) = self.depth {
            spec.depth = d;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Root against which relative dataset paths resolve; overridden by
    /// `DUCA_DATA_ROOT`.
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub stream: StreamSpec,
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: DucaConfig,
    #[serde(default)]
    pub save_checkpoints: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_output() -> PathBuf {
    "runs".into()
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses a config, resolving an optional `preset` key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::config(format!("invalid TOML: {e}")))?;
        let table = match table.remove("preset") {
            Some(toml::Value::String(name)) => {
                let base = preset(&name).ok_or_else(|| {
                    Error::config(format!("unknown preset `{name}` (known: {})", preset_names().join(", ")))
                })?;
                let mut base = toml::Table::try_from(base).map_err(|e| Error::config(e.to_string()))?;
                merge(&mut base, table);
                base
            }
            Some(_) => return Err(Error::config("`preset` must be a string")),
            None => table,
        };
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::config(format!("config {} not found", path.display())),
            _ => Error::at_path(path)(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid experiment name `{}`", self.name)));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must be non-empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        self.train.validate()?;
        match (&self.dataset, self.stream.setting) {
            (DatasetSpec::Manifest { .. }, s) if s != Setting::DomainIl => {
                Err(Error::config("manifest datasets only form domain-incremental streams"))
            }
            (_, Setting::ClassIl | Setting::TaskIl) if self.stream.num_tasks.is_none() => {
                Err(Error::config("stream.num_tasks is required for class/task-incremental streams"))
            }
            (DatasetSpec::Manifest { .. }, _) => Ok(()),
            (_, Setting::DomainIl) if self.stream.num_tasks.is_none() => {
                Err(Error::config("stream.num_tasks (number of rotations) is required"))
            }
            _ => Ok(()),
        }
    }

    /// Dataset root: `DUCA_DATA_ROOT`, else `data_root`, else `data`.
    pub fn data_root(&self) -> PathBuf {
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.data_root.clone().unwrap_or_else(|| "data".into()),
        }
    }

    /// Identity of the data stream, used to refuse comparing runs on
    /// different streams.
    pub fn stream_id(&self) -> String {
        let key = serde_json::to_vec(&(&self.dataset, &self.stream)).expect("spec serializes");
        hex::encode(&Sha256::digest(&key)[..8])
    }

    pub fn stream_label(&self) -> String {
        let data = match &self.dataset {
            DatasetSpec::Cifar10 { .. } => "cifar10".to_string(),
            DatasetSpec::Cifar100 { .. } => "cifar100".to_string(),
            DatasetSpec::Mnist { .. } => "mnist".to_string(),
            DatasetSpec::PixelCsv { path, .. } | DatasetSpec::Manifest { path, .. } => path.display().to_string(),
            DatasetSpec::Synthetic { num_classes, .. } => format!("synthetic{num_classes}"),
        };
        let tasks = match self.stream.setting {
            Setting::Gcil => self.stream.gcil.num_tasks.to_string(),
            _ => self.stream.num_tasks.map_or("domains".into(), |n| n.to_string()),
        };
        format!("{data}/{}/{tasks}", setting_name(self.stream.setting))
    }
}

fn setting_name(s: Setting) -> &'static str {
    match s {
        Setting::ClassIl => "class-il",
        Setting::TaskIl => "task-il",
        Setting::DomainIl => "domain-il",
        Setting::Gcil => "gcil",
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn keep_per_class(set: &ImageSet, num_classes: usize, n: usize) -> ImageSet {
    let mut keep: Vec<usize> = (0..num_classes).flat_map(|c| set.indices_of_class(c).into_iter().take(n)).collect();
    keep.sort_unstable();
    set.select(&keep)
}

/// Loads the dataset and forms the task stream described by `cfg`.
pub fn build_stream(cfg: &ExperimentConfig) -> Result<TaskStream> {
    let root = cfg.data_root();
    let labeled = |ds: LabeledDataset| -> Result<LabeledDataset> {
        ds.validate()?;
        Ok(match cfg.stream.train_per_class {
            Some(n) => LabeledDataset { train: keep_per_class(&ds.train, ds.num_classes, n), ..ds },
            None => ds,
        })
    };
    let ds = match &cfg.dataset {
        DatasetSpec::Cifar10 { path } => labeled(load_cifar10(&resolve(&root, path))?)?,
        DatasetSpec::Cifar100 { path } => labeled(load_cifar100(&resolve(&root, path))?)?,
        DatasetSpec::Mnist { path } => labeled(load_mnist(&resolve(&root, path))?)?,
        DatasetSpec::PixelCsv { path, shape, num_classes, test_fraction } => {
            let all = load_pixel_csv(&resolve(&root, path), *shape)?;
            let (train, test) = split_per_class(&all, *num_classes, *test_fraction);
            labeled(LabeledDataset { name: path.display().to_string(), train, test, num_classes: *num_classes })?
        }
        DatasetSpec::Synthetic { num_classes, train_per_class, test_per_class, shape, noise, seed } => {
            labeled(synthetic_blobs(*num_classes, *train_per_class, *test_per_class, *shape, *noise, *seed))?
        }
        DatasetSpec::Manifest { path, images, shape, num_classes } => {
            let path = resolve(&root, path);
            let manifest = DomainManifest::load(&path)?;
            let images = match images {
                Some(p) => resolve(&root, p),
                None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let mut set = DomainSet::from_manifest(&manifest, &images, *shape, *num_classes)?;
            if let Some(n) = cfg.stream.train_per_class {
                for d in &mut set.domains {
                    d.train = keep_per_class(&d.train, *num_classes, n);
                }
            }
            return build_domain_stream(&set);
        }
    };
    let stream = match cfg.stream.setting {
        Setting::ClassIl | Setting::TaskIl => {
            let s = build_sequential(&ds, cfg.stream.num_tasks.unwrap_or(0), cfg.stream.shuffle_seed)?;
            if cfg.stream.setting == Setting::TaskIl {
                s.as_task_il()
            } else {
                s
            }
        }
        Setting::Gcil => build_gcil(&ds, &cfg.stream.gcil, cfg.stream.gcil_seed)?,
        Setting::DomainIl => {
            let angles = rotation_angles(cfg.stream.num_tasks.unwrap_or(0), cfg.stream.rotation_span);
            build_domain_stream(&rotate_mnist(&ds, &angles)?)?
        }
    };
    Ok(stream)
}

/// Platform details stored with every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFingerprint {
    pub os: String,
    pub arch: String,
    pub accelerator: String,
    pub threads: usize,
    pub crate_version: String,
    pub debug_build: bool,
}

impl EnvFingerprint {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            accelerator: "cpu".into(),
            threads: std::thread::available_parallelism().map_or(1, usize::from),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            debug_build: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean of the final accuracy row (Class-IL / Domain-IL / GCIL).
    pub accuracy: f64,
    pub task_il: Option<f64>,
    pub plasticity: Option<f64>,
    pub stability: Option<f64>,
}

impl Metrics {
    pub fn from_matrices(acc: &AccuracyMatrix, task_il: Option<&AccuracyMatrix>) -> Result<Self> {
        Ok(Self {
            accuracy: average_accuracy(acc)?,
            task_il: task_il.map(average_accuracy).transpose()?,
            plasticity: plasticity(acc).ok(),
            stability: stability(acc).ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: AccuracyMatrix,
    pub task_il: Option<AccuracyMatrix>,
    pub metrics: Metrics,
    /// Mean softmax mass per task's classes over all test samples
    /// (class-incremental streams only).
    pub recency: Option<Vec<f64>>,
    pub steps: usize,
    pub wall_clock_secs: f64,
    pub epochs: Vec<(usize, usize, LossBreakdown)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state")]
pub enum RunStatus {
    Completed,
    Failed { error: String, exit_code: i32 },
}

pub const RECORD_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub format: u32,
    pub name: String,
    pub method: Method,
    pub setting: Setting,
    pub stream_id: String,
    pub stream_label: String,
    /// Fully resolved config, as TOML.
    pub config: String,
    pub config_sha256: String,
    pub status: RunStatus,
    pub seeds: Vec<SeedResult>,
    pub wall_clock_secs: f64,
    pub env: EnvFingerprint,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ResultRecord {
    pub fn validate(&self) -> Result<()> {
        if self.format != RECORD_FORMAT {
            return Err(Error::format(format!("unsupported record format {}", self.format)));
        }
        if sha256_hex(self.config.as_bytes()) != self.config_sha256 {
            return Err(Error::format("config hash does not match the stored config"));
        }
        let cfg = ExperimentConfig::from_toml(&self.config)
            .map_err(|e| Error::format(format!("stored config does not parse: {e}")))?;
        if cfg.name != self.name || cfg.method != self.method || cfg.stream.setting != self.setting {
            return Err(Error::format("record header disagrees with its stored config"));
        }
        if cfg.stream_id() != self.stream_id {
            return Err(Error::format("stream id does not match the stored config"));
        }
        if self.status == RunStatus::Completed && self.seeds.is_empty() {
            return Err(Error::format("completed record without seed results"));
        }
        for s in &self.seeds {
            s.accuracy.validate()?;
            if let Some(m) = &s.task_il {
                m.validate()?;
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let r: Self = serde_json::from_slice(bytes).map_err(|e| Error::format(format!("invalid result record: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path).map_err(Error::at_path(path))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self).expect("record serializes"))
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Where [`run`] writes the record of `cfg`.
pub fn record_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}.json", cfg.name))
}

/// Trains every seed of `cfg` on `stream` and returns the record (not
/// persisted). The first failing seed aborts with its error.
pub fn run_on_stream(cfg: &ExperimentConfig, stream: &TaskStream) -> Result<ResultRecord> {
    cfg.validate()?;
    stream.validate()?;
    let started = Instant::now();
    let spec = cfg.arch.spec(stream.image_shape())?;
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let t0 = Instant::now();
        log::info!("{}: seed {seed}", cfg.name);
        let mut learner = build_learner(cfg.method, &spec, stream.num_classes, &cfg.train, seed)?;
        let mut telemetry = Telemetry::default();
        let out = train_stream(learner.as_mut(), stream, &cfg.train, seed, &mut telemetry)?;
        let recency = match stream.setting {
            Setting::ClassIl => {
                let log = PredictionLog::collect(learner.eval_net(), stream);
                Some(recency_bias(&log, &stream.class_lists())?)
            }
            _ => None,
        };
        if cfg.save_checkpoints {
            let path = cfg.output_dir.join(&cfg.name).join(format!("seed{seed}.ckpt"));
            save_checkpoint(learner.eval_net(), &path)?;
        }
        seeds.push(SeedResult {
            seed,
            metrics: Metrics::from_matrices(&out.accuracy, out.task_il.as_ref())?,
            accuracy: out.accuracy,
            task_il: out.task_il,
            recency,
            steps: out.steps,
            wall_clock_secs: t0.elapsed().as_secs_f64(),
            epochs: telemetry.epochs,
        });
    }
    Ok(new_record(cfg, RunStatus::Completed, seeds, started.elapsed().as_secs_f64()))
}

fn new_record(cfg: &ExperimentConfig, status: RunStatus, seeds: Vec<SeedResult>, secs: f64) -> ResultRecord {
    let config = cfg.to_toml();
    ResultRecord {
        format: RECORD_FORMAT,
        name: cfg.name.clone(),
        method: cfg.method,
        setting: cfg.stream.setting,
        stream_id: cfg.stream_id(),
        stream_label: cfg.stream_label(),
        config_sha256: sha256_hex(config.as_bytes()),
        config,
        status,
        seeds,
        wall_clock_secs: secs,
        env: EnvFingerprint::current(),
    }
}

/// Builds the stream, trains every seed and persists the record. On failure
/// a record in the failed state is written before the error is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let started = Instant::now();
    let path = record_path(cfg);
    let result = build_stream(cfg).and_then(|s| run_on_stream(cfg, &s));
    match result {
        Ok(record) => {
            record.save(&path)?;
            Ok(record)
        }
        Err(e) => {
            let status = RunStatus::Failed { error: e.to_string(), exit_code: e.exit_code() };
            let record = new_record(cfg, status, Vec::new(), started.elapsed().as_secs_f64());
            if let Err(save_err) = record.save(&path) {
                log::warn!("could not record failure: {save_err}");
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}±{:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub method: Method,
    pub seeds: usize,
    pub accuracy: MeanStd,
    pub task_il: Option<MeanStd>,
    pub plasticity: Option<MeanStd>,
    pub stability: Option<MeanStd>,
    /// Mean accuracy minus the best row's mean (0 for the best).
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub stream_label: String,
    pub setting: Setting,
    /// Sorted by mean accuracy, best first.
    pub rows: Vec<ComparisonRow>,
    /// Failed runs: (name, error).
    pub failed: Vec<(String, String)>,
}

fn collect(seeds: &[SeedResult], f: impl Fn(&Metrics) -> Option<f64>) -> Option<MeanStd> {
    let v: Option<Vec<f64>> = seeds.iter().map(|s| f(&s.metrics)).collect();
    v.and_then(|v| MeanStd::of(&v))
}

/// Mean ± std over seeds for each record. All records must share a stream.
pub fn compare(records: &[ResultRecord]) -> Result<Comparison> {
    let first = records.first().ok_or_else(|| Error::Comparison("no records to compare".into()))?;
    if let Some(r) = records.iter().find(|r| r.stream_id != first.stream_id) {
        return Err(Error::Comparison(format!(
            "`{}` ran on {} but `{}` on {}",
            first.name, first.stream_label, r.name, r.stream_label
        )));
    }
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for r in records {
        match &r.status {
            RunStatus::Failed { error, .. } => failed.push((r.name.clone(), error.clone())),
            RunStatus::Completed => rows.push(ComparisonRow {
                name: r.name.clone(),
                method: r.method,
                seeds: r.seeds.len(),
                accuracy: collect(&r.seeds, |m| Some(m.accuracy)).expect("completed record has seeds"),
                task_il: collect(&r.seeds, |m| m.task_il),
                plasticity: collect(&r.seeds, |m| m.plasticity),
                stability: collect(&r.seeds, |m| m.stability),
                gap: 0.0,
            }),
        }
    }
    rows.sort_by(|a, b| b.accuracy.mean.total_cmp(&a.accuracy.mean).then_with(|| a.name.cmp(&b.name)));
    if let Some(best) = rows.first().map(|r| r.accuracy.mean) {
        rows.iter_mut().for_each(|r| r.gap = r.accuracy.mean - best);
    }
    Ok(Comparison { stream_label: first.stream_label.clone(), setting: first.setting, rows, failed })
}

fn opt(v: &Option<MeanStd>) -> String {
    v.map_or("-".into(), |m| m.to_string())
}

fn opt_csv(v: &Option<MeanStd>) -> (String, String) {
    v.map_or((String::new(), String::new()), |m| (format!("{:.4}", m.mean), format!("{:.4}", m.std)))
}

impl Comparison {
    fn accuracy_header(&self) -> &'static str {
        match self.setting {
            Setting::ClassIl => "Class-IL",
            Setting::TaskIl => "Task-IL",
            Setting::DomainIl => "Domain-IL",
            Setting::Gcil => "GCIL",
        }
    }

    pub fn csv_header() -> &'static str {
        "stream,name,method,seeds,accuracy_mean,accuracy_std,task_il_mean,task_il_std,plasticity_mean,plasticity_std,stability_mean,stability_std,gap"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let (tm, ts) = opt_csv(&r.task_il);
                let (pm, ps) = opt_csv(&r.plasticity);
                let (sm, ss) = opt_csv(&r.stability);
                format!(
                    "{},{},{},{},{:.4},{:.4},{tm},{ts},{pm},{ps},{sm},{ss},{:.4}",
                    self.stream_label, r.name, r.method, r.seeds, r.accuracy.mean, r.accuracy.std, r.gap
                )
            })
            .collect()
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.stream_label)?;
        let show_til = self.rows.iter().any(|r| r.task_il.is_some()) && self.setting == Setting::ClassIl;
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        write!(f, "{:<width$}  {:<7} {:>5}  {:>13}", "name", "method", "seeds", self.accuracy_header())?;
        if show_til {
            write!(f, "  {:>13}", "Task-IL")?;
        }
        writeln!(f, "  {:>8}", "gap")?;
        for r in &self.rows {
            write!(f, "{:<width$}  {:<7} {:>5}  {:>13}", r.name, r.method.to_string(), r.seeds, r.accuracy.to_string())?;
            if show_til {
                write!(f, "  {:>13}", opt(&r.task_il))?;
            }
            writeln!(f, "  {:>8.2}", r.gap)?;
        }
        for (name, err) in &self.failed {
            writeln!(f, "{name}: FAILED ({err})")?;
        }
        Ok(())
    }
}

/// Every `*.json` record under `dir` (non-recursive), sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<ResultRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(Error::at_path(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(format!("no result records in {}", dir.display())));
    }
    paths.iter().map(|p| ResultRecord::load(p)).collect()
}

fn matrix_csv(m: &AccuracyMatrix) -> String {
    let mut s = (0..m.num_tasks).map(|j| format!("task{j}")).collect::<Vec<_>>().join(",");
    s.insert_str(0, "after,");
    s.push('\n');
    for (i, row) in m.rows.iter().enumerate() {
        s.push_str(&i.to_string());
        for v in row {
            s.push_str(&format!(",{v:.4}"));
        }
        s.push('\n');
    }
    s
}

/// Writes plot-ready CSVs for `records` into `out` and returns the text
/// summary (one comparison table per stream).
///
/// * `summary.csv`: one row per record.
/// * `<name>.seed<k>.accuracy.csv` (and `.task_il.csv`): accuracy matrices.
/// * `recency.csv`: per-task softmax mass, per record and seed.
/// * `losses.csv`: per-epoch mean losses.
pub fn write_report(records: &[ResultRecord], out: &Path) -> Result<String> {
    let mut groups: BTreeMap<&str, Vec<ResultRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.stream_id.as_str()).or_default().push(r.clone());
    }
    let mut summary = format!("{}\n", Comparison::csv_header());
    let mut text = String::new();
    for group in groups.values() {
        let cmp = compare(group)?;
        for line in cmp.csv_rows() {
            summary.push_str(&line);
            summary.push('\n');
        }
        text.push_str(&cmp.to_string());
        text.push('\n');
    }
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;

    let mut recency = String::from("name,seed,task,mass\n");
    let mut losses = String::from("name,seed,task,epoch,sup_wm,sup_ibl,biks,ks_wm,ks_ibl,total_wm,total_ibl\n");
    let o = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for r in records.iter().filter(|r| r.completed()) {
        for s in &r.seeds {
            write_atomic(&out.join(format!("{}.seed{}.accuracy.csv", r.name, s.seed)), matrix_csv(&s.accuracy).as_bytes())?;
            if let Some(m) = &s.task_il {
                write_atomic(&out.join(format!("{}.seed{}.task_il.csv", r.name, s.seed)), matrix_csv(m).as_bytes())?;
            }
            for (t, v) in s.recency.iter().flatten().enumerate() {
                recency.push_str(&format!("{},{},{t},{v:.6}\n", r.name, s.seed));
            }
            for (t, e, l) in &s.epochs {
                losses.push_str(&format!(
                    "{},{},{t},{e},{:.6},{:.6},{:.6},{},{},{:.6},{:.6}\n",
                    r.name,
                    s.seed,
                    l.sup_wm,
                    l.sup_ibl,
                    l.biks,
                    o(l.ks_wm),
                    o(l.ks_ibl),
                    l.total_wm,
                    l.total_ibl
                ));
            }
        }
    }
    write_atomic(&out.join("recency.csv"), recency.as_bytes())?;
    write_atomic(&out.join("losses.csv"), losses.as_bytes())?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            name = "tiny"
            method = "er"
            seeds = [0, 1]
            [dataset]
            kind = "synthetic"
            num_classes = 4
            train_per_class = 6
            test_per_class = 3
            shape = [1, 8, 8]
            [stream]
            setting = "class-il"
            num_tasks = 2
            [arch]
            name = "mlp"
            width = 8
            depth = 1
            [train]
            epochs_per_task = 1
            batch_size = 4
            buffer_capacity = 4
            augment = { kind = "none" }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn preset_values_follow_table() {
        let c = preset("seq-cifar10-duca-b200").unwrap();
        assert_eq!((c.train.smu_rate, c.train.lambda, c.train.gamma), (0.2, 0.1, 0.1));
        assert_eq!(c.train.buffer_capacity, 200);
        assert_eq!(preset("dn4il-duca-b500").unwrap().train.smu_rate, 0.08);
        for name in preset_names() {
            preset(&name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn preset_overrides_merge() {
        let c = ExperimentConfig::from_toml("preset = \"seq-cifar100-duca-b500\"\nseeds = [7]\n[train]\nepochs_per_task = 2\n")
            .unwrap();
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.train.epochs_per_task, 2);
        assert_eq!(c.train.smu_rate, 0.06);
        assert_eq!(c.train.gamma, 0.01);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in ["preset = \"nope\"", "name = \"x\"", "preset = \"seq-cifar10-er-b200\"\nseeds = []", "[[["] {
            let e = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{text}: {e}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let c = small();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn run_on_synthetic_and_compare() {
        let cfg = small();
        let stream = build_stream(&cfg).unwrap();
        let rec = run_on_stream(&cfg, &stream).unwrap();
        rec.validate().unwrap();
        assert_eq!(rec.seeds.len(), 2);
        let cmp = compare(std::slice::from_ref(&rec)).unwrap();
        let mean = rec.seeds.iter().map(|s| s.metrics.accuracy).sum::<f64>() / 2.0;
        assert!((cmp.rows[0].accuracy.mean - mean).abs() < 1e-9);
        assert_eq!(cmp.rows[0].gap, 0.0);

        let mut other = rec.clone();
        other.stream_id = "different".into();
        assert!(matches!(compare(&[rec, other]), Err(Error::Comparison(_))));
    }

    #[test]
    fn tampered_config_fails_validation() {
        let cfg = small();
        let mut rec = new_record(&cfg, RunStatus::Completed, Vec::new(), 0.0);
        rec.status = RunStatus::Failed { error: "x".into(), exit_code: 2 };
        rec.validate().unwrap();
        rec.config.push(' ');
        assert!(rec.validate().is_err());
    }

    #[test]
    fn mean_std_population() {
        let m = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(m.to_string(), "2.00±1.00");
    }
}
