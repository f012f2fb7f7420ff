//! Experiment orchestration: TOML configs, multi-trial runs of SETrLUSI and
//! its two baselines, result files and the scaling benchmark.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_synthetic_domains, kmeans_cluster, load_csv_dataset, make_transfer_task, split_labeled_target, CsvSchema,
    DomainDataset, Scaling, SyntheticSpec, TargetRule, TransferTask,
};
use crate::ensemble::{error_rate, train_setrlusi, TrainConfig};
use crate::error::{Error, Result};
use crate::learner::{fit_weak_learner, HyperParams, RegularizerMode};
use crate::linalg::KernelConfig;
use crate::par::{map_range, with_workers, Execution};
use crate::predicates::{build_predicate_pool, PoolConfig, DEFAULT_MAX_EPOCHS};
use crate::sampling::{derive_seed, RngStream, StreamTag};
use crate::stats::{friedman_statistic, nemenyi_cd, FriedmanResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Setrlusi,
    /// One weak learner on the whole labeled target with the `Ones` predicate.
    LusiOnes,
    /// SETrLUSI with `tau = 0`.
    SetrlusiNoSi,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Setrlusi, Method::LusiOnes, Method::SetrlusiNoSi];

    pub fn name(self) -> &'static str {
        match self {
            Method::Setrlusi => "setrlusi",
            Method::LusiOnes => "lusi_ones",
            Method::SetrlusiNoSi => "setrlusi_no_si",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn is_ensemble(self) -> bool {
        self != Method::LusiOnes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    JsonLines,
    Csv,
}

/// Where wall times go. `Sidecar` keeps the result files reproducible byte for
/// byte and writes times to `timing.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    Inline,
    #[default]
    Sidecar,
}

/// Rotated-Gaussian task. Unset geometry falls back to the twelve-domain grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    #[serde(default = "default_n_per_domain")]
    pub n_per_domain: usize,
    /// Zero-based domain index of the target.
    #[serde(default)]
    pub target: usize,
    /// Zero-based source domain indices; empty means every other domain.
    #[serde(default)]
    pub sources: Vec<usize>,
    #[serde(default)]
    pub rotation_angles: Option<Vec<f64>>,
    #[serde(default)]
    pub centers: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub compactness: Option<Vec<f64>>,
    #[serde(default)]
    pub class_offset: Option<[f64; 2]>,
    #[serde(default)]
    pub base_std: Option<[f64; 2]>,
}

fn default_n_per_domain() -> usize {
    200
}

impl SyntheticTask {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        let mut spec = SyntheticSpec::grid12(self.n_per_domain, seed);
        if let Some(a) = &self.rotation_angles {
            spec.rotation_angles = a.clone();
        }
        if let Some(c) = &self.centers {
            spec.centers = c.clone();
        }
        if let Some(c) = &self.compactness {
            spec.compactness = c.clone();
        }
        if let Some(o) = self.class_offset {
            spec.class_offset = o;
        }
        if let Some(s) = self.base_std {
            spec.base_std = s;
        }
        spec
    }
}

/// One CSV split into domains by k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterTask {
    pub csv: PathBuf,
    /// Zero-based feature indices used for clustering.
    pub features: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub target: TargetRule,
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default = "default_task_name")]
    pub name: String,
    /// Fraction of the target that is labeled for training.
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default)]
    pub positive_label: Option<String>,
    #[serde(default)]
    pub source_csvs: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub target_csv: Option<PathBuf>,
    #[serde(default)]
    pub cluster: Option<ClusterTask>,
    #[serde(default)]
    pub synthetic_spec: Option<SyntheticTask>,
}

fn default_task_name() -> String {
    "task".into()
}

fn default_split() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(rename = "H", default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub regularizer_mode: RegularizerMode,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default = "default_epochs")]
    pub classifier_epochs: usize,
    /// When set, `tau` is chosen from this grid per trial.
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
    /// When set, `gamma` is chosen from this grid per trial.
    #[serde(default)]
    pub gamma_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub execution: Execution,
}

fn default_tau() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    0.5
}

fn default_lambda() -> f64 {
    1e-2
}

fn default_rounds() -> usize {
    100
}

fn default_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            tau: default_tau(),
            gamma: default_gamma(),
            lambda: default_lambda(),
            rounds: default_rounds(),
            kernel: KernelConfig::default(),
            regularizer_mode: RegularizerMode::default(),
            scaling: Scaling::default(),
            pool: PoolConfig::default(),
            classifier_epochs: default_epochs(),
            tau_grid: None,
            gamma_grid: None,
            execution: Execution::default(),
        }
    }
}

/// Grids for hyperparameter selection.
pub const TAU_GRID: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
pub const GAMMA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

impl ModelConfig {
    pub fn params(&self, tau: f64) -> HyperParams {
        HyperParams {
            tau,
            lambda: self.lambda,
            kernel: self.kernel,
            regularizer_mode: self.regularizer_mode,
        }
    }

    pub fn train_config(&self, tau: f64, gamma: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            rounds: self.rounds,
            gamma,
            params: self.params(tau),
            master_seed: seed,
            classifier_epochs: self.classifier_epochs,
            execution: self.execution,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Concurrent trials; `0` uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

fn default_trials() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trials: default_trials(),
            workers: 0,
            output: default_output(),
            format: OutputFormat::default(),
            timing: Timing::default(),
            methods: default_methods(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: TaskConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Config::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let t = &mut self.task;
        t.source_csvs.iter_mut().flatten().for_each(fix);
        t.target_csv.iter_mut().for_each(fix);
        if let Some(c) = &mut t.cluster {
            fix(&mut c.csv);
        }
        fix(&mut self.experiment.output);
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        let kinds = [t.synthetic_spec.is_some(), t.cluster.is_some(), t.source_csvs.is_some()];
        if kinds.iter().filter(|k| **k).count() != 1 {
            return Err(Error::Config(
                "task needs exactly one of `synthetic_spec`, `cluster` or `source_csvs`".into(),
            ));
        }
        if t.source_csvs.is_some() && t.target_csv.is_none() {
            return Err(Error::Config("`source_csvs` requires `target_csv`".into()));
        }
        if (t.source_csvs.is_some() || t.cluster.is_some()) && t.label_column.is_none() {
            return Err(Error::Config("CSV tasks require `label_column`".into()));
        }
        if !(t.split_fraction > 0.0 && t.split_fraction < 1.0) {
            return Err(Error::Config(format!("split_fraction must lie in (0, 1), got {}", t.split_fraction)));
        }
        if self.experiment.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.experiment.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        let m = &self.model;
        let to_config = |e: Error| Error::Config(e.to_string());
        m.train_config(m.tau, m.gamma, 0).validate().map_err(to_config)?;
        m.pool.validate().map_err(to_config)?;
        for tau in m.tau_grid.iter().flatten() {
            m.params(*tau).validate().map_err(to_config)?;
        }
        for gamma in m.gamma_grid.iter().flatten() {
            m.train_config(m.tau, *gamma, 0).validate().map_err(to_config)?;
        }
        if m.tau_grid.as_ref().is_some_and(Vec::is_empty) || m.gamma_grid.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::Config("grids must not be empty".into()));
        }
        Ok(())
    }
}

/// Source domains and the full (unsplit) labeled target.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTask {
    pub name: String,
    pub sources: Vec<DomainDataset>,
    pub target: DomainDataset,
    pub warnings: Vec<String>,
}

impl PreparedTask {
    /// Target split for one trial, scaled on its training part.
    pub fn trial_task(&self, fraction: f64, seed: u64, scaling: Scaling) -> Result<TransferTask> {
        let mut rng = RngStream::tagged(seed, StreamTag::Split, 0, 0);
        let (train, test) = split_labeled_target(&self.target, fraction, &mut rng)?;
        Ok(TransferTask::new(self.sources.clone(), train, test)?.scaled(scaling))
    }

    /// Keeps the first `n` sources.
    pub fn with_sources(&self, n: usize) -> PreparedTask {
        PreparedTask {
            sources: self.sources.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}

pub fn prepare_task(task: &TaskConfig) -> Result<PreparedTask> {
    let schema = || CsvSchema {
        label_column: task.label_column.clone().unwrap_or_default(),
        feature_columns: task.feature_columns.clone(),
        positive_label: task.positive_label.clone(),
    };
    if let Some(syn) = &task.synthetic_spec {
        let domains = gen_synthetic_domains(&syn.spec(task.seed))?;
        let n = domains.len();
        if syn.target >= n {
            return Err(Error::Config(format!("target domain {} out of range 0..{n}", syn.target)));
        }
        let picks: Vec<usize> = if syn.sources.is_empty() {
            (0..n).filter(|&i| i != syn.target).collect()
        } else {
            syn.sources.clone()
        };
        if let Some(bad) = picks.iter().find(|&&i| i >= n || i == syn.target) {
            return Err(Error::Config(format!("invalid source domain {bad}")));
        }
        return Ok(PreparedTask {
            name: task.name.clone(),
            sources: picks.iter().map(|&i| domains[i].clone()).collect(),
            target: domains[syn.target].clone(),
            warnings: Vec::new(),
        });
    }
    if let Some(cl) = &task.cluster {
        let data = load_csv_dataset(&cl.csv, &schema())?;
        let mut rng = RngStream::tagged(task.seed, StreamTag::Cluster, 0, 0);
        let assignment = kmeans_cluster(&data, &cl.features, cl.k, &mut rng)?;
        let md = make_transfer_task(&data, &assignment, cl.target)?;
        return Ok(PreparedTask {
            name: task.name.clone(),
            sources: md.sources,
            target: md.target,
            warnings: md.warnings,
        });
    }
    let paths = task.source_csvs.as_ref().expect("validated");
    let sources = paths
        .iter()
        .map(|p| load_csv_dataset(p, &schema()))
        .collect::<Result<Vec<_>>>()?;
    let target = load_csv_dataset(task.target_csv.as_ref().expect("validated"), &schema())?;
    Ok(PreparedTask {
        name: task.name.clone(),
        sources,
        target,
        warnings: Vec::new(),
    })
}

/// Outcome of one method on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub accuracy: f64,
    pub h_index: Vec<usize>,
    pub test_error: Vec<f64>,
    pub seconds: f64,
}

/// Trains and evaluates `method` on one split.
pub fn run_method(task: &TransferTask, method: Method, model: &ModelConfig, seed: u64) -> Result<MethodRun> {
    let start = Instant::now();
    let test_y = task.target_test.labels()?;
    let (error, h_index, test_error) = match method {
        Method::LusiOnes => {
            let train = &task.target_train;
            let ones = Array1::ones(train.n());
            let learner = fit_weak_learner(
                train.features.view(),
                train.labels()?.view(),
                ones.view(),
                &model.params(model.tau),
            )?;
            let err = error_rate(learner.predict(task.target_test.features.view())?.view(), test_y.view());
            (err, vec![1], vec![err])
        }
        Method::Setrlusi | Method::SetrlusiNoSi => {
            let (tau, gamma) = if method == Method::Setrlusi {
                select_hyperparameters(task, model, seed)?
            } else {
                (0.0, select_hyperparameters(task, model, seed)?.1)
            };
            let mut rng = RngStream::tagged(seed, StreamTag::Pool, 0, 0);
            let pool = build_predicate_pool(task, &model.pool, &mut rng)?;
            let outcome = train_setrlusi(task, &pool, &model.train_config(tau, gamma, seed))?;
            let (_, classes) = outcome.ensemble.predict(task.target_test.features.view())?;
            let err = error_rate(classes.view(), test_y.view());
            (
                err,
                outcome.trace.iter().map(|r| r.h).collect(),
                outcome.trace.iter().map(|r| r.test_error).collect(),
            )
        }
    };
    Ok(MethodRun {
        accuracy: 1.0 - error,
        h_index,
        test_error,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `(tau, gamma)` with the best training accuracy over the configured grids;
/// the configured values when no grid is set. Ties keep the earlier point.
pub fn select_hyperparameters(task: &TransferTask, model: &ModelConfig, seed: u64) -> Result<(f64, f64)> {
    if model.tau_grid.is_none() && model.gamma_grid.is_none() {
        return Ok((model.tau, model.gamma));
    }
    let taus = model.tau_grid.clone().unwrap_or_else(|| vec![model.tau]);
    let gammas = model.gamma_grid.clone().unwrap_or_else(|| vec![model.gamma]);
    let inner_seed = derive_seed(seed, u64::from(StreamTag::Grid as u8));
    let inner = TransferTask::new(task.sources.clone(), task.target_train.clone(), task.target_train.clone())?;
    let pool = build_predicate_pool(&inner, &model.pool, &mut RngStream::tagged(inner_seed, StreamTag::Pool, 0, 0))?;
    let mut best = (f64::NEG_INFINITY, model.tau, model.gamma);
    for &tau in &taus {
        for &gamma in &gammas {
            let outcome = train_setrlusi(&inner, &pool, &model.train_config(tau, gamma, inner_seed))?;
            let (_, classes) = outcome.ensemble.predict(inner.target_test.features.view())?;
            let acc = 1.0 - error_rate(classes.view(), inner.target_test.labels()?.view());
            if acc > best.0 {
                best = (acc, tau, gamma);
            }
        }
    }
    Ok((best.1, best.2))
}

/// One row of a result file. Aggregate rows have `trial = None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    pub method: String,
    pub trial: Option<usize>,
    pub seed: u64,
    pub accuracy: f64,
    pub wall_time_seconds: Option<f64>,
    pub h_index: Vec<usize>,
    pub test_error: Vec<f64>,
}

/// All trials of one method on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub task_name: String,
    pub method_name: String,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub wall_time_seconds: f64,
    /// Rounds per trial (`H`), or 1 for single-learner methods.
    pub rounds: usize,
    pub records: Vec<ResultRecord>,
    pub config: Config,
    pub master_seed: u64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Partial-ensemble error at round `h`, carrying the last completed round
/// across skipped ones.
pub fn error_at(record: &ResultRecord, h: usize) -> Option<f64> {
    let pos = record.h_index.partition_point(|&x| x <= h);
    match pos {
        0 => record.test_error.first().copied(),
        p => Some(record.test_error[p - 1]),
    }
}

/// Per-round mean and sample std of the partial-ensemble error.
pub fn convergence_curve(records: &[ResultRecord], rounds: usize) -> Vec<(usize, f64, f64)> {
    (1..=rounds)
        .map(|h| {
            let errs: Vec<f64> = records.iter().filter_map(|r| error_at(r, h)).collect();
            let (m, s) = mean_std(&errs);
            (h, m, s)
        })
        .collect()
}

impl ExperimentResult {
    pub fn from_records(records: Vec<ResultRecord>, rounds: usize, config: Config, master_seed: u64) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty("trial records"))?;
        let accs: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&accs);
        let times: Vec<f64> = records.iter().filter_map(|r| r.wall_time_seconds).collect();
        Ok(ExperimentResult {
            task_name: first.task.clone(),
            method_name: first.method.clone(),
            trials: records.len(),
            accuracy_mean,
            accuracy_std,
            wall_time_seconds: mean_std(&times).0,
            rounds,
            records,
            config,
            master_seed,
        })
    }

    /// Trace of each trial.
    pub fn traces(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.test_error.as_slice()).collect()
    }

    /// The aggregate row: mean accuracy and time, mean convergence curve.
    pub fn aggregate_record(&self, with_time: bool) -> ResultRecord {
        let curve = convergence_curve(&self.records, self.rounds);
        ResultRecord {
            task: self.task_name.clone(),
            method: self.method_name.clone(),
            trial: None,
            seed: self.master_seed,
            accuracy: self.accuracy_mean,
            wall_time_seconds: with_time.then_some(self.wall_time_seconds),
            h_index: curve.iter().map(|c| c.0).collect(),
            test_error: curve.iter().map(|c| c.1).collect(),
        }
    }
}

/// Runs every configured method over every trial.
///
/// Trials run concurrently on `experiment.workers` threads; results come back
/// ordered by method and then trial.
pub fn run_experiment(config: &Config) -> Result<Vec<ExperimentResult>> {
    config.validate()?;
    let prepared = prepare_task(&config.task)?;
    run_prepared(config, &prepared)
}

/// [`run_experiment`] on an already built task.
pub fn run_prepared(config: &Config, prepared: &PreparedTask) -> Result<Vec<ExperimentResult>> {
    let master = config.task.seed;
    let methods = &config.experiment.methods;
    let exec = config.model.execution;
    let per_trial: Vec<Result<Vec<(u64, MethodRun)>>> = with_workers(config.experiment.workers, || {
        map_range(exec, config.experiment.trials, |trial| {
            let seed = derive_seed(master, trial as u64);
            let wrap = |e: Error| Error::Trial {
                trial,
                source: Box::new(e),
            };
            let task = prepared
                .trial_task(config.task.split_fraction, seed, config.model.scaling)
                .map_err(wrap)?;
            methods
                .iter()
                .map(|&m| run_method(&task, m, &config.model, seed).map(|r| (seed, r)).map_err(wrap))
                .collect()
        })
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let records = per_trial
                .iter()
                .enumerate()
                .map(|(trial, runs)| {
                    let (seed, run) = &runs[mi];
                    ResultRecord {
                        task: prepared.name.clone(),
                        method: method.name().into(),
                        trial: Some(trial),
                        seed: *seed,
                        accuracy: run.accuracy,
                        wall_time_seconds: Some(run.seconds),
                        h_index: run.h_index.clone(),
                        test_error: run.test_error.clone(),
                    }
                })
                .collect();
            let rounds = if method.is_ensemble() { config.model.rounds } else { 1 };
            ExperimentResult::from_records(records, rounds, config.clone(), master)
        })
        .collect()
}

/// Paths written by [`emit_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub convergence: Vec<PathBuf>,
    pub timing: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub task: String,
    pub method: String,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub wall_time_seconds: Option<f64>,
    pub master_seed: u64,
}

const CSV_HEADER: [&str; 8] = [
    "task",
    "method",
    "trial",
    "seed",
    "accuracy",
    "wall_time_seconds",
    "h_index",
    "test_error",
];

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes per-trial and aggregate records, a summary, and one convergence CSV
/// per ensemble method into `dir`.
pub fn emit_results(results: &[ExperimentResult], dir: &Path, format: OutputFormat, timing: Timing) -> Result<EmittedFiles> {
    if results.is_empty() {
        return Err(Error::Empty("results"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let inline = timing == Timing::Inline;
    let mut rows = Vec::new();
    for r in results {
        for rec in &r.records {
            let mut rec = rec.clone();
            if !inline {
                rec.wall_time_seconds = None;
            }
            rows.push(rec);
        }
        rows.push(r.aggregate_record(inline));
    }

    let results_path = match format {
        OutputFormat::JsonLines => {
            let path = dir.join("results.jsonl");
            let mut out = String::new();
            for row in &rows {
                out.push_str(&serde_json::to_string(row).map_err(|e| Error::Serde(e.to_string()))?);
                out.push('\n');
            }
            write_file(&path, out.as_bytes())?;
            path
        }
        OutputFormat::Csv => {
            let path = dir.join("results.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Csv {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let csv_err = |e: csv::Error| Error::Csv {
                path: path.clone(),
                message: e.to_string(),
            };
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for row in &rows {
                w.write_record([
                    row.task.clone(),
                    row.method.clone(),
                    row.trial.map_or_else(String::new, |t| t.to_string()),
                    row.seed.to_string(),
                    row.accuracy.to_string(),
                    row.wall_time_seconds.map_or_else(String::new, |t| t.to_string()),
                    join(&row.h_index),
                    join(&row.test_error),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            path
        }
    };

    let summary: Vec<SummaryEntry> = results
        .iter()
        .map(|r| SummaryEntry {
            task: r.task_name.clone(),
            method: r.method_name.clone(),
            trials: r.trials,
            accuracy_mean: r.accuracy_mean,
            accuracy_std: r.accuracy_std,
            wall_time_seconds: inline.then_some(r.wall_time_seconds),
            master_seed: r.master_seed,
        })
        .collect();
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serde(e.to_string()))?;
    write_file(&summary_path, format!("{text}\n").as_bytes())?;

    let mut convergence = Vec::new();
    for r in results.iter().filter(|r| Method::from_name(&r.method_name).map_or(true, Method::is_ensemble)) {
        let path = dir.join(format!("convergence_{}_{}.csv", r.task_name, r.method_name));
        let mut out = String::from("h,mean_test_error,std_test_error\n");
        for (h, m, s) in convergence_curve(&r.records, r.rounds) {
            out.push_str(&format!("{h},{m},{s}\n"));
        }
        write_file(&path, out.as_bytes())?;
        convergence.push(path);
    }

    let timing_path = if inline {
        None
    } else {
        let path = dir.join("timing.json");
        let times: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "task": r.task_name,
                    "method": r.method_name,
                    "mean_wall_time_seconds": r.wall_time_seconds,
                    "trial_wall_time_seconds": r.records.iter().map(|x| x.wall_time_seconds).collect::<Vec<_>>(),
                })
            })
            .collect();
        let text = serde_json::to_string_pretty(&times).map_err(|e| Error::Serde(e.to_string()))?;
        write_file(&path, format!("{text}\n").as_bytes())?;
        Some(path)
    };

    Ok(EmittedFiles {
        results: results_path,
        summary: summary_path,
        convergence,
        timing: timing_path,
    })
}

fn parse_list<T: std::str::FromStr>(field: &str, path: &Path) -> Result<Vec<T>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|s| {
            s.parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                message: format!("bad list entry `{s}`"),
            })
        })
        .collect()
}

/// Reads a result file written by [`emit_results`]; the format follows the
/// extension (`.csv` or JSON lines otherwise).
pub fn parse_results(path: &Path) -> Result<Vec<ResultRecord>> {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut out = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let row = row.map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let bad = |col: &str| Error::Csv {
                path: path.to_path_buf(),
                message: format!("row {}: bad `{col}`", i + 2),
            };
            let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
            out.push(ResultRecord {
                task: row[0].to_string(),
                method: row[1].to_string(),
                trial: opt(&row[2]).map(|s| s.parse()).transpose().map_err(|_| bad("trial"))?,
                seed: row[3].parse().map_err(|_| bad("seed"))?,
                accuracy: row[4].parse().map_err(|_| bad("accuracy"))?,
                wall_time_seconds: opt(&row[5])
                    .map(|s| s.parse())
                    .transpose()
                    .map_err(|_| bad("wall_time_seconds"))?,
                h_index: parse_list(&row[6], path)?,
                test_error: parse_list(&row[7], path)?,
            });
        }
        return Ok(out);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Serde(format!("{}: {e}", path.display()))))
        .collect()
}

/// Friedman/Nemenyi over aggregate accuracies, one row per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub tasks: Vec<String>,
    pub methods: Vec<String>,
    pub accuracy: Vec<Vec<f64>>,
    pub friedman: FriedmanResult,
    pub alpha: f64,
    pub critical_difference: f64,
}

pub fn stats_from_records(records: &[ResultRecord], alpha: f64) -> Result<StatsReport> {
    let aggregates: Vec<&ResultRecord> = records.iter().filter(|r| r.trial.is_none()).collect();
    let mut tasks: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for r in &aggregates {
        if !tasks.contains(&r.task) {
            tasks.push(r.task.clone());
        }
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut accuracy = vec![vec![f64::NAN; methods.len()]; tasks.len()];
    for r in &aggregates {
        let t = tasks.iter().position(|x| *x == r.task).expect("listed");
        let m = methods.iter().position(|x| *x == r.method).expect("listed");
        accuracy[t][m] = r.accuracy;
    }
    if let Some(t) = accuracy.iter().position(|row| row.iter().any(|v| v.is_nan())) {
        return Err(Error::InvalidParameter(format!("task {} lacks some methods", tasks[t])));
    }
    let friedman = friedman_statistic(&accuracy)?;
    let critical_difference = nemenyi_cd(methods.len(), tasks.len(), alpha)?;
    Ok(StatsReport {
        tasks,
        methods,
        accuracy,
        friedman,
        alpha,
        critical_difference,
    })
}

/// Wall time of one training run at target size `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub q: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub q_values: Vec<usize>,
    pub rounds: usize,
    pub n_sources: usize,
    pub source_size: usize,
    pub test_size: usize,
    /// Best of this many timed runs per point.
    pub repeats: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            q_values: vec![50, 100, 200, 400],
            rounds: 10,
            n_sources: 3,
            source_size: 200,
            test_size: 200,
            repeats: 3,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Least-squares slope of `ln seconds` against `ln q`.
pub fn log_log_slope(points: &[ScalingPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.q as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Times pool construction plus training at each target size with `d`,
/// `N` and `H` held fixed.
pub fn scaling_benchmark(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.q_values.len() < 2 || cfg.q_values.iter().any(|&q| q < 4) {
        return Err(Error::InvalidParameter("need at least two target sizes, each >= 4".into()));
    }
    if cfg.n_sources == 0 || cfg.n_sources > 11 || cfg.repeats == 0 {
        return Err(Error::InvalidParameter("n_sources must lie in 1..=11 and repeats >= 1".into()));
    }
    let base = SyntheticSpec::grid12(cfg.source_size, cfg.seed);
    let domains = gen_synthetic_domains(&base)?;
    let sources: Vec<DomainDataset> = domains[1..=cfg.n_sources].to_vec();
    let one_domain = |n: usize, seed: u64| -> Result<DomainDataset> {
        let spec = SyntheticSpec {
            rotation_angles: vec![base.rotation_angles[0]],
            centers: vec![base.centers[0]],
            compactness: vec![base.compactness[0]],
            n_per_domain: n,
            seed,
            ..base.clone()
        };
        Ok(gen_synthetic_domains(&spec)?.remove(0))
    };
    let test = one_domain(cfg.test_size, derive_seed(cfg.seed, 1))?;
    let model = ModelConfig {
        rounds: cfg.rounds,
        execution: cfg.execution,
        ..ModelConfig::default()
    };
    let mut points = Vec::new();
    for &q in &cfg.q_values {
        let train = one_domain(q, derive_seed(cfg.seed, 2 + q as u64))?;
        let task = TransferTask::new(sources.clone(), train, test.clone())?.scaled(Scaling::MinMax);
        let mut best = f64::INFINITY;
        for rep in 0..cfg.repeats {
            let start = Instant::now();
            let mut rng = RngStream::tagged(cfg.seed, StreamTag::Pool, rep as u64, 0);
            let pool = build_predicate_pool(&task, &model.pool, &mut rng)?;
            train_setrlusi(&task, &pool, &model.train_config(model.tau, model.gamma, cfg.seed))?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        points.push(ScalingPoint { q, seconds: best });
    }
    let slope = log_log_slope(&points);
    Ok(ScalingReport { points, slope })
}
