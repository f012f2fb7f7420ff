//! The stochastic ensemble: per round, one candidate per source domain is
//! built from a target bootstrap, a stratified source sample and a randomly
//! drawn predicate; the lowest-error candidate joins the ensemble.

use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::TransferTask;
use crate::error::{Error, Result};
use crate::learner::{fit_weak_learner, HyperParams, WeakLearner, EPSILON_CEIL, EPSILON_FLOOR};
use crate::par::{map_range, Execution};
use crate::predicates::{PredicateKind, PredicatePool, PredicateSpec, DEFAULT_MAX_EPOCHS};
use crate::sampling::{bootstrap_target, draw_predicate, proportional_sample_source, RngStream};

/// Where candidate errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    #[default]
    FullTargetTrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of rounds `H`.
    pub rounds: usize,
    /// Source sampling ratio.
    pub gamma: f64,
    pub params: HyperParams,
    pub master_seed: u64,
    #[serde(default)]
    pub eval_split: EvalSplit,
    /// Epoch budget when source classifiers are refit per candidate.
    #[serde(default = "default_epochs")]
    pub classifier_epochs: usize,
    #[serde(default)]
    pub execution: Execution,
}

fn default_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 100,
            gamma: 0.5,
            params: HyperParams::default(),
            master_seed: 0,
            eval_split: EvalSplit::FullTargetTrain,
            classifier_epochs: DEFAULT_MAX_EPOCHS,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        self.params.validate()
    }
}

/// Raw misclassification rate under the `f >= 0.5` rule.
pub fn raw_error(learner: &WeakLearner, samples: ArrayView2<f64>, labels: ArrayView1<f64>) -> Result<f64> {
    if samples.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.nrows(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("error samples"));
    }
    let pred = learner.predict(samples)?;
    Ok(error_rate(pred.view(), labels))
}

/// Clamped error in `[0.001, 0.499]`.
pub fn weak_error(learner: &WeakLearner, samples: ArrayView2<f64>, labels: ArrayView1<f64>) -> Result<f64> {
    Ok(crate::learner::clamp_error(raw_error(learner, samples, labels)?))
}

pub(crate) fn error_rate(pred: ArrayView1<f64>, labels: ArrayView1<f64>) -> f64 {
    let wrong = pred.iter().zip(labels.iter()).filter(|(p, y)| p != y).count();
    wrong as f64 / labels.len() as f64
}

/// Weighted ensemble of weak learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub learners: Vec<WeakLearner>,
    /// Normalized weights, summing to one.
    pub weights: Vec<f64>,
}

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format_version: u32,
    ensemble: Ensemble,
}

impl Ensemble {
    /// Normalizes the learners' raw `beta` weights.
    pub fn from_learners(learners: Vec<WeakLearner>) -> Result<Self> {
        if learners.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let betas: Vec<f64> = learners
            .iter()
            .map(|l| match (l.epsilon, l.beta) {
                (Some(e), Some(b)) if (EPSILON_FLOOR..=EPSILON_CEIL).contains(&e) && b > 0.0 && b <= 1.0 => Ok(b),
                _ => Err(Error::InvalidParameter("learner lacks a valid error/weight".into())),
            })
            .collect::<Result<_>>()?;
        let total: f64 = betas.iter().sum();
        Ok(Ensemble {
            learners,
            weights: betas.iter().map(|b| b / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    /// `sum_h w_h^2`.
    pub fn weight_concentration(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Weighted probability `S_e` per input and the thresholded class.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        if self.learners.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let total: f64 = self.weights.iter().sum();
        let mut score = Array1::<f64>::zeros(inputs.nrows());
        for (learner, w) in self.learners.iter().zip(&self.weights) {
            score.scaled_add(w / total, &learner.predict_proba(inputs)?);
        }
        let classes = score.mapv(|s| if s >= 0.5 { 1.0 } else { 0.0 });
        Ok((score, classes))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&EnsembleFile {
            format_version: ENSEMBLE_FORMAT_VERSION,
            ensemble: self.clone(),
        })
        .map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: EnsembleFile = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        if file.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported ensemble format version {}",
                file.format_version
            )));
        }
        Ok(file.ensemble)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Free-function form of [`Ensemble::predict`].
pub fn ensemble_predict(ensemble: &Ensemble, inputs: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    ensemble.predict(inputs)
}

/// `2 exp(-1 / (2 sum w^2))`, the Hoeffding bound on `P(|S_e - y| >= 1/2)`.
pub fn misclassification_bound(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    2.0 * (-1.0 / (2.0 * s)).exp()
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub h: usize,
    pub source: usize,
    pub predicate: PredicateKind,
    pub epsilon: f64,
    pub beta: f64,
    /// Test error of the ensemble built so far.
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRound {
    pub h: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ensemble: Ensemble,
    pub trace: Vec<RoundRecord>,
    pub skipped: Vec<SkippedRound>,
}

/// A fitted candidate from one `(round, source)` pair.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub learner: WeakLearner,
    pub predicate: PredicateKind,
}

/// Builds the candidate for round `h` and source `source`.
pub fn build_candidate(
    task: &TransferTask,
    eligible: &[&PredicateSpec],
    config: &TrainConfig,
    h: usize,
    source: usize,
) -> Result<Candidate> {
    let mut rng = RngStream::candidate(config.master_seed, h, source);
    let target = &task.target_train;
    let (boot, _) = bootstrap_target(target, &mut rng)?;
    let source_sample = proportional_sample_source(&task.sources[source], config.gamma, &mut rng)?;
    let drawn = *draw_predicate(eligible, &mut rng)?;
    let predicate = if drawn.kind().is_source() {
        drawn.refit(&source_sample, config.classifier_epochs)?
    } else {
        drawn.clone()
    };
    let q = boot.n();
    let half = rng.sample_without_replacement(q, (q / 2).max(2));
    let fit_set = boot.select(&half);
    let psi = predicate.evaluate(fit_set.features.view())?;
    if config.params.tau > 0.0 && psi.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate(format!("{:?} vanishes on the fitting rows", predicate.kind())));
    }
    let learner = fit_weak_learner(
        fit_set.features.view(),
        fit_set.labels()?.view(),
        psi.view(),
        &config.params,
    )?;
    let raw = raw_error(&learner, target.features.view(), target.labels()?.view())?;
    Ok(Candidate {
        learner: learner.with_error(raw),
        predicate: predicate.kind(),
    })
}

/// Picks the lowest clamped error, ties to the lower source index, and
/// collects failure messages.
pub fn select_candidate(candidates: Vec<Result<Candidate>>) -> (Option<(usize, Candidate)>, Vec<String>) {
    let mut best: Option<(usize, Candidate)> = None;
    let mut reasons = Vec::new();
    for (i, c) in candidates.into_iter().enumerate() {
        match c {
            Ok(c) => {
                let eps = c.learner.epsilon.unwrap_or(EPSILON_CEIL);
                if best
                    .as_ref()
                    .map_or(true, |(_, b)| eps < b.learner.epsilon.unwrap_or(EPSILON_CEIL))
                {
                    best = Some((i, c));
                }
            }
            Err(e) => reasons.push(format!("source {i}: {e}")),
        }
    }
    (best, reasons)
}

/// Runs the full training loop.
pub fn train_setrlusi(task: &TransferTask, pool: &PredicatePool, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    task.validate()?;
    if pool.is_empty() {
        return Err(Error::Empty("predicate pool"));
    }
    let n_sources = task.sources.len();
    if n_sources == 0 {
        return Err(Error::InvalidParameter("task has no source domains".into()));
    }
    let eligible: Vec<Vec<&PredicateSpec>> = (0..n_sources).map(|i| pool.for_source(i)).collect();
    let test_x = task.target_test.features.view();
    let test_y = task.target_test.labels()?;

    let mut learners = Vec::with_capacity(config.rounds);
    let mut trace = Vec::with_capacity(config.rounds);
    let mut skipped = Vec::new();
    let mut score = Array1::<f64>::zeros(test_y.len());
    let mut beta_sum = 0.0;
    for h in 1..=config.rounds {
        let candidates = map_range(config.execution, n_sources, |i| {
            build_candidate(task, &eligible[i], config, h, i)
        });
        let (best, reasons) = select_candidate(candidates);
        let Some((source, chosen)) = best else {
            skipped.push(SkippedRound { h, reasons });
            continue;
        };
        let beta = chosen.learner.beta.expect("set by with_error");
        score.scaled_add(beta, &chosen.learner.predict_proba(test_x)?);
        beta_sum += beta;
        let partial = score.mapv(|s| if s / beta_sum >= 0.5 { 1.0 } else { 0.0 });
        trace.push(RoundRecord {
            h,
            source,
            predicate: chosen.predicate,
            epsilon: chosen.learner.epsilon.expect("set"),
            beta,
            test_error: error_rate(partial.view(), test_y.view()),
        });
        learners.push(chosen.learner);
    }
    if learners.is_empty() {
        let detail = skipped
            .first()
            .and_then(|s| s.reasons.first())
            .cloned()
            .unwrap_or_default();
        return Err(Error::Training(format!("every round failed; first failure: {detail}")));
    }
    Ok(TrainOutcome {
        ensemble: Ensemble::from_learners(learners)?,
        trace,
        skipped,
    })
}
