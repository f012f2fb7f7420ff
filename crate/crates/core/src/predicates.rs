//! Predicate catalog: five source-derived families per source domain and
//! five target families, plus the linear margin classifier behind the
//! source decision predicates.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{DomainDataset, TransferTask};
use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// `{2^-8, 2^-6, ..., 2^8}`.
pub fn default_reg_grid() -> Vec<f64> {
    (-4..=4).map(|k| 2f64.powi(2 * k)).collect()
}

/// Linear classifier `w^T x + b` trained with a hinge loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginClassifier {
    pub w: Array1<f64>,
    pub b: f64,
    /// SVM cost parameter `C`.
    pub reg_param: f64,
    pub converged: bool,
}

impl MarginClassifier {
    pub fn decision(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: x.ncols(),
            });
        }
        Ok(x.dot(&self.w) + self.b)
    }

    /// Features ordered by descending `|w|`, ties to the lower index.
    pub fn ranked_features(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.w.len()).collect();
        idx.sort_by(|&a, &b| self.w[b].abs().total_cmp(&self.w[a].abs()).then(a.cmp(&b)));
        idx
    }

    pub fn top_feature(&self) -> usize {
        self.ranked_features()[0]
    }

    /// The two largest-`|w|` features; `(0, 0)` when `d = 1`.
    pub fn top_pair(&self) -> [usize; 2] {
        let r = self.ranked_features();
        let (a, b) = (r[0], *r.get(1).unwrap_or(&r[0]));
        [a.min(b), a.max(b)]
    }
}

/// Training outcome including the best-so-far objective per epoch.
#[derive(Debug, Clone)]
pub struct MarginFit {
    pub classifier: MarginClassifier,
    pub objective_history: Vec<f64>,
}

pub const DEFAULT_MAX_EPOCHS: usize = 200;

/// Full-batch subgradient descent on `(lambda/2)|w~|^2 + mean hinge`, where
/// `w~ = (w, b)` and `lambda = 1 / (C n)`.
///
/// Step size is `1 / (lambda t)` with projection onto the ball of radius
/// `1 / sqrt(lambda)`. The best iterate is kept, so the reported history is
/// non-increasing. Labels `{0, 1}` are mapped to `{-1, +1}`.
pub fn train_linear_margin_classifier(
    features: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    reg_param: f64,
    max_epochs: usize,
) -> Result<MarginFit> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if !(reg_param.is_finite() && reg_param > 0.0) {
        return Err(Error::InvalidParameter(format!("reg_param must be positive, got {reg_param}")));
    }
    let signs: Array1<f64> = labels.mapv(|y| if y == 1.0 { 1.0 } else { -1.0 });
    if signs.iter().all(|&s| s == signs[0]) {
        return Err(Error::Degenerate("margin classifier needs both classes".into()));
    }
    let max_epochs = max_epochs.max(1);
    let lambda = 1.0 / (reg_param * n as f64);
    let radius = 1.0 / lambda.sqrt();

    let objective = |w: &Array1<f64>, b: f64| -> (f64, Array1<f64>) {
        let margins = (features.dot(w) + b) * &signs;
        let hinge: f64 = margins.iter().map(|m| (1.0 - m).max(0.0)).sum::<f64>() / n as f64;
        (0.5 * lambda * (w.dot(w) + b * b) + hinge, margins)
    };

    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let (mut best_obj, mut margins) = objective(&w, b);
    let mut best = (w.clone(), b);
    let mut history = Vec::with_capacity(max_epochs);
    for t in 1..=max_epochs {
        let eta = 1.0 / (lambda * t as f64);
        let mut gw = &w * lambda;
        let mut gb = lambda * b;
        for (i, &m) in margins.iter().enumerate() {
            if m < 1.0 {
                let s = signs[i] / n as f64;
                gw.scaled_add(-s, &features.row(i));
                gb -= s;
            }
        }
        w.scaled_add(-eta, &gw);
        b -= eta * gb;
        let norm = (w.dot(&w) + b * b).sqrt();
        if norm > radius {
            let shrink = radius / norm;
            w.mapv_inplace(|v| v * shrink);
            b *= shrink;
        }
        let (obj, m) = objective(&w, b);
        margins = m;
        if obj < best_obj {
            best_obj = obj;
            best = (w.clone(), b);
        }
        history.push(best_obj);
    }
    let window = 10.min(history.len() - 1);
    let earlier = history[history.len() - 1 - window];
    let converged = earlier - best_obj <= 1e-4 * best_obj.max(1.0);
    Ok(MarginFit {
        classifier: MarginClassifier {
            w: best.0,
            b: best.1,
            reg_param,
            converged,
        },
        objective_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    SourceDecision,
    SourceSign,
    SourceTopFeature,
    SourceFeaturePair,
    SourceKernelSum,
    TargetMean,
    TargetFeature,
    TargetMeanSquare,
    TargetFeaturePair,
    Ones,
}

impl PredicateKind {
    pub fn is_source(self) -> bool {
        matches!(
            self,
            PredicateKind::SourceDecision
                | PredicateKind::SourceSign
                | PredicateKind::SourceTopFeature
                | PredicateKind::SourceFeaturePair
                | PredicateKind::SourceKernelSum
        )
    }
}

/// One predicate with its fitted parameters. Feature indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateSpec {
    SourceDecision { source: usize, classifier: MarginClassifier },
    SourceSign { source: usize, classifier: MarginClassifier },
    SourceTopFeature { source: usize, classifier: MarginClassifier, feature: usize },
    SourceFeaturePair { source: usize, classifier: MarginClassifier, features: [usize; 2] },
    SourceKernelSum { source: usize, centers: Array2<f64>, sigma: f64 },
    TargetMean,
    TargetFeature { feature: usize },
    TargetMeanSquare,
    TargetFeaturePair { features: [usize; 2] },
    Ones,
}

impl PredicateSpec {
    pub fn kind(&self) -> PredicateKind {
        match self {
            PredicateSpec::SourceDecision { .. } => PredicateKind::SourceDecision,
            PredicateSpec::SourceSign { .. } => PredicateKind::SourceSign,
            PredicateSpec::SourceTopFeature { .. } => PredicateKind::SourceTopFeature,
            PredicateSpec::SourceFeaturePair { .. } => PredicateKind::SourceFeaturePair,
            PredicateSpec::SourceKernelSum { .. } => PredicateKind::SourceKernelSum,
            PredicateSpec::TargetMean => PredicateKind::TargetMean,
            PredicateSpec::TargetFeature { .. } => PredicateKind::TargetFeature,
            PredicateSpec::TargetMeanSquare => PredicateKind::TargetMeanSquare,
            PredicateSpec::TargetFeaturePair { .. } => PredicateKind::TargetFeaturePair,
            PredicateSpec::Ones => PredicateKind::Ones,
        }
    }

    /// Owning source domain for source-derived predicates.
    pub fn source(&self) -> Option<usize> {
        match self {
            PredicateSpec::SourceDecision { source, .. }
            | PredicateSpec::SourceSign { source, .. }
            | PredicateSpec::SourceTopFeature { source, .. }
            | PredicateSpec::SourceFeaturePair { source, .. }
            | PredicateSpec::SourceKernelSum { source, .. } => Some(*source),
            _ => None,
        }
    }

    /// Re-derives source parameters from `sample` (a draw of the owning
    /// source). Classifiers keep their cost parameter; kernel sums take the
    /// sample as centers. Target predicates are returned unchanged.
    pub fn refit(&self, sample: &DomainDataset, max_epochs: usize) -> Result<PredicateSpec> {
        let retrain = |c: &MarginClassifier| -> Result<MarginClassifier> {
            Ok(train_linear_margin_classifier(sample.features.view(), sample.labels()?.view(), c.reg_param, max_epochs)?
                .classifier)
        };
        Ok(match self {
            PredicateSpec::SourceDecision { source, classifier } => PredicateSpec::SourceDecision {
                source: *source,
                classifier: retrain(classifier)?,
            },
            PredicateSpec::SourceSign { source, classifier } => PredicateSpec::SourceSign {
                source: *source,
                classifier: retrain(classifier)?,
            },
            PredicateSpec::SourceTopFeature { source, classifier, .. } => {
                let classifier = retrain(classifier)?;
                PredicateSpec::SourceTopFeature {
                    source: *source,
                    feature: classifier.top_feature(),
                    classifier,
                }
            }
            PredicateSpec::SourceFeaturePair { source, classifier, .. } => {
                let classifier = retrain(classifier)?;
                PredicateSpec::SourceFeaturePair {
                    source: *source,
                    features: classifier.top_pair(),
                    classifier,
                }
            }
            PredicateSpec::SourceKernelSum { source, sigma, .. } => PredicateSpec::SourceKernelSum {
                source: *source,
                centers: sample.features.clone(),
                sigma: *sigma,
            },
            other => other.clone(),
        })
    }

    /// Values of the predicate on each row of `samples`.
    pub fn evaluate(&self, samples: ArrayView2<f64>) -> Result<Array1<f64>> {
        evaluate_predicate(self, samples)
    }
}

fn column(samples: ArrayView2<f64>, c: usize) -> Result<Array1<f64>> {
    if c >= samples.ncols() {
        return Err(Error::InvalidParameter(format!(
            "feature index {c} out of range for dimension {}",
            samples.ncols()
        )));
    }
    Ok(samples.column(c).to_owned())
}

pub fn evaluate_predicate(spec: &PredicateSpec, samples: ArrayView2<f64>) -> Result<Array1<f64>> {
    let q = samples.nrows();
    let d = samples.ncols();
    let row_mean = || {
        samples
            .mean_axis(Axis(1))
            .unwrap_or_else(|| Array1::zeros(q))
    };
    match spec {
        PredicateSpec::SourceDecision { classifier, .. } => classifier.decision(samples),
        PredicateSpec::SourceSign { classifier, .. } => {
            Ok(classifier.decision(samples)?.mapv(|f| if f > 0.0 { 1.0 } else { 0.0 }))
        }
        PredicateSpec::SourceTopFeature { feature, .. } | PredicateSpec::TargetFeature { feature } => {
            column(samples, *feature)
        }
        PredicateSpec::SourceFeaturePair { features, .. } | PredicateSpec::TargetFeaturePair { features } => {
            Ok(column(samples, features[0])? * column(samples, features[1])?)
        }
        PredicateSpec::SourceKernelSum { centers, sigma, .. } => {
            if centers.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: centers.ncols(),
                    got: d,
                });
            }
            if !(*sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("kernel sigma must be positive, got {sigma}")));
            }
            let denom = 2.0 * sigma * sigma;
            Ok(samples
                .outer_iter()
                .map(|x| {
                    centers
                        .outer_iter()
                        .map(|c| (-crate::linalg::squared_distance(x, c) / denom).exp())
                        .sum()
                })
                .collect())
        }
        PredicateSpec::TargetMean => Ok(row_mean()),
        PredicateSpec::TargetMeanSquare => Ok(row_mean().mapv(|m| m * m)),
        PredicateSpec::Ones => Ok(Array1::ones(q)),
    }
}

/// Knobs controlling pool construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    /// Number of source decision-function predicates per source.
    pub n_fs: usize,
    /// Number of source sign predicates per source.
    pub n_gs: usize,
    /// RBF bandwidths for source kernel-sum predicates (`n_kernel` = length).
    pub kernel_sigmas: Vec<f64>,
    /// Cost parameters the classifiers draw from.
    pub reg_grid: Vec<f64>,
    pub max_epochs: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            n_fs: 3,
            n_gs: 3,
            kernel_sigmas: vec![0.1, 0.3, 1.0],
            reg_grid: default_reg_grid(),
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }
}

impl PoolConfig {
    pub fn n_kernel(&self) -> usize {
        self.kernel_sigmas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reg_grid.is_empty() || self.reg_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidParameter("reg_grid must hold positive values".into()));
        }
        if self.kernel_sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter("kernel sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Number of predicates for `n_sources` sources: per-source families once per
/// source, target families once.
pub fn pool_size_formula(d: usize, n_sources: usize, n_fs: usize, n_gs: usize, n_kernel: usize) -> usize {
    let pairs = d * (d + 1) / 2;
    n_sources * (n_fs + n_gs + d + pairs + n_kernel) + (1 + d + 1 + pairs + 1)
}

/// A built pool. Source entries come first, grouped by source.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicatePool {
    pub entries: Vec<PredicateSpec>,
    pub warnings: Vec<String>,
}

impl PredicatePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries eligible for candidates of `source`: its own families plus the
    /// target families.
    pub fn for_source(&self, source: usize) -> Vec<&PredicateSpec> {
        self.entries
            .iter()
            .filter(|p| p.source().map_or(true, |s| s == source))
            .collect()
    }

    pub fn count_by_kind(&self) -> BTreeMap<PredicateKind, usize> {
        let mut out = BTreeMap::new();
        for p in &self.entries {
            *out.entry(p.kind()).or_insert(0) += 1;
        }
        out
    }
}

/// Builds the full pool for `task`.
///
/// Every classifier-backed slot draws its cost parameter uniformly from the
/// grid; classifiers are trained once per distinct cost on the full source.
pub fn build_predicate_pool(task: &TransferTask, config: &PoolConfig, rng: &mut RngStream) -> Result<PredicatePool> {
    config.validate()?;
    if task.sources.is_empty() {
        return Err(Error::InvalidParameter("task has no source domains".into()));
    }
    let d = task.d();
    if d == 0 {
        return Err(Error::InvalidParameter("feature dimension must be at least 1".into()));
    }
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (i, source) in task.sources.iter().enumerate() {
        if source.has_both_classes() {
            let labels = source.labels()?;
            let mut cache: BTreeMap<u64, MarginClassifier> = BTreeMap::new();
            let mut draw = |rng: &mut RngStream| -> Result<MarginClassifier> {
                let c = config.reg_grid[rng.index(config.reg_grid.len())];
                if let Some(found) = cache.get(&c.to_bits()) {
                    return Ok(found.clone());
                }
                let fit = train_linear_margin_classifier(source.features.view(), labels.view(), c, config.max_epochs)?;
                cache.insert(c.to_bits(), fit.classifier.clone());
                Ok(fit.classifier)
            };
            for _ in 0..config.n_fs {
                entries.push(PredicateSpec::SourceDecision { source: i, classifier: draw(rng)? });
            }
            for _ in 0..config.n_gs {
                entries.push(PredicateSpec::SourceSign { source: i, classifier: draw(rng)? });
            }
            for _ in 0..d {
                let classifier = draw(rng)?;
                entries.push(PredicateSpec::SourceTopFeature {
                    source: i,
                    feature: classifier.top_feature(),
                    classifier,
                });
            }
            for _ in 0..d * (d + 1) / 2 {
                let classifier = draw(rng)?;
                entries.push(PredicateSpec::SourceFeaturePair {
                    source: i,
                    features: classifier.top_pair(),
                    classifier,
                });
            }
        } else {
            warnings.push(format!(
                "source {} ({}) is single-class; classifier predicates omitted",
                i, source.name
            ));
        }
        for &sigma in &config.kernel_sigmas {
            entries.push(PredicateSpec::SourceKernelSum {
                source: i,
                centers: source.features.clone(),
                sigma,
            });
        }
    }
    entries.push(PredicateSpec::TargetMean);
    entries.extend((0..d).map(|feature| PredicateSpec::TargetFeature { feature }));
    entries.push(PredicateSpec::TargetMeanSquare);
    for s1 in 0..d {
        for s2 in s1..d {
            entries.push(PredicateSpec::TargetFeaturePair { features: [s1, s2] });
        }
    }
    entries.push(PredicateSpec::Ones);
    Ok(PredicatePool { entries, warnings })
}
