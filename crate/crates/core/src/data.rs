//! Domain datasets: CSV loading, k-means domain construction, synthetic
//! rotated-Gaussian domains, stratified target splits and feature scaling.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// One domain: `n x d` features with optional binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Option<Array1<f64>>,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Option<Array1<f64>>) -> Result<Self> {
        let name = name.into();
        if features.nrows() == 0 {
            return Err(Error::Empty("dataset rows"));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        if let Some(y) = &labels {
            if y.len() != features.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: features.nrows(),
                    got: y.len(),
                });
            }
            if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidParameter(format!("{name}: label {bad} is not binary")));
            }
        }
        Ok(DomainDataset { name, features, labels })
    }

    pub fn labeled(name: impl Into<String>, features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        Self::new(name, features, Some(labels))
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Result<&Array1<f64>> {
        self.labels
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("{} has no labels", self.name)))
    }

    /// Row indices of class 0 and class 1.
    pub fn class_indices(&self) -> Result<[Vec<usize>; 2]> {
        let mut out = [Vec::new(), Vec::new()];
        for (i, &y) in self.labels()?.iter().enumerate() {
            out[usize::from(y == 1.0)].push(i);
        }
        Ok(out)
    }

    pub fn has_both_classes(&self) -> bool {
        self.class_indices().map(|[a, b]| !a.is_empty() && !b.is_empty()).unwrap_or(false)
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            labels: self.labels.as_ref().map(|y| y.select(Axis(0), indices)),
        }
    }
}

/// Sources plus a labeled target split into train and held-out test.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub sources: Vec<DomainDataset>,
    pub target_train: DomainDataset,
    pub target_test: DomainDataset,
}

impl TransferTask {
    pub fn new(sources: Vec<DomainDataset>, target_train: DomainDataset, target_test: DomainDataset) -> Result<Self> {
        let task = TransferTask {
            sources,
            target_train,
            target_test,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.target_train.d();
        for ds in self.sources.iter().chain(std::iter::once(&self.target_test)) {
            if ds.d() != d {
                return Err(Error::DimensionMismatch { expected: d, got: ds.d() });
            }
            ds.labels()?;
        }
        if self.target_train.n() < 2 {
            return Err(Error::InvalidParameter("target training set needs at least 2 rows".into()));
        }
        if !self.target_train.has_both_classes() {
            return Err(Error::Degenerate("target training set must contain both classes".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.target_train.d()
    }

    /// Applies `scaling` fitted on the target training rows to every member.
    pub fn scaled(mut self, scaling: Scaling) -> Self {
        if scaling == Scaling::MinMax {
            let scaler = MinMaxScaler::fit(self.target_train.features.view());
            for ds in self
                .sources
                .iter_mut()
                .chain([&mut self.target_train, &mut self.target_test])
            {
                ds.features = scaler.transform(ds.features.view());
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    #[default]
    MinMax,
}

/// Per-column affine map sending the fitted min/max to 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Array1<f64>,
    pub range: Array1<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let min = x.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
        let max = x.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
        // constant columns only get shifted
        let range = (&max - &min).mapv(|r| if r > 0.0 { r } else { 1.0 });
        MinMaxScaler { min, range }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.min) / &self.range
    }
}

/// Column selection for [`load_csv_dataset`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    /// Feature columns by header name; `None` means every other column.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Label token mapped to 1. Without it, `0`/`1` tokens map directly and
    /// any other pair maps in lexicographic order.
    #[serde(default)]
    pub positive_label: Option<String>,
}

/// Reads a comma-separated file with a header row into a labeled dataset.
pub fn load_csv_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<DomainDataset> {
    let path = path.as_ref();
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| csv_err(format!("column {name:?} not found")))
    };
    let label_col = find(&schema.label_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != label_col).collect(),
    };
    if feature_cols.is_empty() {
        return Err(csv_err("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut tokens = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_err(format!("row {row}: {e}")))?;
        let cell = |c: usize| -> Result<&str> {
            match record.get(c).map(str::trim) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(csv_err(format!("row {row}, column {:?}: missing value", &headers[c]))),
            }
        };
        for &c in &feature_cols {
            let s = cell(c)?;
            let v: f64 = s
                .parse()
                .map_err(|_| csv_err(format!("row {row}, column {:?}: non-numeric value {s:?}", &headers[c])))?;
            values.push(v);
        }
        tokens.push(cell(label_col)?.to_string());
    }
    let n = tokens.len();
    if n == 0 {
        return Err(csv_err("no data rows".into()));
    }
    let labels = map_labels(&tokens, schema.positive_label.as_deref()).map_err(csv_err)?;
    let features = Array2::from_shape_vec((n, feature_cols.len()), values).expect("row-major fill");
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    DomainDataset::labeled(name, features, labels)
}

/// Writes features as `x1..xd` plus a `label` column of `0`/`1`.
pub fn save_csv_dataset(path: impl AsRef<Path>, data: &DomainDataset) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let labels = data.labels()?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (1..=data.d()).map(|c| format!("x{c}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (row, y) in data.features.rows().into_iter().zip(labels) {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        rec.push((*y as u8).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn map_labels(tokens: &[String], positive: Option<&str>) -> std::result::Result<Array1<f64>, String> {
    let distinct: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
    if distinct.len() > 2 {
        let listed: Vec<&str> = distinct.into_iter().collect();
        return Err(format!("label column has more than two values: {}", listed.join(", ")));
    }
    let numeric = distinct.iter().all(|t| matches!(t.parse::<f64>(), Ok(v) if v == 0.0 || v == 1.0));
    let map = |t: &str| -> f64 {
        if let Some(p) = positive {
            return f64::from(u8::from(t == p));
        }
        if numeric {
            return t.parse().unwrap_or(0.0);
        }
        // lexicographically larger token is class 1
        f64::from(u8::from(distinct.len() == 2 && Some(&t) == distinct.iter().next_back()))
    };
    Ok(tokens.iter().map(|t| map(t)).collect())
}

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-8;

/// Lloyd's k-means on the selected columns with k-means++ seeding.
pub fn kmeans_cluster(data: &DomainDataset, feature_subset: &[usize], k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    let n = data.n();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds {n} rows")));
    }
    if feature_subset.is_empty() {
        return Err(Error::InvalidParameter("empty feature subset".into()));
    }
    if let Some(&bad) = feature_subset.iter().find(|&&c| c >= data.d()) {
        return Err(Error::InvalidParameter(format!("feature index {bad} out of range")));
    }
    let x = data.features.select(Axis(1), feature_subset);
    let dist2 = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| crate::linalg::squared_distance(a, b);

    // k-means++ seeding
    let mut centroids = Array2::<f64>::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.index(n)));
    let mut nearest: Vec<f64> = x.outer_iter().map(|r| dist2(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.outer_iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(r, centroids.row(c)));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        for (i, r) in x.outer_iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, cen) in centroids.outer_iter().enumerate() {
                let d = dist2(r, cen);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assignment[i] = best.1;
        }
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, r) in x.outer_iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &r;
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let new = if counts[c] > 0 {
                sums.row(c).mapv(|v| v / counts[c] as f64)
            } else {
                // empty cluster: reseed at the row farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(x.row(a), centroids.row(assignment[a]))
                            .total_cmp(&dist2(x.row(b), centroids.row(assignment[b])))
                    })
                    .unwrap_or(0);
                x.row(far).to_owned()
            };
            shift = shift.max(dist2(new.view(), centroids.row(c)).sqrt());
            centroids.row_mut(c).assign(&new);
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok(assignment)
}

/// Which cluster becomes the target domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// Clusters ordered by descending size; the last one is the target.
    #[default]
    SmallestLast,
    /// Explicit target cluster; sources keep cluster-index order.
    Index(usize),
}

/// Domains carved out of one dataset by a cluster assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDomain {
    pub sources: Vec<DomainDataset>,
    pub target: DomainDataset,
    pub warnings: Vec<String>,
}

pub fn make_transfer_task(data: &DomainDataset, assignment: &[usize], rule: TargetRule) -> Result<MultiDomain> {
    if assignment.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: assignment.len(),
        });
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    let present: Vec<usize> = (0..k).filter(|&c| !members[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::InvalidParameter("need at least two non-empty clusters".into()));
    }
    let order: Vec<usize> = match rule {
        TargetRule::SmallestLast => {
            let mut o = present.clone();
            o.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));
            o
        }
        TargetRule::Index(t) => {
            if !present.contains(&t) {
                return Err(Error::InvalidParameter(format!("target cluster {t} is empty or absent")));
            }
            present.iter().copied().filter(|&c| c != t).chain(std::iter::once(t)).collect()
        }
    };
    let (target_cluster, source_clusters) = order.split_last().expect("at least two clusters");
    let target = data.select(&members[*target_cluster]);
    let target = DomainDataset {
        name: format!("{}-T", data.name),
        ..target
    };
    if !target.has_both_classes() {
        return Err(Error::Degenerate(format!(
            "target cluster {target_cluster} contains a single class"
        )));
    }
    let mut warnings = Vec::new();
    let sources = source_clusters
        .iter()
        .enumerate()
        .map(|(s, &c)| {
            let ds = DomainDataset {
                name: format!("{}-S{}", data.name, s + 1),
                ..data.select(&members[c])
            };
            if !ds.has_both_classes() {
                warnings.push(format!(
                    "source {} (cluster {c}) is single-class; its classifier predicates are disabled",
                    s + 1
                ));
            }
            ds
        })
        .collect();
    Ok(MultiDomain {
        sources,
        target,
        warnings,
    })
}

/// Parameters of the rotated two-Gaussian domain family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Per-domain rotation in degrees.
    pub rotation_angles: Vec<f64>,
    pub centers: Vec<[f64; 2]>,
    pub compactness: Vec<f64>,
    pub n_per_domain: usize,
    pub seed: u64,
    /// Class 1 mean sits at `center + R offset`, class 0 at `center - R offset`.
    #[serde(default = "default_offset")]
    pub class_offset: [f64; 2],
    /// Per-axis standard deviation before rotation and compactness scaling.
    #[serde(default = "default_spread")]
    pub base_std: [f64; 2],
}

fn default_offset() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_spread() -> [f64; 2] {
    [0.6, 1.2]
}

impl SyntheticSpec {
    pub fn n_domains(&self) -> usize {
        self.rotation_angles.len()
    }

    /// Twelve domains: four rotations by three centers, compactness cycling
    /// with the center.
    pub fn grid12(n_per_domain: usize, seed: u64) -> Self {
        let angles = [0.0, 15.0, 30.0, 45.0];
        let centers = [[0.0, 0.0], [1.5, 0.5], [-1.0, 1.5]];
        let compact = [1.0, 0.8, 1.2];
        let mut spec = SyntheticSpec {
            rotation_angles: Vec::new(),
            centers: Vec::new(),
            compactness: Vec::new(),
            n_per_domain,
            seed,
            class_offset: default_offset(),
            base_std: default_spread(),
        };
        for (ci, c) in centers.iter().enumerate() {
            for a in angles {
                spec.rotation_angles.push(a);
                spec.centers.push(*c);
                spec.compactness.push(compact[ci]);
            }
        }
        spec
    }

    /// Class means of domain `i` (class 0, class 1).
    pub fn class_means(&self, i: usize) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_angles[i].to_radians().sin_cos();
        let [ox, oy] = self.class_offset;
        let r = [c * ox - s * oy, s * ox + c * oy];
        let m = self.centers[i];
        [[m[0] - r[0], m[1] - r[1]], [m[0] + r[0], m[1] + r[1]]]
    }
}

/// Generates one labeled 2-D dataset per domain of `spec`.
pub fn gen_synthetic_domains(spec: &SyntheticSpec) -> Result<Vec<DomainDataset>> {
    let n_domains = spec.n_domains();
    if n_domains == 0 {
        return Err(Error::InvalidParameter("n_domains must be at least 1".into()));
    }
    if spec.centers.len() != n_domains || spec.compactness.len() != n_domains {
        return Err(Error::InvalidParameter(
            "rotation_angles, centers and compactness must have equal length".into(),
        ));
    }
    if let Some(c) = spec.compactness.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::InvalidParameter(format!("compactness must be positive, got {c}")));
    }
    if spec.n_per_domain < 2 {
        return Err(Error::InvalidParameter("n_per_domain must be at least 2".into()));
    }
    (0..n_domains)
        .map(|i| {
            let mut rng = RngStream::tagged(spec.seed, crate::sampling::StreamTag::Synthetic, i as u64, 0);
            let (s, c) = spec.rotation_angles[i].to_radians().sin_cos();
            let scale = spec.compactness[i];
            let means = spec.class_means(i);
            let n = spec.n_per_domain;
            let mut x = Array2::zeros((n, 2));
            let mut y = Array1::zeros(n);
            for row in 0..n {
                let class = usize::from(row >= n / 2);
                let z0: f64 = StandardNormal.sample(&mut rng);
                let z1: f64 = StandardNormal.sample(&mut rng);
                let u = z0 * spec.base_std[0] * scale;
                let v = z1 * spec.base_std[1] * scale;
                x[[row, 0]] = means[class][0] + c * u - s * v;
                x[[row, 1]] = means[class][1] + s * u + c * v;
                y[row] = class as f64;
            }
            DomainDataset::labeled(format!("domain{}", i + 1), x, y)
        })
        .collect()
}

/// Class-stratified split; `fraction` of each class goes to training.
pub fn split_labeled_target(
    target: &DomainDataset,
    fraction: f64,
    rng: &mut RngStream,
) -> Result<(DomainDataset, DomainDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in target.class_indices()?.into_iter().enumerate() {
        let n_train = (fraction * rows.len() as f64).round() as usize;
        let n_test = rows.len() - n_train.min(rows.len());
        if n_train < 2 || n_test < 2 {
            return Err(Error::InvalidParameter(format!(
                "fraction {fraction} leaves {n_train} train / {n_test} test rows for class {class}; need at least 2 each"
            )));
        }
        rng.shuffle(&mut rows);
        let (a, b) = rows.split_at(n_train);
        train.extend_from_slice(a);
        test.extend_from_slice(b);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((target.select(&train), target.select(&test)))
}
