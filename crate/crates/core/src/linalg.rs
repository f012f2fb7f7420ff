//! Dense kernel matrices, the V-matrix, and a jittered linear solve.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    Fixed,
    MedianHeuristic,
}

/// Kernel choice. `sigma` is the RBF bandwidth in feature units and is only
/// read when `sigma_rule` is `Fixed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub sigma: f64,
    pub sigma_rule: SigmaRule,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: KernelKind::Rbf,
            sigma: 1.0,
            sigma_rule: SigmaRule::MedianHeuristic,
        }
    }
}

impl KernelConfig {
    pub fn rbf(sigma: f64) -> Self {
        KernelConfig {
            kind: KernelKind::Rbf,
            sigma,
            sigma_rule: SigmaRule::Fixed,
        }
    }

    pub fn linear() -> Self {
        KernelConfig {
            kind: KernelKind::Linear,
            sigma: 1.0,
            sigma_rule: SigmaRule::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Rbf
            && self.sigma_rule == SigmaRule::Fixed
            && !(self.sigma.is_finite() && self.sigma > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "rbf sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Pins the bandwidth against `samples` so later evaluations are stable.
    pub fn resolve(&self, samples: ArrayView2<f64>) -> KernelConfig {
        match (self.kind, self.sigma_rule) {
            (KernelKind::Rbf, SigmaRule::MedianHeuristic) => KernelConfig::rbf(median_pairwise_distance(samples)),
            _ => *self,
        }
    }

    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match self.kind {
            KernelKind::Linear => x.dot(&y),
            KernelKind::Rbf => {
                let d2 = squared_distance(x, y);
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
        }
    }
}

pub(crate) fn squared_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of Euclidean distances over distinct sample pairs.
///
/// Falls back to the mean positive distance when more than half the pairs
/// coincide, and to 1.0 when every sample is identical.
pub fn median_pairwise_distance(samples: ArrayView2<f64>) -> f64 {
    let n = samples.nrows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(squared_distance(samples.row(i), samples.row(j)).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 {
        return median;
    }
    let positive: Vec<f64> = dists.into_iter().filter(|d| *d > 0.0).collect();
    if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    }
}

fn check_finite(m: ArrayView2<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Kernel of every row against every center (n×q).
///
/// A median-heuristic config is resolved against `centers` first.
pub fn kernel_matrix(rows: ArrayView2<f64>, centers: ArrayView2<f64>, config: &KernelConfig) -> Result<Array2<f64>> {
    config.validate()?;
    if rows.ncols() != centers.ncols() {
        return Err(Error::DimensionMismatch {
            expected: centers.ncols(),
            got: rows.ncols(),
        });
    }
    check_finite(rows, "kernel rows")?;
    check_finite(centers, "kernel centers")?;
    let config = config.resolve(centers);
    if config.kind == KernelKind::Linear {
        return Ok(rows.dot(&centers.t()));
    }
    let mut out = Array2::zeros((rows.nrows(), centers.nrows()));
    for (i, x) in rows.outer_iter().enumerate() {
        for (k, c) in centers.outer_iter().enumerate() {
            out[[i, k]] = config.eval(x, c);
        }
    }
    Ok(out)
}

/// V-matrix under the product empirical measure of the samples themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct VMatrix {
    entries: Array2<f64>,
}

impl VMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn q(&self) -> usize {
        self.entries.nrows()
    }
}

/// `V[i][j] = prod_c |{k : x_k^c >= max(x_i^c, x_j^c)}| / q`.
///
/// The count at `max(a, b)` is the smaller of the counts at `a` and `b`, so
/// per-sample counts are computed once by binary search.
pub fn compute_v_matrix(samples: ArrayView2<f64>) -> Result<VMatrix> {
    let q = samples.nrows();
    if q == 0 {
        return Err(Error::Empty("v-matrix samples"));
    }
    check_finite(samples, "v-matrix samples")?;
    let d = samples.ncols();
    let mut counts = Array2::<usize>::zeros((q, d));
    for (c, column) in samples.axis_iter(Axis(1)).enumerate() {
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        for (i, &v) in column.iter().enumerate() {
            counts[[i, c]] = q - sorted.partition_point(|&s| s < v);
        }
    }
    let qf = q as f64;
    let mut entries = Array2::zeros((q, q));
    for i in 0..q {
        for j in i..q {
            let mut prod = 1.0;
            for c in 0..d {
                prod *= counts[[i, c]].min(counts[[j, c]]) as f64 / qf;
            }
            entries[[i, j]] = prod;
            entries[[j, i]] = prod;
        }
    }
    Ok(VMatrix { entries })
}

/// Result of a jittered solve, with the jitter that was finally used.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Array2<f64>,
    pub jitter: f64,
}

const RESIDUAL_TOL: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-4;

fn jitter_schedule(start: f64) -> Vec<f64> {
    const DECADES: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, MAX_JITTER];
    let mut out = vec![start];
    out.extend(DECADES.into_iter().filter(|&j| j > start * (1.0 + 1e-12)));
    out
}

/// Solves `(M + jitter I) X = rhs` by LU with partial pivoting.
///
/// `M` need not be symmetric. If the factorization fails or the residual
/// exceeds `1e-8 (1 + |rhs|_inf)`, the jitter is raised by decades from 1e-8
/// up to 1e-4 before giving up.
pub fn solve_system(m: ArrayView2<f64>, rhs: ArrayView2<f64>, jitter: f64) -> Result<Solution> {
    let q = m.nrows();
    if m.ncols() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: m.ncols(),
        });
    }
    if rhs.nrows() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: rhs.nrows(),
        });
    }
    if !(jitter.is_finite() && jitter >= 0.0) {
        return Err(Error::InvalidParameter(format!("jitter must be non-negative, got {jitter}")));
    }
    check_finite(m, "system matrix")?;
    check_finite(rhs, "right-hand side")?;
    let rhs_norm = rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = RESIDUAL_TOL * (1.0 + rhs_norm);
    let b = DMatrix::from_fn(q, rhs.ncols(), |i, j| rhs[[i, j]]);

    let mut last = jitter;
    for j in jitter_schedule(jitter) {
        last = j;
        let a = DMatrix::from_fn(q, q, |r, c| m[[r, c]] + if r == c { j } else { 0.0 });
        let lu = a.clone().lu();
        let Some(mut x) = lu.solve(&b) else { continue };
        // one step of iterative refinement
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        let residual = (&a * &x - &b).amax();
        if residual <= tol {
            let out = Array2::from_shape_fn((q, rhs.ncols()), |(r, c)| x[(r, c)]);
            return Ok(Solution { x: out, jitter: j });
        }
    }
    Err(Error::Singular {
        jitter: last.max(MAX_JITTER),
    })
}

/// Vector right-hand-side convenience wrapper around [`solve_system`].
pub fn solve_vector(m: ArrayView2<f64>, rhs: ArrayView1<f64>, jitter: f64) -> Result<Array1<f64>> {
    let rhs2 = rhs.insert_axis(Axis(1));
    let sol = solve_system(m, rhs2, jitter)?;
    Ok(sol.x.column(0).to_owned())
}
