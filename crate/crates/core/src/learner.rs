//! The kernel conditional-probability weak learner.
//!
//! One learner minimizes
//!
//! ```text
//! Q(A, b) = (F - Y)^T Phat (F - Y) + lambda A^T K A,   F = K A + b 1,
//! Phat    = (1 - tau) V + tau psi psi^T
//! ```
//!
//! over the fitting samples, where `V` is the V-matrix and `psi` the drawn
//! predicate evaluated on those samples. The minimizer has a closed form.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compute_v_matrix, kernel_matrix, solve_system, KernelConfig};

/// Matrix multiplying `lambda` in the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerMode {
    /// `(Phat K + lambda I)`, the stationarity condition of `Q`.
    #[default]
    Identity,
    /// `(Phat K + lambda V)`.
    Vmatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the invariant term; `0` disables it.
    pub tau: f64,
    pub lambda: f64,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub regularizer_mode: RegularizerMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            tau: 0.5,
            lambda: 1e-2,
            kernel: KernelConfig::default(),
            regularizer_mode: RegularizerMode::Identity,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        self.kernel.validate()
    }
}

pub const EPSILON_FLOOR: f64 = 0.001;
pub const EPSILON_CEIL: f64 = 0.499;

/// Clamps a raw misclassification rate into `[0.001, 0.499]`.
pub fn clamp_error(raw: f64) -> f64 {
    if raw <= 0.0 {
        EPSILON_FLOOR
    } else if raw > 0.5 {
        EPSILON_CEIL
    } else {
        raw.clamp(EPSILON_FLOOR, EPSILON_CEIL)
    }
}

/// Vote weight `1 - eps / (1 - eps)`, evaluated as `(1 - 2 eps) / (1 - eps)`.
pub fn beta_from_error(epsilon: f64) -> f64 {
    (1.0 - 2.0 * epsilon) / (1.0 - epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearner {
    pub centers: Array2<f64>,
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    /// Resolved kernel (bandwidth fixed at fit time).
    pub kernel: KernelConfig,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
}

impl WeakLearner {
    /// Stores the clamped error and its vote weight.
    pub fn with_error(mut self, raw_error: f64) -> Self {
        let eps = clamp_error(raw_error);
        self.epsilon = Some(eps);
        self.beta = Some(beta_from_error(eps));
        self
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// `K(x)^T A + b` without clamping.
    pub fn decision_function(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        if inputs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: inputs.ncols(),
            });
        }
        if self.coefficients.iter().all(|a| *a == 0.0) {
            return Ok(Array1::from_elem(inputs.nrows(), self.intercept));
        }
        let k = kernel_matrix(inputs, self.centers.view(), &self.kernel)?;
        Ok(k.dot(&self.coefficients) + self.intercept)
    }

    /// Conditional probability of class 1, clamped to `[0, 1]`.
    pub fn predict_proba(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.decision_function(inputs)?.mapv(|v| v.clamp(0.0, 1.0)))
    }

    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_proba(inputs)?.mapv(|p| if p >= 0.5 { 1.0 } else { 0.0 }))
    }
}

/// The assembled quadratic problem for one fit.
#[derive(Debug, Clone)]
pub struct LusiProblem {
    pub gram: Array2<f64>,
    pub v: Array2<f64>,
    pub p_hat: Array2<f64>,
    pub labels: Array1<f64>,
    pub lambda: f64,
    pub mode: RegularizerMode,
    pub kernel: KernelConfig,
}

/// Rescales `psi` to squared norm `q`; a zero vector stays zero.
pub fn normalize_predicate(psi: ArrayView1<f64>) -> Array1<f64> {
    let norm2 = psi.dot(&psi);
    if norm2 == 0.0 {
        return psi.to_owned();
    }
    let scale = (psi.len() as f64 / norm2).sqrt();
    psi.mapv(|v| v * scale)
}

impl LusiProblem {
    pub fn new(
        samples: ArrayView2<f64>,
        labels: ArrayView1<f64>,
        predicate_values: ArrayView1<f64>,
        params: &HyperParams,
    ) -> Result<Self> {
        params.validate()?;
        let q = samples.nrows();
        if q < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 fitting samples, got {q}")));
        }
        for (len, _) in [(labels.len(), "labels"), (predicate_values.len(), "predicate")] {
            if len != q {
                return Err(Error::DimensionMismatch { expected: q, got: len });
            }
        }
        if !predicate_values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("predicate values"));
        }
        let kernel = params.kernel.resolve(samples);
        let gram = kernel_matrix(samples, samples, &kernel)?;
        let v = compute_v_matrix(samples)?.into_entries();
        let psi = normalize_predicate(predicate_values);
        let psi_col = psi.view().insert_axis(Axis(1));
        let p = psi_col.dot(&psi_col.t());
        let p_hat = &v * (1.0 - params.tau) + &p * params.tau;
        Ok(LusiProblem {
            gram,
            v,
            p_hat,
            labels: labels.to_owned(),
            lambda: params.lambda,
            mode: params.regularizer_mode,
            kernel,
        })
    }

    pub fn q(&self) -> usize {
        self.labels.len()
    }

    /// Exact evaluation of `Q(A, b)`.
    pub fn objective(&self, a: ArrayView1<f64>, b: f64) -> f64 {
        let residual = self.gram.dot(&a) + b - &self.labels;
        let fit = residual.dot(&self.p_hat.dot(&residual));
        let reg = a.dot(&self.gram.dot(&a));
        fit + self.lambda * reg
    }

    /// Closed-form `(A, b)`.
    pub fn solve(&self) -> Result<(Array1<f64>, f64)> {
        let q = self.q();
        let mut system = self.p_hat.dot(&self.gram);
        match self.mode {
            RegularizerMode::Identity => system.diag_mut().mapv_inplace(|d| d + self.lambda),
            RegularizerMode::Vmatrix => system.scaled_add(self.lambda, &self.v),
        }
        let ones = Array1::<f64>::ones(q);
        let stacked = concatenate(
            Axis(1),
            &[self.labels.view().insert_axis(Axis(1)), ones.view().insert_axis(Axis(1))],
        )
        .expect("columns share length");
        let rhs = self.p_hat.dot(&stacked);
        let sol = solve_system(system.view(), rhs.view(), 0.0)?;
        let a1 = sol.x.column(0);
        let a2 = sol.x.column(1);
        let num_vec = &self.labels - &self.gram.dot(&a1);
        let den_vec = &ones - &self.gram.dot(&a2);
        let weights = self.p_hat.sum_axis(Axis(0));
        let num = weights.dot(&num_vec);
        let den = weights.dot(&den_vec);
        if !(den.abs() >= 1e-12) {
            return Err(Error::DegenerateIntercept(den));
        }
        let b = num / den;
        let a = &a1 - &(&a2 * b);
        Ok((a, b))
    }
}

/// Fits one learner; `epsilon`/`beta` are left unset.
///
/// Constant labels short-circuit to the exact fixed point `A = 0, b = c`.
pub fn fit_weak_learner(
    samples: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    predicate_values: ArrayView1<f64>,
    params: &HyperParams,
) -> Result<WeakLearner> {
    let problem = LusiProblem::new(samples, labels, predicate_values, params)?;
    let q = problem.q();
    let first = labels[0];
    let (coefficients, intercept) = if labels.iter().all(|&y| y == first) {
        (Array1::zeros(q), first)
    } else {
        problem.solve()?
    };
    if !(coefficients.iter().all(|v| v.is_finite()) && intercept.is_finite()) {
        return Err(Error::NonFinite("fitted coefficients"));
    }
    Ok(WeakLearner {
        centers: samples.to_owned(),
        coefficients,
        intercept,
        kernel: problem.kernel,
        epsilon: None,
        beta: None,
    })
}

/// `Q(A, b)` for the problem defined by the arguments.
pub fn objective_value(
    samples: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    predicate_values: ArrayView1<f64>,
    params: &HyperParams,
    a: ArrayView1<f64>,
    b: f64,
) -> Result<f64> {
    let problem = LusiProblem::new(samples, labels, predicate_values, params)?;
    if a.len() != problem.q() {
        return Err(Error::DimensionMismatch {
            expected: problem.q(),
            got: a.len(),
        });
    }
    Ok(problem.objective(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, q: usize, d: usize) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((q, d), |_| rng.gen_range(-1.0..1.0));
        let mut y = Array1::from_shape_fn(q, |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        y[0] = 0.0;
        y[1] = 1.0;
        let psi = Array1::from_shape_fn(q, |_| rng.gen_range(-1.0..1.0));
        (x, y, psi)
    }

    #[test]
    fn constant_labels_fixed_point() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [0.2, 0.2]];
        for c in [0.0, 1.0] {
            let y = Array1::from_elem(3, c);
            let psi = array![1.0, 2.0, 3.0];
            let l = fit_weak_learner(x.view(), y.view(), psi.view(), &HyperParams::default()).unwrap();
            assert!(l.coefficients.iter().all(|a| *a == 0.0));
            assert_eq!(l.intercept, c);
            let obj = objective_value(x.view(), y.view(), psi.view(), &HyperParams::default(), l.coefficients.view(), c)
                .unwrap();
            assert_eq!(obj, 0.0);
            let p = l.predict_proba(array![[5.0, 5.0], [-1.0, 0.0]].view()).unwrap();
            assert_eq!(p, array![c, c]);
        }
    }

    #[test]
    fn closed_form_matches_solver_path_on_constant_labels() {
        // the generic solve path reaches the same fixed point up to rounding
        let x = array![[0.0, 1.0], [1.0, 0.5], [0.2, 0.2], [0.7, 0.9]];
        let y = Array1::from_elem(4, 1.0);
        let psi = array![0.3, -1.0, 2.0, 0.5];
        let problem = LusiProblem::new(x.view(), y.view(), psi.view(), &HyperParams::default()).unwrap();
        let (a, b) = problem.solve().unwrap();
        assert!((b - 1.0).abs() < 1e-10);
        assert!(a.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn zero_coefficients_at_origin_gives_labels_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y, psi) = random_instance(&mut rng, 5, 2);
        let params = HyperParams::default();
        let problem = LusiProblem::new(x.view(), y.view(), psi.view(), &params).unwrap();
        let zero = Array1::zeros(5);
        let expected = y.dot(&problem.p_hat.dot(&y));
        assert!((problem.objective(zero.view(), 0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_scalar_loop_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y, psi) = random_instance(&mut rng, 3, 2);
        let params = HyperParams {
            tau: 0.3,
            lambda: 0.7,
            ..HyperParams::default()
        };
        let a = array![0.4, -0.2, 1.1];
        let b = 0.15;
        let got = objective_value(x.view(), y.view(), psi.view(), &params, a.view(), b).unwrap();

        // independent scalar evaluation
        let q = 3;
        let sigma = crate::linalg::median_pairwise_distance(x.view());
        let kern = |i: usize, j: usize| {
            let d2: f64 = (0..2).map(|c| (x[[i, c]] - x[[j, c]]).powi(2)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        };
        let v = |i: usize, j: usize| {
            let mut prod = 1.0;
            for c in 0..2 {
                let t = x[[i, c]].max(x[[j, c]]);
                let cnt = (0..q).filter(|&k| x[[k, c]] >= t).count();
                prod *= cnt as f64 / q as f64;
            }
            prod
        };
        let norm: f64 = psi.iter().map(|p| p * p).sum();
        let s = (q as f64 / norm).sqrt();
        let mut f = [0.0; 3];
        for i in 0..q {
            f[i] = b + (0..q).map(|k| kern(i, k) * a[k]).sum::<f64>();
        }
        let mut want = 0.0;
        for i in 0..q {
            for j in 0..q {
                let phat = (1.0 - 0.3) * v(i, j) + 0.3 * (psi[i] * s) * (psi[j] * s);
                want += (f[i] - y[i]) * phat * (f[j] - y[j]);
                want += 0.7 * a[i] * kern(i, j) * a[j];
            }
        }
        assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn predict_single_center() {
        let l = WeakLearner {
            centers: array![[0.0]],
            coefficients: array![1.0],
            intercept: 0.0,
            kernel: KernelConfig::rbf(1.0),
            epsilon: None,
            beta: None,
        };
        // distance^2 = 2 ln 2 gives kernel value 0.5
        let x = array![[(2.0 * 2f64.ln()).sqrt()]];
        let p = l.predict_proba(x.view()).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn predict_clamps_and_checks_dims() {
        let l = WeakLearner {
            centers: array![[0.0]],
            coefficients: array![0.0],
            intercept: -0.2,
            kernel: KernelConfig::rbf(1.0),
            epsilon: None,
            beta: None,
        };
        assert_eq!(l.predict_proba(array![[3.0]].view()).unwrap()[0], 0.0);
        assert!(matches!(
            l.predict_proba(array![[3.0, 1.0]].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn threshold_rule() {
        let l = WeakLearner {
            centers: array![[0.0]],
            coefficients: array![0.0],
            intercept: 0.5,
            kernel: KernelConfig::rbf(1.0),
            epsilon: None,
            beta: None,
        };
        assert_eq!(l.predict(array![[1.0]].view()).unwrap()[0], 1.0);
    }

    #[test]
    fn error_clamping_and_beta() {
        assert_eq!(clamp_error(0.0), 0.001);
        assert_eq!(clamp_error(0.6), 0.499);
        assert_eq!(clamp_error(0.25), 0.25);
        assert_eq!(beta_from_error(0.25), 2.0 / 3.0);
        for eps in [0.001, 0.1, 0.3, 0.499] {
            assert!((beta_from_error(eps) - (1.0 - eps / (1.0 - eps))).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let x = array![[0.0], [1.0]];
        let y = array![0.0, 1.0];
        let psi = array![1.0, 1.0];
        for params in [
            HyperParams { tau: 1.0, ..HyperParams::default() },
            HyperParams { lambda: 0.0, ..HyperParams::default() },
        ] {
            assert!(fit_weak_learner(x.view(), y.view(), psi.view(), &params).is_err());
        }
        let single = array![[0.0]];
        assert!(fit_weak_learner(single.view(), array![1.0].view(), array![1.0].view(), &HyperParams::default()).is_err());
        let bad_psi = array![f64::NAN, 1.0];
        assert!(fit_weak_learner(x.view(), y.view(), bad_psi.view(), &HyperParams::default()).is_err());
    }

    #[test]
    fn vmatrix_mode_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y, psi) = random_instance(&mut rng, 8, 2);
        let params = HyperParams {
            regularizer_mode: RegularizerMode::Vmatrix,
            ..HyperParams::default()
        };
        let l = fit_weak_learner(x.view(), y.view(), psi.view(), &params).unwrap();
        assert!(l.coefficients.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn normalized_predicate_has_norm_q() {
        let psi = array![3.0, 4.0, 0.0, 0.0];
        let n = normalize_predicate(psi.view());
        assert!((n.dot(&n) - 4.0).abs() < 1e-12);
        let z = normalize_predicate(Array1::zeros(3).view());
        assert_eq!(z, Array1::<f64>::zeros(3));
    }
}
