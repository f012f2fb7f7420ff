mod common;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use setrlusi::{fit_weak_learner, HyperParams, KernelConfig, RegularizerMode, RngStream, WeakLearner};

fn fitted_residual(learner: &WeakLearner, x: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    learner.decision_function(x.view()).unwrap() - y
}

fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_is_stationary(seed in any::<u64>(), q in 4usize..=25, d in 1usize..=3,
                                 tau in 0.0f64..0.95, log_lambda in -4.0f64..0.0) {
        let mut rng = RngStream::new(seed, 0);
        let (x, y, psi) = common::random_instance(&mut rng, q, d);
        let params = HyperParams { tau, lambda: 10f64.powf(log_lambda), kernel: KernelConfig::rbf(0.5), ..HyperParams::default() };
        let learner = fit_weak_learner(x.view(), y.view(), psi.view(), &params).unwrap();
        let p = common::p_hat(&x, &psi, tau);
        let r = fitted_residual(&learner, &x, &y);
        let cond = p.dot(&r) + &learner.coefficients * params.lambda;
        let scale = 1.0 + max_abs(&learner.coefficients) * params.lambda + max_abs(&p.dot(&y));
        prop_assert!(max_abs(&cond) <= 1e-6 * scale, "stationarity {}", max_abs(&cond));
        let intercept_cond: f64 = p.dot(&r).sum();
        prop_assert!(intercept_cond.abs() <= 1e-6 * scale * q as f64);
    }

    #[test]
    fn vmatrix_mode_solves_its_system(seed in any::<u64>(), q in 4usize..=20, tau in 0.0f64..0.9) {
        let mut rng = RngStream::new(seed, 1);
        let (x, y, psi) = common::random_instance(&mut rng, q, 2);
        let params = HyperParams {
            tau,
            lambda: 0.05,
            kernel: KernelConfig::rbf(0.5),
            regularizer_mode: RegularizerMode::Vmatrix,
        };
        let learner = fit_weak_learner(x.view(), y.view(), psi.view(), &params).unwrap();
        let p = common::p_hat(&x, &psi, tau);
        let v = common::brute_v_matrix(&x);
        let r = fitted_residual(&learner, &x, &y);
        let cond = p.dot(&r) + v.dot(&learner.coefficients) * params.lambda;
        let scale = 1.0 + max_abs(&p.dot(&y));
        prop_assert!(max_abs(&cond) <= 1e-6 * scale);
    }

    #[test]
    fn threshold_rule(seed in any::<u64>(), q in 4usize..=20) {
        let mut rng = RngStream::new(seed, 2);
        let (x, y, psi) = common::random_instance(&mut rng, q, 2);
        let learner = fit_weak_learner(x.view(), y.view(), psi.view(), &HyperParams::default()).unwrap();
        let (probe, _, _) = common::random_instance(&mut rng, 30, 2);
        let proba = learner.predict_proba(probe.view()).unwrap();
        let class = learner.predict(probe.view()).unwrap();
        for (p, c) in proba.iter().zip(&class) {
            prop_assert!((0.0..=1.0).contains(p));
            prop_assert_eq!(*c == 1.0, *p >= 0.5);
        }
    }
}

#[test]
fn finite_difference_gradient_vanishes() {
    let mut rng = RngStream::new(21, 0);
    for _ in 0..100 {
        let q = 4 + rng.index(12);
        let (x, y, psi) = common::random_instance(&mut rng, q, 2);
        let params = HyperParams {
            tau: rng.uniform() * 0.9,
            lambda: 10f64.powf(-3.0 * rng.uniform()),
            kernel: KernelConfig::rbf(0.5),
            ..HyperParams::default()
        };
        let learner = fit_weak_learner(x.view(), y.view(), psi.view(), &params).unwrap();
        let gram = common::rbf_gram(&x, 0.5);
        let p = common::p_hat(&x, &psi, params.tau);
        let mut z: Vec<f64> = learner.coefficients.to_vec();
        z.push(learner.intercept);
        let q_at = |z: &[f64]| common::objective(&gram, &p, &y, params.lambda, &z[..q], z[q]);
        let value = q_at(&z);
        let step = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..=q {
            let mut up = z.clone();
            let mut down = z.clone();
            up[k] += step;
            down[k] -= step;
            worst = worst.max(((q_at(&up) - q_at(&down)) / (2.0 * step)).abs());
        }
        assert!(worst <= 1e-5 * (1.0 + value.abs()), "gradient {worst}, Q {value}");
    }
}

#[test]
fn small_tau_approaches_no_invariant() {
    let mut rng = RngStream::new(5, 0);
    for _ in 0..20 {
        let (x, y, psi) = common::random_instance(&mut rng, 15, 2);
        let base = HyperParams {
            tau: 0.0,
            lambda: 0.01,
            kernel: KernelConfig::rbf(0.5),
            ..HyperParams::default()
        };
        let exact = fit_weak_learner(x.view(), y.view(), psi.view(), &base).unwrap();
        let near = fit_weak_learner(x.view(), y.view(), psi.view(), &HyperParams { tau: 1e-10, ..base }).unwrap();
        let diff = exact.decision_function(x.view()).unwrap() - near.decision_function(x.view()).unwrap();
        assert!(max_abs(&diff) < 1e-6, "{}", max_abs(&diff));
    }
}

fn ones_sweep(x: &Array2<f64>, y: &Array1<f64>) -> Vec<(f64, Array1<f64>)> {
    let q = y.len();
    let ones = Array1::<f64>::ones(q);
    (1..=6)
        .map(|k| {
            let params = HyperParams {
                tau: 0.9,
                lambda: 10f64.powi(-k),
                kernel: KernelConfig::rbf(0.5),
                ..HyperParams::default()
            };
            let learner = fit_weak_learner(x.view(), y.view(), ones.view(), &params).unwrap();
            (params.lambda, fitted_residual(&learner, x, y))
        })
        .collect()
}

#[test]
fn ones_predicate_balances_the_residual() {
    let mut rng = RngStream::new(9, 0);
    for _ in 0..50 {
        let (x, y, _) = common::random_instance(&mut rng, 20, 2);
        let v = common::brute_v_matrix(&x);
        for (lambda, r) in ones_sweep(&x, &y) {
            let lhs = 0.9 * 20.0 * r.sum();
            let rhs = -0.1 * v.dot(&r).sum();
            assert!((lhs - rhs).abs() <= 1e-8, "lambda {lambda}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn residual_sum_is_not_monotone_in_lambda() {
    let mut rng = RngStream::new(9, 0);
    let found = (0..50).any(|_| {
        let (x, y, _) = common::random_instance(&mut rng, 20, 2);
        let gaps: Vec<f64> = ones_sweep(&x, &y).iter().map(|(_, r)| r.sum().abs()).collect();
        gaps.windows(2).any(|w| w[1] > w[0] + 1e-8)
    });
    assert!(found);
}

#[test]
fn constant_labels_give_constant_output() {
    let mut rng = RngStream::new(3, 0);
    let (x, _, psi) = common::random_instance(&mut rng, 10, 2);
    let y = Array1::from_elem(10, 1.0);
    let learner = fit_weak_learner(x.view(), y.view(), psi.view(), &HyperParams::default()).unwrap();
    assert!(learner.coefficients.iter().all(|a| *a == 0.0));
    assert_eq!(learner.intercept, 1.0);
}
