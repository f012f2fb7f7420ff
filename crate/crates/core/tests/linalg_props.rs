mod common;

use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use setrlusi::linalg::{compute_v_matrix, kernel_matrix, solve_system};
use setrlusi::{KernelConfig, RngStream};

fn matrix(q: usize, d: usize, grid: bool) -> impl Strategy<Value = Array2<f64>> {
    let cell = if grid {
        (0i32..4).prop_map(f64::from).boxed()
    } else {
        (-5.0f64..5.0).boxed()
    };
    prop::collection::vec(cell, q * d).prop_map(move |v| Array2::from_shape_vec((q, d), v).unwrap())
}

fn sized(grid: bool) -> impl Strategy<Value = Array2<f64>> {
    (1usize..=30, 1usize..=5).prop_flat_map(move |(q, d)| matrix(q, d, grid))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn v_matrix_matches_enumeration(x in prop_oneof![sized(false), sized(true)]) {
        let v = compute_v_matrix(x.view()).unwrap();
        prop_assert_eq!(v.entries(), &common::brute_v_matrix(&x));
    }

    #[test]
    fn kernel_is_symmetric_psd(x in (1usize..=20, 1usize..=4).prop_flat_map(|(q, d)| matrix(q, d, false)),
                               sigma in 0.1f64..3.0) {
        let k = kernel_matrix(x.view(), x.view(), &KernelConfig::rbf(sigma)).unwrap();
        let q = k.nrows();
        for i in 0..q {
            for j in 0..q {
                prop_assert_eq!(k[[i, j]], k[[j, i]]);
            }
        }
        let eig = DMatrix::from_fn(q, q, |i, j| k[[i, j]]).symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-10, "min eigenvalue {}", eig.eigenvalues.min());
    }

    #[test]
    fn solver_residual_is_bounded(seed in any::<u64>(), q in 1usize..=25, cols in 1usize..=3) {
        let mut rng = RngStream::new(seed, 0);
        let m = Array2::from_shape_fn((q, q), |(i, j)| {
            rng.gen_range(-1.0..1.0) + if i == j { q as f64 } else { 0.0 }
        });
        let rhs = Array2::from_shape_fn((q, cols), |_| rng.gen_range(-10.0..10.0));
        let sol = solve_system(m.view(), rhs.view(), 0.0).unwrap();
        let a = &m + &(Array2::<f64>::eye(q) * sol.jitter);
        let residual = (a.dot(&sol.x) - &rhs).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let norm = rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        prop_assert!(residual <= 1e-8 * (1.0 + norm));
    }
}

#[test]
fn v_matrix_invariants_on_random_sets() {
    let mut rng = RngStream::new(17, 0);
    for _ in 0..1000 {
        let q = rng.gen_range(1..=25);
        let d = rng.gen_range(1..=4);
        let ties = rng.gen_bool(0.3);
        let x = Array2::from_shape_fn((q, d), |_| {
            if ties {
                f64::from(rng.gen_range(0..3))
            } else {
                rng.gen::<f64>()
            }
        });
        let v = compute_v_matrix(x.view()).unwrap();
        let v = v.entries();
        let floor = (q as f64).powi(-(d as i32));
        for i in 0..q {
            assert!(v[[i, i]] >= floor * (1.0 - 1e-12));
            for j in 0..q {
                assert_eq!(v[[i, j]], v[[j, i]]);
                assert!((0.0..=1.0).contains(&v[[i, j]]));
                assert!(v[[i, j]] <= v[[i, i]].min(v[[j, j]]));
            }
        }
    }
}
