#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use setrlusi::{DomainDataset, RngStream, TransferTask};

/// V-matrix by direct enumeration of every pair and coordinate.
pub fn brute_v_matrix(x: &Array2<f64>) -> Array2<f64> {
    let (q, d) = x.dim();
    let mut v = Array2::zeros((q, q));
    for i in 0..q {
        for j in 0..q {
            let mut prod = 1.0;
            for c in 0..d {
                let lo = x[[i, c]].max(x[[j, c]]);
                let count = (0..q).filter(|&k| x[[k, c]] >= lo).count();
                prod *= count as f64 / q as f64;
            }
            v[[i, j]] = prod;
        }
    }
    v
}

pub fn rbf_gram(x: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let q = x.nrows();
    Array2::from_shape_fn((q, q), |(i, j)| {
        let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Weighted matrix `(1 - tau) V + tau psi psi^T` with `|psi|^2 = q`.
pub fn p_hat(x: &Array2<f64>, psi: &Array1<f64>, tau: f64) -> Array2<f64> {
    let q = x.nrows();
    let v = brute_v_matrix(x);
    let norm2: f64 = psi.iter().map(|p| p * p).sum();
    let s = if norm2 > 0.0 { (q as f64 / norm2).sqrt() } else { 0.0 };
    Array2::from_shape_fn((q, q), |(i, j)| (1.0 - tau) * v[[i, j]] + tau * psi[i] * s * psi[j] * s)
}

/// `Q(A, b)` with scalar loops.
pub fn objective(gram: &Array2<f64>, p: &Array2<f64>, y: &Array1<f64>, lambda: f64, a: &[f64], b: f64) -> f64 {
    let q = y.len();
    let r: Vec<f64> = (0..q)
        .map(|i| (0..q).map(|k| gram[[i, k]] * a[k]).sum::<f64>() + b - y[i])
        .collect();
    let mut fit = 0.0;
    let mut reg = 0.0;
    for i in 0..q {
        for j in 0..q {
            fit += r[i] * p[[i, j]] * r[j];
            reg += a[i] * gram[[i, j]] * a[j];
        }
    }
    fit + lambda * reg
}

/// `Q(z) = z^T H z - 2 g^T z + c` over `z = (A, b)`.
pub struct Quadratic {
    pub h: Array2<f64>,
    pub g: Array1<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn new(gram: &Array2<f64>, p: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Self {
        let q = y.len();
        let m = Array2::from_shape_fn((q, q + 1), |(i, k)| if k < q { gram[[i, k]] } else { 1.0 });
        let mut h = m.t().dot(p).dot(&m);
        for i in 0..q {
            for j in 0..q {
                h[[i, j]] += lambda * gram[[i, j]];
            }
        }
        let g = m.t().dot(&p.dot(y));
        let c = y.dot(&p.dot(y));
        Quadratic { h, g, c }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let n = z.len();
        let mut s = self.c;
        for i in 0..n {
            s -= 2.0 * self.g[i] * z[i];
            for j in 0..n {
                s += z[i] * self.h[[i, j]] * z[j];
            }
        }
        s
    }
}

/// Features in `[0, 1)`, labels with both classes, predicate values in `[-1, 1)`.
pub fn random_instance(rng: &mut RngStream, q: usize, d: usize) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn((q, d), |_| rng.gen::<f64>());
    let mut y = Array1::from_shape_fn(q, |_| f64::from(rng.gen_bool(0.5)));
    y[0] = 0.0;
    y[1] = 1.0;
    let psi = Array1::from_shape_fn(q, |_| rng.gen_range(-1.0..1.0));
    (x, y, psi)
}

fn random_domain(rng: &mut RngStream, name: &str, n: usize, d: usize, shift: f64) -> DomainDataset {
    let y = Array1::from_shape_fn(n, |i| f64::from(i % 2 == 0));
    let x = Array2::from_shape_fn((n, d), |(i, c)| {
        let lift = if c == 0 { 0.5 * y[i] } else { 0.0 };
        rng.gen::<f64>() + shift + lift
    });
    DomainDataset::labeled(name, x, y).unwrap()
}

/// Sources shifted by `0.1 i`, target split evenly into train and test.
pub fn random_task(rng: &mut RngStream, n_sources: usize, d: usize, n: usize) -> TransferTask {
    let sources = (0..n_sources)
        .map(|i| random_domain(rng, &format!("s{i}"), n, d, 0.1 * i as f64))
        .collect();
    let train = random_domain(rng, "train", n, d, 0.05);
    let test = random_domain(rng, "test", n, d, 0.05);
    TransferTask::new(sources, train, test).unwrap()
}
