//! Friedman rank test and the Nemenyi critical difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi_square_f: f64,
    pub f_f: f64,
    pub average_ranks: Vec<f64>,
}

/// Ranks within one row, highest score = rank 1, ties share the mean rank.
pub fn rank_descending(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = vec![0.0; row.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && row[order[end]] == row[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Friedman statistic on an `n_d x n_me` table of scores (higher is better).
pub fn friedman_statistic(table: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n_d = table.len();
    if n_d < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 datasets, got {n_d}")));
    }
    let n_me = table[0].len();
    if n_me < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 methods, got {n_me}")));
    }
    if let Some(row) = table.iter().find(|r| r.len() != n_me) {
        return Err(Error::DimensionMismatch {
            expected: n_me,
            got: row.len(),
        });
    }
    let mut average_ranks = vec![0.0; n_me];
    for row in table {
        for (j, r) in rank_descending(row).into_iter().enumerate() {
            average_ranks[j] += r;
        }
    }
    average_ranks.iter_mut().for_each(|r| *r /= n_d as f64);
    let (nd, nm) = (n_d as f64, n_me as f64);
    let sum_sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let chi_square_f = 12.0 * nd / (nm * (nm + 1.0)) * (sum_sq - nm * (nm + 1.0) * (nm + 1.0) / 4.0);
    let denom = nd * (nm - 1.0) - chi_square_f;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateStatistic(
            "every dataset ranks the methods identically; F_F denominator is zero".into(),
        ));
    }
    Ok(FriedmanResult {
        chi_square_f,
        f_f: (nd - 1.0) * chi_square_f / denom,
        average_ranks,
    })
}

/// Studentized range values divided by sqrt(2), for 2..=10 methods.
const Q_005: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_010: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

pub fn nemenyi_q(n_me: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_005
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_010
    } else {
        return Err(Error::InvalidParameter(format!("alpha must be 0.05 or 0.10, got {alpha}")));
    };
    if !(2..=10).contains(&n_me) {
        return Err(Error::InvalidParameter(format!("n_me must lie in 2..=10, got {n_me}")));
    }
    Ok(table[n_me - 2])
}

/// `CD = q_alpha sqrt(n_me (n_me + 1) / (6 n_d))`.
pub fn nemenyi_cd(n_me: usize, n_d: usize, alpha: f64) -> Result<f64> {
    if n_d == 0 {
        return Err(Error::InvalidParameter("n_d must be positive".into()));
    }
    let q = nemenyi_q(n_me, alpha)?;
    Ok(q * ((n_me * (n_me + 1)) as f64 / (6.0 * n_d as f64)).sqrt())
}
