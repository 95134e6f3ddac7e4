//! Ridge regression on standardized covariates with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Column centering and scaling fitted on a set of training rows.
///
/// Columns that are constant on the training rows get scale 0 and are
/// ignored by the learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix, rows: &[usize]) -> Self {
        let d = x.cols();
        let m = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (acc, v) in mean.iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((acc, v), mu) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / m).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    0.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    /// Indices of non-constant columns.
    pub fn active(&self) -> Vec<usize> {
        (0..self.scale.len())
            .filter(|&j| self.scale[j] > 0.0)
            .collect()
    }

    #[inline]
    pub fn z(&self, x: &[f64], j: usize) -> f64 {
        (x[j] - self.mean[j]) / self.scale[j]
    }
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major, p x p).
pub(crate) fn solve_spd(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    if p == 0 {
        return Some(Vec::new());
    }
    let am = DMatrix::from_row_slice(p, p, a);
    let chol = am.cholesky()?;
    let x = chol.solve(&DVector::from_column_slice(b));
    x.iter()
        .all(|v| v.is_finite())
        .then(|| x.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    /// Coefficients on the original covariate scale.
    pub coef: Vec<f64>,
}

impl RidgeModel {
    /// Fits on `rows` with penalty `lambda` per observation (the normal
    /// equations use `lambda * m` on the diagonal).
    pub fn fit(x: &Matrix, y: &[f64], rows: &[usize], lambda: f64) -> Self {
        let d = x.cols();
        let m = rows.len() as f64;
        let ybar = rows.iter().map(|&i| y[i]).sum::<f64>() / m;
        let st = Standardizer::fit(x, rows);
        let active = st.active();
        let p = active.len();
        let mut coef = vec![0.0; d];
        if p > 0 {
            let mut a = vec![0.0; p * p];
            let mut b = vec![0.0; p];
            let mut z = vec![0.0; p];
            for &i in rows {
                let xi = x.row(i);
                for (k, &j) in active.iter().enumerate() {
                    z[k] = st.z(xi, j);
                }
                let r = y[i] - ybar;
                for k in 0..p {
                    b[k] += z[k] * r;
                    let zk = z[k];
                    let row = &mut a[k * p..(k + 1) * p];
                    for (l, v) in row.iter_mut().enumerate().skip(k) {
                        *v += zk * z[l];
                    }
                }
            }
            for k in 0..p {
                for l in 0..k {
                    a[k * p + l] = a[l * p + k];
                }
                a[k * p + k] += lambda * m;
            }
            // lambda > 0 keeps the system positive definite; fall back to a
            // tiny jitter when a caller passes zero and the design is singular
            let beta = solve_spd(&a, &b, p).or_else(|| {
                for k in 0..p {
                    a[k * p + k] += 1e-8 * m;
                }
                solve_spd(&a, &b, p)
            });
            if let Some(beta) = beta {
                for (k, &j) in active.iter().enumerate() {
                    coef[j] = beta[k] / st.scale[j];
                }
            }
        }
        let intercept = ybar - coef.iter().zip(&st.mean).map(|(c, m)| c * m).sum::<f64>();
        Self { intercept, coef }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line_with_small_penalty() {
        let x = Matrix::from_rows(
            &(0..50)
                .map(|i| vec![i as f64, (i % 7) as f64])
                .collect::<Vec<_>>(),
        );
        let y: Vec<f64> = (0..50)
            .map(|i| 1.0 + 2.0 * i as f64 - 0.5 * (i % 7) as f64)
            .collect();
        let rows: Vec<usize> = (0..50).collect();
        let m = RidgeModel::fit(&x, &y, &rows, 1e-10);
        assert!((m.coef[0] - 2.0).abs() < 1e-6);
        assert!((m.coef[1] + 0.5).abs() < 1e-6);
        assert!((m.intercept - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_columns_ignored() {
        let x = Matrix::from_rows(&(0..10).map(|i| vec![3.0, i as f64]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let rows: Vec<usize> = (0..10).collect();
        let m = RidgeModel::fit(&x, &y, &rows, 0.0);
        assert_eq!(m.coef[0], 0.0);
        assert!((m.predict(&[3.0, 4.0]) - 4.0).abs() < 1e-6);
    }
}
