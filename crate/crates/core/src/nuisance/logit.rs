//! Ridge-penalized multinomial logistic regression fitted by Newton/IRLS
//! iterations with a gradient-descent fallback.
//!
//! All `K` classes carry their own coefficient vector. Slopes get the ridge
//! penalty; intercepts get a tiny one so the parameterization is identified
//! without privileging a reference class.

use serde::{Deserialize, Serialize};

use super::linear::{solve_spd, Standardizer};
use crate::matrix::Matrix;

const INTERCEPT_PENALTY: f64 = 1e-6;
const MAX_ITER: usize = 500;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLogit {
    pub n_classes: usize,
    pub standardizer: Standardizer,
    pub active: Vec<usize>,
    /// `n_classes x (1 + active.len())`, intercept first.
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute standardized slope; large values hint at separation.
    pub max_abs_slope: f64,
}

struct Design {
    z: Vec<f64>,
    labels: Vec<usize>,
    weights: Vec<f64>,
    width: usize,
}

impl Design {
    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.width..(i + 1) * self.width]
    }
    fn len(&self) -> usize {
        self.labels.len()
    }
}

fn softmax_into(eta: &mut [f64]) {
    let mx = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for e in eta.iter_mut() {
        *e = (*e - mx).exp();
        s += *e;
    }
    for e in eta.iter_mut() {
        *e /= s;
    }
}

fn eta_for(theta: &[f64], z: &[f64], k_classes: usize, out: &mut [f64]) {
    let w = z.len();
    for k in 0..k_classes {
        out[k] = theta[k * w..(k + 1) * w]
            .iter()
            .zip(z)
            .map(|(t, v)| t * v)
            .sum();
    }
}

impl MultinomialLogit {
    /// Fits on `rows` with class labels `labels[i] < n_classes`.
    ///
    /// `pseudo_weight > 0` adds one pseudo-observation per class at the
    /// covariate mean, used when a class is missing from the training rows.
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        rows: &[usize],
        n_classes: usize,
        lambda: f64,
        pseudo_weight: f64,
    ) -> Self {
        let standardizer = Standardizer::fit(x, rows);
        let active = standardizer.active();
        let width = active.len() + 1;
        let mut design = Design {
            z: Vec::with_capacity((rows.len() + n_classes) * width),
            labels: Vec::with_capacity(rows.len() + n_classes),
            weights: Vec::with_capacity(rows.len() + n_classes),
            width,
        };
        for &i in rows {
            design.z.push(1.0);
            let xi = x.row(i);
            design
                .z
                .extend(active.iter().map(|&j| standardizer.z(xi, j)));
            design.labels.push(labels[i]);
            design.weights.push(1.0);
        }
        if pseudo_weight > 0.0 {
            for k in 0..n_classes {
                design.z.push(1.0);
                design.z.extend(std::iter::repeat_n(0.0, width - 1));
                design.labels.push(k);
                design.weights.push(pseudo_weight);
            }
        }
        let m = rows.len().max(1) as f64;
        let penalty: Vec<f64> = (0..n_classes * width)
            .map(|q| {
                if q % width == 0 {
                    INTERCEPT_PENALTY
                } else {
                    lambda * m
                }
            })
            .collect();
        let (theta, iterations, converged) = newton(&design, n_classes, &penalty);
        let max_abs_slope = theta
            .iter()
            .enumerate()
            .filter(|(q, _)| q % width != 0)
            .map(|(_, t)| t.abs())
            .fold(0.0, f64::max);
        Self {
            n_classes,
            standardizer,
            active,
            theta,
            iterations,
            converged,
            max_abs_slope,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.active.len() + 1);
        z.push(1.0);
        z.extend(self.active.iter().map(|&j| self.standardizer.z(x, j)));
        let mut eta = vec![0.0; self.n_classes];
        eta_for(&self.theta, &z, self.n_classes, &mut eta);
        softmax_into(&mut eta);
        eta
    }
}

fn objective(d: &Design, k_classes: usize, theta: &[f64], penalty: &[f64]) -> f64 {
    let mut eta = vec![0.0; k_classes];
    let mut f = 0.0;
    for i in 0..d.len() {
        eta_for(theta, d.row(i), k_classes, &mut eta);
        let mx = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + eta.iter().map(|e| (e - mx).exp()).sum::<f64>().ln();
        f -= d.weights[i] * (eta[d.labels[i]] - lse);
    }
    f + 0.5
        * theta
            .iter()
            .zip(penalty)
            .map(|(t, p)| p * t * t)
            .sum::<f64>()
}

fn gradient_hessian(
    d: &Design,
    k_classes: usize,
    theta: &[f64],
    penalty: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let w = d.width;
    let q = k_classes * w;
    let mut g = vec![0.0; q];
    let mut h = vec![0.0; q * q];
    let mut p = vec![0.0; k_classes];
    for i in 0..d.len() {
        let z = d.row(i);
        eta_for(theta, z, k_classes, &mut p);
        softmax_into(&mut p);
        let wi = d.weights[i];
        for k in 0..k_classes {
            let r = p[k] - f64::from(u8::from(d.labels[i] == k));
            for a in 0..w {
                g[k * w + a] += wi * r * z[a];
            }
            for l in k..k_classes {
                let c = wi * (if k == l { p[k] } else { 0.0 } - p[k] * p[l]);
                if c == 0.0 {
                    continue;
                }
                for a in 0..w {
                    let ca = c * z[a];
                    let base = (k * w + a) * q + l * w;
                    for b in 0..w {
                        h[base + b] += ca * z[b];
                    }
                }
            }
        }
    }
    // mirror the upper block triangle
    for k in 0..k_classes {
        for l in 0..k {
            for a in 0..w {
                for b in 0..w {
                    h[(k * w + a) * q + l * w + b] = h[(l * w + b) * q + k * w + a];
                }
            }
        }
    }
    for s in 0..q {
        g[s] += penalty[s] * theta[s];
        h[s * q + s] += penalty[s];
    }
    (g, h)
}

fn newton(d: &Design, k_classes: usize, penalty: &[f64]) -> (Vec<f64>, usize, bool) {
    let q = k_classes * d.width;
    let mut theta = vec![0.0; q];
    let mut f = objective(d, k_classes, &theta, penalty);
    for iter in 1..=MAX_ITER {
        let (g, h) = gradient_hessian(d, k_classes, &theta, penalty);
        let direction: Vec<f64> = match solve_spd(&h, &g, q) {
            Some(step) => step.into_iter().map(|s| -s).collect(),
            None => g.iter().map(|v| -v).collect(),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(a, s)| a + t * s)
                .collect();
            let fc = objective(d, k_classes, &cand, penalty);
            if fc.is_finite() && fc <= f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            return (theta, iter, true);
        };
        let change = cand
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = cand;
        f = fc;
        if change < TOL {
            return (theta, iter, true);
        }
    }
    (theta, MAX_ITER, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn marginal_frequencies_without_covariates() {
        let x = Matrix::zeros(100, 0);
        let labels: Vec<usize> = (0..100)
            .map(|i| {
                if i < 20 {
                    0
                } else if i < 50 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let rows: Vec<usize> = (0..100).collect();
        let m = MultinomialLogit::fit(&x, &labels, &rows, 3, 0.01, 0.0);
        let p = m.predict_proba(&[]);
        assert!((p[0] - 0.2).abs() < 1e-4, "{p:?}");
        assert!((p[1] - 0.3).abs() < 1e-4);
        assert!(m.converged);
    }

    #[test]
    fn recovers_binary_logit_direction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let v: f64 = rng.random_range(-2.0..2.0);
            let p = 1.0 / (1.0 + (-1.5 * v).exp());
            xs.push(vec![v]);
            labels.push(usize::from(rng.random::<f64>() < p));
        }
        let x = Matrix::from_rows(&xs);
        let rows: Vec<usize> = (0..n).collect();
        let m = MultinomialLogit::fit(&x, &labels, &rows, 2, 1.0 / n as f64, 0.0);
        let p_hi = m.predict_proba(&[1.0])[1];
        let expected = 1.0 / (1.0 + (-1.5f64).exp());
        assert!((p_hi - expected).abs() < 0.05, "{p_hi} vs {expected}");
    }

    #[test]
    fn separated_data_stay_finite() {
        let x = Matrix::from_rows(&(0..40).map(|i| vec![i as f64]).collect::<Vec<_>>());
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let rows: Vec<usize> = (0..40).collect();
        let m = MultinomialLogit::fit(&x, &labels, &rows, 2, 1.0 / 40.0, 0.0);
        assert!(m.theta.iter().all(|t| t.is_finite()));
        let p = m.predict_proba(&[0.0]);
        assert!(p[0] > 0.9);
    }

    #[test]
    fn pseudo_counts_cover_missing_class() {
        let x = Matrix::zeros(10, 0);
        let labels = vec![0; 10];
        let rows: Vec<usize> = (0..10).collect();
        let m = MultinomialLogit::fit(&x, &labels, &rows, 2, 0.1, 0.5);
        let p = m.predict_proba(&[]);
        assert!(p[1] > 0.0 && p[1] < 0.1, "{p:?}");
    }
}
