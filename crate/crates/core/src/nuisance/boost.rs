//! Gradient boosting with depth-one regression trees under squared loss.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumps {
    pub init: f64,
    pub rate: f64,
    pub stumps: Vec<Stump>,
}

impl BoostedStumps {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        rounds: usize,
        rate: f64,
        subsample: f64,
        min_leaf: usize,
        seed: u64,
    ) -> Self {
        let m = rows.len();
        let init = rows.iter().map(|&i| y[i]).sum::<f64>() / m.max(1) as f64;
        let d = x.cols();
        let min_leaf = min_leaf.max(1);
        // per-feature orderings of the training rows, positions into `rows`
        let orders: Vec<Vec<usize>> = (0..d)
            .map(|j| {
                let mut o: Vec<usize> = (0..m).collect();
                o.sort_by(|&a, &b| x.get(rows[a], j).total_cmp(&x.get(rows[b], j)));
                o
            })
            .collect();
        let mut fitted = vec![init; m];
        let mut stumps = Vec::with_capacity(rounds);
        let mut rng = seed::rng(seed);
        let take = ((subsample.clamp(0.0, 1.0) * m as f64).round() as usize).clamp(1.min(m), m);
        let mut in_bag = vec![true; m];
        for _ in 0..rounds {
            if m == 0 || d == 0 {
                break;
            }
            if take < m {
                in_bag.iter_mut().for_each(|b| *b = false);
                for p in sample(&mut rng, m, take) {
                    in_bag[p] = true;
                }
            }
            let resid: Vec<f64> = (0..m).map(|p| y[rows[p]] - fitted[p]).collect();
            let total: f64 = (0..m).filter(|&p| in_bag[p]).map(|p| resid[p]).sum();
            let mut best: Option<(f64, Stump)> = None;
            for (j, order) in orders.iter().enumerate() {
                let mut left = 0.0;
                let mut k = 0usize;
                let mut prev: Option<f64> = None;
                for &p in order {
                    if !in_bag[p] {
                        continue;
                    }
                    let v = x.get(rows[p], j);
                    if let Some(pv) = prev {
                        if pv != v && k >= min_leaf && take - k >= min_leaf {
                            let right = total - left;
                            let score = left * left / k as f64 + right * right / (take - k) as f64;
                            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                                best = Some((
                                    score,
                                    Stump {
                                        feature: j,
                                        threshold: 0.5 * (pv + v),
                                        left: left / k as f64,
                                        right: right / (take - k) as f64,
                                    },
                                ));
                            }
                        }
                    }
                    left += resid[p];
                    k += 1;
                    prev = Some(v);
                }
            }
            let Some((_, stump)) = best else {
                break;
            };
            for p in 0..m {
                let step = if x.get(rows[p], stump.feature) <= stump.threshold {
                    stump.left
                } else {
                    stump.right
                };
                fitted[p] += rate * step;
            }
            stumps.push(stump);
        }
        Self { init, rate, stumps }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init
            + self.rate
                * self
                    .stumps
                    .iter()
                    .map(|s| {
                        if x[s.feature] <= s.threshold {
                            s.left
                        } else {
                            s.right
                        }
                    })
                    .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target() {
        let x = Matrix::from_rows(&(0..30).map(|i| vec![i as f64]).collect::<Vec<_>>());
        let y = vec![0.7; 30];
        let rows: Vec<usize> = (0..30).collect();
        let b = BoostedStumps::fit(&x, &y, &rows, 100, 0.1, 1.0, 5, 0);
        assert!((b.predict(&[4.0]) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn fits_additive_steps() {
        let x = Matrix::from_rows(
            &(0..400)
                .map(|i| vec![(i % 2) as f64, ((i / 2) % 2) as f64])
                .collect::<Vec<_>>(),
        );
        let y: Vec<f64> = (0..400)
            .map(|i| 0.3 * (i % 2) as f64 - 0.2 * ((i / 2) % 2) as f64)
            .collect();
        let rows: Vec<usize> = (0..400).collect();
        let b = BoostedStumps::fit(&x, &y, &rows, 300, 0.1, 1.0, 5, 0);
        assert!((b.predict(&[1.0, 0.0]) - 0.3).abs() < 1e-3);
        assert!((b.predict(&[1.0, 1.0]) - 0.1).abs() < 1e-3);
    }
}
