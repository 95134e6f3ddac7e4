//! CART regression trees and a bagged random-forest regressor.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub mtry: usize,
}

/// Best SSE-reducing split of `rows` on `feature`, as (gain, threshold).
///
/// `rows` arrive in canonical order; sorting is stable so tied values keep it.
pub(crate) fn best_split_on(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let m = rows.len();
    if m < 2 * min_leaf.max(1) {
        return None;
    }
    let mut order: Vec<(f64, f64)> = rows.iter().map(|&i| (x.get(i, feature), y[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = order.iter().map(|p| p.1).sum();
    let mut left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    let base = total * total / m as f64;
    for k in 1..m {
        left += order[k - 1].1;
        if k < min_leaf.max(1) || m - k < min_leaf.max(1) {
            continue;
        }
        if order[k - 1].0 == order[k].0 {
            continue;
        }
        let right = total - left;
        let score = left * left / k as f64 + right * right / (m - k) as f64 - base;
        if best.is_none_or(|(g, _)| score > g) {
            best = Some((score, 0.5 * (order[k - 1].0 + order[k].0)));
        }
    }
    best.filter(|(g, _)| *g > 1e-12 * (1.0 + base.abs()))
}

pub(crate) fn grow_tree<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> RegressionTree {
    let mut nodes = Vec::new();
    grow(x, y, rows.to_vec(), 0, params, rng, &mut nodes);
    RegressionTree { nodes }
}

fn grow<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &TreeParams,
    rng: &mut R,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len().max(1) as f64;
    nodes.push(Node::Leaf(mean));
    if params.max_depth.is_some_and(|d| depth >= d) || rows.len() < 2 * params.min_leaf {
        return id;
    }
    let d = x.cols();
    let k = params.mtry.clamp(1, d.max(1));
    if d == 0 {
        return id;
    }
    let mut features = sample(rng, d, k).into_vec();
    features.sort_unstable();
    let mut best: Option<(f64, usize, f64)> = None;
    for &j in &features {
        if let Some((gain, thr)) = best_split_on(x, y, &rows, j, params.min_leaf) {
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, j, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| x.get(i, feature) <= threshold);
    let left = grow(x, y, l, depth + 1, params, rng, nodes);
    let right = grow(x, y, r, depth + 1, params, rng, nodes);
    nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
    /// Training mean; used directly when trees are depth-limited to zero.
    pub mean: f64,
    pub root_only: bool,
}

impl RandomForest {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        n_trees: usize,
        max_depth: Option<usize>,
        min_leaf: usize,
        mtry: Option<usize>,
        seed: u64,
    ) -> Self {
        let m = rows.len();
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / m.max(1) as f64;
        if max_depth == Some(0) || m == 0 {
            return Self {
                trees: Vec::new(),
                mean,
                root_only: true,
            };
        }
        let d = x.cols();
        let params = TreeParams {
            max_depth,
            min_leaf: min_leaf.max(1),
            mtry: mtry.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize),
        };
        let trees = (0..n_trees as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive_index(seed, t));
                let mut boot: Vec<usize> = (0..m).map(|_| rows[rng.random_range(0..m)]).collect();
                boot.sort_unstable();
                grow_tree(x, y, &boot, &params, &mut rng)
            })
            .collect();
        Self {
            trees,
            mean,
            root_only: false,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.root_only || self.trees.is_empty() {
            return self.mean;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_is_training_mean() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let rows: Vec<usize> = (0..20).collect();
        let f = RandomForest::fit(&x, &y, &rows, 50, Some(0), 1, None, 1);
        let mean = y.iter().sum::<f64>() / 20.0;
        assert_eq!(f.predict(&[3.0]), mean);
    }

    #[test]
    fn learns_step_function() {
        let x = Matrix::from_rows(
            &(0..200)
                .map(|i| vec![(i % 2) as f64, (i % 7) as f64])
                .collect::<Vec<_>>(),
        );
        let y: Vec<f64> = (0..200)
            .map(|i| if i % 2 == 1 { 1.0 } else { 0.0 })
            .collect();
        let rows: Vec<usize> = (0..200).collect();
        let f = RandomForest::fit(&x, &y, &rows, 50, None, 5, Some(2), 9);
        assert!(f.predict(&[1.0, 3.0]) > 0.95);
        assert!(f.predict(&[0.0, 3.0]) < 0.05);
    }

    #[test]
    fn split_respects_min_leaf() {
        let x = Matrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..10).map(|i| if i == 9 { 10.0 } else { 0.0 }).collect();
        let rows: Vec<usize> = (0..10).collect();
        let (_, thr) = best_split_on(&x, &y, &rows, 0, 3).unwrap();
        assert!(thr <= 6.5);
    }
}
