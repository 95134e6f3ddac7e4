//! Exact search over shallow axis-aligned policy trees.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAX_EXACT_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        action: String,
    },
    Split {
        feature: String,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTree {
    pub depth: usize,
    pub approximate: bool,
    /// Total reward of the tree on the search data.
    pub reward: f64,
    pub root: TreeNode,
}

impl PolicyTree {
    /// Action label for one covariate row, resolving feature names via
    /// `names`.
    pub fn action_for(&self, row: &[f64], names: &[String]) -> Result<&str> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { action } => return Ok(action),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let j = names.iter().position(|n| n == feature).ok_or_else(|| {
                        Error::Config(format!("tree splits on unknown column {feature}"))
                    })?;
                    node = if row[j] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn actual_depth(&self) -> usize {
        fn go(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    /// Indented text rendering, one split or leaf per line.
    pub fn render(&self) -> String {
        fn go(n: &TreeNode, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match n {
                TreeNode::Leaf { action } => {
                    let _ = writeln!(out, "{pad}-> {action}");
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(out, "{pad}{feature} <= {threshold}");
                    go(left, indent + 1, out);
                    let _ = writeln!(out, "{pad}{feature} > {threshold}");
                    go(right, indent + 1, out);
                }
            }
        }
        let mut s = String::new();
        go(&self.root, 0, &mut s);
        s
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

struct Search<'a> {
    x: &'a Matrix,
    rewards: &'a Matrix,
    /// Action indices in tie-break preference order.
    preference: Vec<usize>,
    eps: f64,
}

/// Rows of a node, one sorted copy per feature.
#[derive(Clone)]
struct NodeRows {
    sorted: Vec<Vec<usize>>,
}

impl NodeRows {
    fn n(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    fn partition(&self, mask: &[bool]) -> (NodeRows, NodeRows) {
        let mut l = Vec::with_capacity(self.sorted.len());
        let mut r = Vec::with_capacity(self.sorted.len());
        for s in &self.sorted {
            let (a, b): (Vec<usize>, Vec<usize>) = s.iter().partition(|&&i| mask[i]);
            l.push(a);
            r.push(b);
        }
        (NodeRows { sorted: l }, NodeRows { sorted: r })
    }
}

impl Search<'_> {
    fn better(&self, cand: f64, best: f64) -> bool {
        cand > best + self.eps
    }

    fn leaf(&self, rows: &[usize]) -> (f64, usize) {
        let k = self.rewards.cols();
        let mut tot = vec![0.0; k];
        for &i in rows {
            for (t, r) in tot.iter_mut().zip(self.rewards.row(i)) {
                *t += r;
            }
        }
        self.pick(&tot)
    }

    fn pick(&self, totals: &[f64]) -> (f64, usize) {
        let mut best = (totals[self.preference[0]], self.preference[0]);
        for &a in &self.preference[1..] {
            if self.better(totals[a], best.0) {
                best = (totals[a], a);
            }
        }
        best
    }

    /// Candidate splits of a node on feature `j`: (position in sorted list,
    /// threshold) at every boundary between distinct values.
    fn boundaries(&self, sorted: &[usize], j: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for p in 1..sorted.len() {
            let a = self.x.get(sorted[p - 1], j);
            let b = self.x.get(sorted[p], j);
            if a != b {
                out.push((p, 0.5 * (a + b)));
            }
        }
        out
    }

    fn depth_one(&self, rows: &NodeRows) -> (f64, Node) {
        let base = rows.sorted.first().map(Vec::as_slice).unwrap_or(&[]);
        let (mut best_v, leaf_a) = self.leaf(base);
        let mut best = Node::Leaf(leaf_a);
        let k = self.rewards.cols();
        let mut total = vec![0.0; k];
        for &i in base {
            for (t, r) in total.iter_mut().zip(self.rewards.row(i)) {
                *t += r;
            }
        }
        for (j, sorted) in rows.sorted.iter().enumerate() {
            let mut left = vec![0.0; k];
            let mut right = vec![0.0; k];
            for p in 1..sorted.len() {
                for (l, r) in left.iter_mut().zip(self.rewards.row(sorted[p - 1])) {
                    *l += r;
                }
                let a = self.x.get(sorted[p - 1], j);
                let b = self.x.get(sorted[p], j);
                if a == b {
                    continue;
                }
                for ((r, t), l) in right.iter_mut().zip(&total).zip(&left) {
                    *r = t - l;
                }
                let (lv, la) = self.pick(&left);
                let (rv, ra) = self.pick(&right);
                if la == ra {
                    continue;
                }
                if self.better(lv + rv, best_v) {
                    best_v = lv + rv;
                    best = Node::Split {
                        feature: j,
                        threshold: 0.5 * (a + b),
                        left: Box::new(Node::Leaf(la)),
                        right: Box::new(Node::Leaf(ra)),
                    };
                }
            }
        }
        (best_v, best)
    }

    fn split_children(&self, rows: &NodeRows, j: usize, pos: usize) -> (NodeRows, NodeRows) {
        let mut mask = vec![false; self.x.rows()];
        for &i in &rows.sorted[j][..pos] {
            mask[i] = true;
        }
        rows.partition(&mask)
    }

    fn exact(&self, rows: &NodeRows, depth: usize) -> (f64, Node) {
        match depth {
            0 => {
                let (v, a) = self.leaf(rows.sorted.first().map(Vec::as_slice).unwrap_or(&[]));
                (v, Node::Leaf(a))
            }
            1 => self.depth_one(rows),
            _ => {
                let (mut best_v, mut best) = self.exact(rows, depth - 1);
                for j in 0..rows.sorted.len() {
                    for (pos, thr) in self.boundaries(&rows.sorted[j], j) {
                        let (l, r) = self.split_children(rows, j, pos);
                        let (lv, ln) = self.exact(&l, depth - 1);
                        let (rv, rn) = self.exact(&r, depth - 1);
                        if self.better(lv + rv, best_v) {
                            best_v = lv + rv;
                            best = Node::Split {
                                feature: j,
                                threshold: thr,
                                left: Box::new(ln),
                                right: Box::new(rn),
                            };
                        }
                    }
                }
                (best_v, best)
            }
        }
    }

    /// Root level in parallel; the winner is the first candidate in
    /// (feature, threshold) order among those strictly better than all
    /// earlier ones, exactly as the serial loop would pick.
    fn exact_root(&self, rows: &NodeRows, depth: usize) -> (f64, Node) {
        if depth < 2 {
            return self.exact(rows, depth);
        }
        let (base_v, base) = self.exact(rows, depth - 1);
        let candidates: Vec<(usize, usize, f64)> = (0..rows.sorted.len())
            .flat_map(|j| {
                self.boundaries(&rows.sorted[j], j)
                    .into_iter()
                    .map(move |(p, t)| (j, p, t))
            })
            .collect();
        let evaluated: Vec<(f64, Node)> = candidates
            .par_iter()
            .map(|&(j, pos, thr)| {
                let (l, r) = self.split_children(rows, j, pos);
                let (lv, ln) = self.exact(&l, depth - 1);
                let (rv, rn) = self.exact(&r, depth - 1);
                (
                    lv + rv,
                    Node::Split {
                        feature: j,
                        threshold: thr,
                        left: Box::new(ln),
                        right: Box::new(rn),
                    },
                )
            })
            .collect();
        let mut best = (base_v, base);
        for (v, node) in evaluated {
            if self.better(v, best.0) {
                best = (v, node);
            }
        }
        best
    }

    fn greedy(&self, rows: &NodeRows, depth: usize) -> (f64, Node) {
        if depth == 0 || rows.n() < 2 {
            return self.exact(rows, 0);
        }
        let (v1, node) = self.depth_one(rows);
        match node {
            Node::Split {
                feature, threshold, ..
            } => {
                let pos = rows.sorted[feature]
                    .iter()
                    .position(|&i| self.x.get(i, feature) > threshold)
                    .unwrap_or(rows.n());
                let (l, r) = self.split_children(rows, feature, pos);
                let (lv, ln) = self.greedy(&l, depth - 1);
                let (rv, rn) = self.greedy(&r, depth - 1);
                if lv + rv >= v1 {
                    (
                        lv + rv,
                        Node::Split {
                            feature,
                            threshold,
                            left: Box::new(ln),
                            right: Box::new(rn),
                        },
                    )
                } else {
                    (v1, node)
                }
            }
            leaf => (v1, leaf),
        }
    }
}

fn to_public(n: &Node, names: &[String], actions: &[String]) -> TreeNode {
    match n {
        Node::Leaf(a) => TreeNode::Leaf {
            action: actions[*a].clone(),
        },
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature: names[*feature].clone(),
            threshold: *threshold,
            left: Box::new(to_public(left, names, actions)),
            right: Box::new(to_public(right, names, actions)),
        },
    }
}

/// Finds the tree of depth at most `depth` maximizing the summed reward of
/// its leaf actions. `rewards` is rows x actions; `preference` lists action
/// indices in tie-break order (first wins ties). Depths above
/// [`MAX_EXACT_DEPTH`] need `approximate`, which switches to greedy growth.
pub fn search_policy_tree(
    x: &Matrix,
    names: &[String],
    rewards: &Matrix,
    actions: &[String],
    preference: &[usize],
    depth: usize,
    approximate: bool,
) -> Result<PolicyTree> {
    if x.rows() != rewards.rows() {
        return Err(Error::Validation("covariate and reward rows differ".into()));
    }
    if names.len() != x.cols() || actions.len() != rewards.cols() {
        return Err(Error::Validation(
            "names or actions do not match matrix shapes".into(),
        ));
    }
    if rewards.cols() == 0 {
        return Err(Error::Validation("no actions".into()));
    }
    let mut pref_sorted = preference.to_vec();
    pref_sorted.sort_unstable();
    if pref_sorted != (0..actions.len()).collect::<Vec<_>>() {
        return Err(Error::Validation(
            "preference must list every action once".into(),
        ));
    }
    if !rewards.all_finite() {
        return Err(Error::Domain("rewards must be finite".into()));
    }
    if depth > MAX_EXACT_DEPTH && !approximate {
        return Err(Error::Config(format!(
            "exact tree search is limited to depth {MAX_EXACT_DEPTH}; enable the approximate mode for depth {depth}"
        )));
    }
    let scale: f64 = rewards.as_slice().iter().map(|v| v.abs()).sum();
    let search = Search {
        x,
        rewards,
        preference: preference.to_vec(),
        eps: 1e-12 * (1.0 + scale),
    };
    let rows = NodeRows {
        sorted: (0..x.cols())
            .map(|j| {
                let mut o: Vec<usize> = (0..x.rows()).collect();
                o.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)).then(a.cmp(&b)));
                o
            })
            .collect(),
    };
    // with no covariates there is nothing to split on
    let rows = if x.cols() == 0 {
        NodeRows {
            sorted: vec![(0..x.rows()).collect()],
        }
    } else {
        rows
    };
    let (reward, node) = if approximate && depth > MAX_EXACT_DEPTH {
        search.greedy(&rows, depth)
    } else if x.cols() == 0 {
        search.exact(&rows, 0)
    } else {
        search.exact_root(&rows, depth)
    };
    Ok(PolicyTree {
        depth,
        approximate: approximate && depth > MAX_EXACT_DEPTH,
        reward,
        root: to_public(&node, names, actions),
    })
}
