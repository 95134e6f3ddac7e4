//! Exact capacity-constrained assignment of units to arms.
//!
//! Maximizes the summed predicted effects subject to per-program caps with
//! control uncapped. Units are inserted one at a time in row order and each
//! insertion augments along a shortest path through the arm graph, which
//! keeps the partial assignment optimal (successive shortest paths on a
//! transportation network). Costs are exact fixed-point integers, with a
//! secondary cost that makes tie-breaking deterministic: among optima with
//! equal value, earlier rows lean towards earlier-listed programs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cate::CatePredictions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityMode {
    #[default]
    Fraction,
    Count,
}

/// Per-program caps keyed by arm label. Control never has a cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacities {
    #[serde(default)]
    pub mode: CapacityMode,
    pub limits: BTreeMap<String, f64>,
}

impl Capacities {
    pub fn fractions<S: Into<String>>(limits: impl IntoIterator<Item = (S, f64)>) -> Self {
        Self {
            mode: CapacityMode::Fraction,
            limits: limits.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn counts<S: Into<String>>(limits: impl IntoIterator<Item = (S, usize)>) -> Self {
        Self {
            mode: CapacityMode::Count,
            limits: limits
                .into_iter()
                .map(|(k, v)| (k.into(), v as f64))
                .collect(),
        }
    }

    /// Integer caps for `programs` (labels, in order) over `n` units.
    /// Fractions round down so the stated budget is never exceeded.
    pub fn resolve(&self, programs: &[String], control: &str, n: usize) -> Result<Vec<usize>> {
        if self.limits.contains_key(control) {
            return Err(Error::Config(format!(
                "control arm {control} cannot have a capacity"
            )));
        }
        if let Some(extra) = self.limits.keys().find(|k| !programs.contains(k)) {
            return Err(Error::Config(format!(
                "capacity for unknown program {extra}"
            )));
        }
        programs
            .iter()
            .map(|p| {
                let v = *self
                    .limits
                    .get(p)
                    .ok_or_else(|| Error::Config(format!("no capacity given for program {p}")))?;
                match self.mode {
                    CapacityMode::Fraction => {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(Error::Config(format!(
                                "capacity fraction for {p} must be in [0, 1], got {v}"
                            )));
                        }
                        Ok(((v * n as f64 + 1e-9).floor() as usize).min(n))
                    }
                    CapacityMode::Count => {
                        if !(v >= 0.0 && v.fract() == 0.0) {
                            return Err(Error::Config(format!(
                                "capacity count for {p} must be a whole number, got {v}"
                            )));
                        }
                        Ok((v as usize).min(n))
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub arms: Vec<String>,
    pub control: usize,
    /// Assigned arm index per row.
    pub assigned: Vec<usize>,
    /// Caps per program, in program order.
    pub caps: Vec<usize>,
    /// Assigned counts per arm.
    pub counts: Vec<usize>,
    /// Sum of predicted effects of the assignment, control contributing zero.
    pub objective: f64,
    /// Per program: whether its cap is exhausted.
    pub binding: Vec<bool>,
}

impl AssignmentPlan {
    pub fn n_rows(&self) -> usize {
        self.assigned.len()
    }

    pub fn programs(&self) -> Vec<usize> {
        (0..self.arms.len())
            .filter(|&a| a != self.control)
            .collect()
    }

    pub fn shares(&self) -> Vec<f64> {
        let n = self.n_rows().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn members(&self, arm: usize) -> Vec<usize> {
        (0..self.assigned.len())
            .filter(|&i| self.assigned[i] == arm)
            .collect()
    }

    /// Plan with a fixed assignment (e.g. a random draw), objective from `tau`.
    pub fn from_assignment(
        arms: Vec<String>,
        control: usize,
        assigned: Vec<usize>,
        caps: Vec<usize>,
        tau: Option<&CatePredictions>,
    ) -> Self {
        let mut counts = vec![0; arms.len()];
        for &a in &assigned {
            counts[a] += 1;
        }
        let programs: Vec<usize> = (0..arms.len()).filter(|&a| a != control).collect();
        let objective = tau.map_or(0.0, |t| objective_of(t, &assigned));
        let binding = programs
            .iter()
            .zip(&caps)
            .map(|(&p, &c)| counts[p] >= c)
            .collect();
        Self {
            arms,
            control,
            assigned,
            caps,
            counts,
            objective,
            binding,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "assigned"])?;
        for (i, &a) in self.assigned.iter().enumerate() {
            w.write_record([i.to_string(), self.arms[a].clone()])?;
        }
        w.into_inner()
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

/// Row-order sum of `tau` at the assigned programs.
pub fn objective_of(tau: &CatePredictions, assigned: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &a) in assigned.iter().enumerate() {
        if let Some(c) = tau.programs.iter().position(|&p| p == a) {
            s += tau.tau.get(i, c);
        }
    }
    s
}

type Cost = (i128, i64);

fn add(a: Cost, b: Cost) -> Cost {
    (a.0 + b.0, a.1 + b.1)
}

fn sub(a: Cost, b: Cost) -> Cost {
    (a.0 - b.0, a.1 - b.1)
}

/// Exact fixed-point representation: values are scaled by a power of two so
/// the largest magnitude sits near 2^100, far inside i128 even after summing
/// millions of rows.
fn fixed_point(values: &[f64]) -> Vec<i128> {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return vec![0; values.len()];
    }
    let e = max.log2().ceil() as i32;
    let shift = 100 - e;
    values
        .iter()
        .map(|&v| {
            let scaled = if shift >= 0 {
                v * 2f64.powi(shift.min(1000))
            } else {
                v / 2f64.powi((-shift).min(1000))
            };
            scaled.round() as i128
        })
        .collect()
}

pub fn solve_assignment(cates: &CatePredictions, caps: &Capacities) -> Result<AssignmentPlan> {
    let labels = cates.program_labels();
    let control_label = cates.arms[cates.control].clone();
    let counts = caps.resolve(&labels, &control_label, cates.n_rows())?;
    solve_assignment_counts(cates, &counts)
}

/// Solver entry with integer caps per program (program order).
pub fn solve_assignment_counts(cates: &CatePredictions, caps: &[usize]) -> Result<AssignmentPlan> {
    let n = cates.n_rows();
    let n_prog = cates.programs.len();
    if caps.len() != n_prog {
        return Err(Error::Validation(format!(
            "{} caps for {n_prog} programs",
            caps.len()
        )));
    }
    if cates.tau.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("effect predictions contain NaN".into()));
    }
    if !cates.tau.all_finite() {
        return Err(Error::Domain("effect predictions must be finite".into()));
    }
    // solver arms: programs 0..n_prog in order, control last
    let k = n_prog + 1;
    let fixed = fixed_point(cates.tau.as_slice());
    let cost = |i: usize, a: usize| -> Cost {
        let primary = if a < n_prog {
            -fixed[i * n_prog + a]
        } else {
            0
        };
        (primary, a as i64 * (n - i) as i64)
    };
    let cap = |a: usize| if a < n_prog { caps[a] } else { usize::MAX };
    let mut arm_of = vec![usize::MAX; n];
    let mut load = vec![0usize; k];
    // heaps[a][b]: rows currently in a, keyed by the cost of moving them to b
    let mut heaps: Vec<Vec<BinaryHeap<Reverse<(Cost, usize)>>>> = (0..k)
        .map(|_| (0..k).map(|_| BinaryHeap::new()).collect())
        .collect();
    let push_row =
        |heaps: &mut Vec<Vec<BinaryHeap<Reverse<(Cost, usize)>>>>, j: usize, a: usize| {
            for b in 0..k {
                if b != a {
                    heaps[a][b].push(Reverse((sub(cost(j, b), cost(j, a)), j)));
                }
            }
        };

    for i in 0..n {
        let mut edge: Vec<Vec<Option<(Cost, usize)>>> = vec![vec![None; k]; k];
        for a in 0..k {
            for b in 0..k {
                if a == b {
                    continue;
                }
                let heap = &mut heaps[a][b];
                while let Some(Reverse((c, j))) = heap.peek().copied() {
                    if arm_of[j] == a {
                        edge[a][b] = Some((c, j));
                        break;
                    }
                    heap.pop();
                }
            }
        }
        let mut dist: Vec<Cost> = (0..k).map(|a| cost(i, a)).collect();
        let mut pred: Vec<Option<(usize, usize)>> = vec![None; k];
        for _ in 0..k {
            let mut changed = false;
            for a in 0..k {
                for b in 0..k {
                    if let Some((c, j)) = edge[a][b] {
                        let cand = add(dist[a], c);
                        if cand < dist[b] {
                            dist[b] = cand;
                            pred[b] = Some((a, j));
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let end = (0..k)
            .filter(|&a| load[a] < cap(a))
            .min_by(|&a, &b| dist[a].cmp(&dist[b]).then(a.cmp(&b)))
            .expect("control arm always has room");
        let mut b = end;
        load[end] += 1;
        while let Some((a, j)) = pred[b] {
            arm_of[j] = b;
            push_row(&mut heaps, j, b);
            b = a;
        }
        arm_of[i] = b;
        push_row(&mut heaps, i, b);
    }

    let programs = cates.programs.clone();
    let assigned: Vec<usize> = arm_of
        .iter()
        .map(|&a| {
            if a < n_prog {
                programs[a]
            } else {
                cates.control
            }
        })
        .collect();
    Ok(AssignmentPlan::from_assignment(
        cates.arms.clone(),
        cates.control,
        assigned,
        caps.to_vec(),
        Some(cates),
    ))
}
