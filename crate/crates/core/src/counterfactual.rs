//! Group-by-arm value matrices and multi-policy comparisons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cate::CatePredictions;
use crate::dataset::ExperimentTable;
use crate::dr::{hajek_value, DrScores};
use crate::error::{Error, Result};
use crate::nuisance::Propensities;
use crate::policy::{solve_assignment, AssignmentPlan, Capacities};
use crate::seed;
use crate::stats::{mean, sample_variance, Estimate};

use rand::seq::SliceRandom;

pub const DEFAULT_RANDOM_REPS: usize = 200;

/// Row label for the whole sample in value matrices and comparisons.
pub const ALL: &str = "all";
/// Pool of every unit assigned to some program.
pub const PROGRAMS: &str = "programs";

/// Arms in display order: programs as listed, control last.
fn display_order(n_arms: usize, control: usize) -> Vec<usize> {
    (0..n_arms)
        .filter(|&a| a != control)
        .chain(std::iter::once(control))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    /// Assigned arm label, or `all`.
    pub group: String,
    pub share: f64,
    pub n: usize,
    /// Value under the group's own assignment.
    pub optimal: Option<Estimate>,
    /// Value under each arm, in `GroupValueMatrix::columns` order.
    pub under: Vec<Option<Estimate>>,
    /// First program minus each other arm, in `GroupValueMatrix::contrasts` order.
    pub contrasts: Vec<Option<Estimate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupValueMatrix {
    pub columns: Vec<String>,
    pub contrasts: Vec<String>,
    pub rows: Vec<ValueRow>,
}

fn independent_difference(a: &Option<Estimate>, b: &Option<Estimate>) -> Option<Estimate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(Estimate::new(
            a.point - b.point,
            (a.se * a.se + b.se * b.se).sqrt(),
            a.n_treat,
            b.n_treat,
        )),
        _ => None,
    }
}

/// For each assignment group of `plan`, the propensity-weighted observed
/// value of its members who were randomized into each arm.
pub fn group_value_matrix(
    table: &ExperimentTable,
    plan: &AssignmentPlan,
    props: &Propensities,
) -> Result<GroupValueMatrix> {
    let n = table.n_rows();
    if plan.n_rows() != n {
        return Err(Error::Validation(format!(
            "plan covers {} rows, table has {n}",
            plan.n_rows()
        )));
    }
    if plan.arms != table.arms().labels() || props.arms != plan.arms {
        return Err(Error::Validation(
            "plan, propensities and table use different arm sets".into(),
        ));
    }
    let arms = table.arms();
    let order = display_order(arms.len(), arms.control_index());
    let first_program = order[0];
    let columns: Vec<String> = order.iter().map(|&a| arms.label(a).to_string()).collect();
    let others: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&a| a != first_program)
        .collect();
    let contrasts: Vec<String> = others
        .iter()
        .map(|&b| format!("{} - {}", arms.label(first_program), arms.label(b)))
        .collect();
    let observed = table.arm_indices();
    let mut rows = Vec::new();
    let mut group_cells: Vec<(f64, Vec<Option<Estimate>>, Option<Estimate>)> = Vec::new();
    for &g in &order {
        let members = plan.members(g);
        if members.is_empty() {
            continue;
        }
        let share = members.len() as f64 / n as f64;
        let under: Vec<Option<Estimate>> = order
            .iter()
            .map(|&a| {
                let cell: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&i| observed[i] == a)
                    .collect();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    hajek_value(table, props, &cell, arms.label(a)).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        let own = under[order.iter().position(|&a| a == g).expect("group in order")].clone();
        let first = order
            .iter()
            .position(|&a| a == first_program)
            .expect("first program");
        let cs = others
            .iter()
            .map(|&b| {
                independent_difference(
                    &under[first],
                    &under[order.iter().position(|&a| a == b).expect("arm")],
                )
            })
            .collect();
        group_cells.push((share, under.clone(), own.clone()));
        rows.push(ValueRow {
            group: arms.label(g).to_string(),
            share,
            n: members.len(),
            optimal: own,
            under,
            contrasts: cs,
        });
    }
    let combine = |cells: Vec<(f64, &Option<Estimate>)>| -> Option<Estimate> {
        let mut point = 0.0;
        let mut var = 0.0;
        let mut count = 0;
        for (share, cell) in cells {
            let e = cell.as_ref()?;
            point += share * e.point;
            var += share * share * e.se * e.se;
            count += e.n_treat;
        }
        Some(Estimate::new(point, var.sqrt(), count, 0))
    };
    let all_under: Vec<Option<Estimate>> = (0..order.len())
        .map(|c| combine(group_cells.iter().map(|(s, u, _)| (*s, &u[c])).collect()))
        .collect();
    let all_optimal = combine(group_cells.iter().map(|(s, _, o)| (*s, o)).collect());
    let first = 0;
    let all_contrasts = (1..order.len())
        .map(|c| independent_difference(&all_under[first], &all_under[c]))
        .collect();
    rows.push(ValueRow {
        group: ALL.to_string(),
        share: 1.0,
        n,
        optimal: all_optimal,
        under: all_under,
        contrasts: all_contrasts,
    });
    Ok(GroupValueMatrix {
        columns,
        contrasts,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    #[default]
    Optimal,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueEstimator {
    /// Mean of AIPW potential-outcome scores at the assigned arm.
    #[default]
    DoublyRobust,
    /// Self-normalized inverse-propensity weighting of observed outcomes.
    Hajek,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: String,
    pub capacities: Capacities,
    #[serde(default)]
    pub mode: AssignmentMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolValue {
    pub pool: String,
    pub share: f64,
    pub value: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub name: String,
    pub mode: AssignmentMode,
    pub caps: Vec<usize>,
    pub pools: Vec<PoolValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDifference {
    pub pool: String,
    pub difference: Estimate,
    /// Difference as a percentage of the other policy's value.
    pub relative_gain_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDifference {
    pub first: String,
    pub other: String,
    pub pools: Vec<PoolDifference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub estimator: ValueEstimator,
    pub random_reps: usize,
    pub pools: Vec<String>,
    pub policies: Vec<PolicyResult>,
    pub differences: Vec<PolicyDifference>,
}

/// Per-row totals for one pool: `weight` is how often (or how heavily) the
/// row counts, `amount` the matching weighted value contribution.
struct PoolRows {
    weight: Vec<f64>,
    amount: Vec<f64>,
}

impl PoolRows {
    fn new(n: usize) -> Self {
        Self {
            weight: vec![0.0; n],
            amount: vec![0.0; n],
        }
    }

    fn value(&self) -> f64 {
        let w: f64 = self.weight.iter().sum();
        if w > 0.0 {
            self.amount.iter().sum::<f64>() / w
        } else {
            f64::NAN
        }
    }

    /// Linearized influence of each row on the ratio value.
    fn influence(&self) -> Vec<f64> {
        let n = self.weight.len() as f64;
        let w: f64 = self.weight.iter().sum();
        let v = self.value();
        self.amount
            .iter()
            .zip(&self.weight)
            .map(|(a, f)| if w > 0.0 { (a - v * f) * n / w } else { 0.0 })
            .collect()
    }
}

fn se_from_influence(phi: &[f64]) -> f64 {
    let n = phi.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ss: f64 = phi.iter().map(|p| p * p).sum();
    (ss / (n * (n - 1.0))).sqrt()
}

struct Accumulated {
    pools: Vec<PoolRows>,
    shares: Vec<f64>,
}

fn accumulate(
    table: &ExperimentTable,
    scores: &DrScores,
    props: &Propensities,
    estimator: ValueEstimator,
    assignments: &[Vec<usize>],
    pool_arms: &[Vec<usize>],
) -> Accumulated {
    let n = table.n_rows();
    let reps = assignments.len() as f64;
    let observed = table.arm_indices();
    let y = table.outcome();
    let mut pools: Vec<PoolRows> = pool_arms.iter().map(|_| PoolRows::new(n)).collect();
    let mut counts = vec![0.0; pool_arms.len()];
    for actions in assignments {
        for (i, &a) in actions.iter().enumerate() {
            for (k, arms) in pool_arms.iter().enumerate() {
                if !arms.contains(&a) {
                    continue;
                }
                counts[k] += 1.0 / reps;
                let pr = &mut pools[k];
                match estimator {
                    ValueEstimator::DoublyRobust => {
                        pr.weight[i] += 1.0 / reps;
                        pr.amount[i] += scores.psi.get(i, a) / reps;
                    }
                    ValueEstimator::Hajek => {
                        if observed[i] == a {
                            let w = 1.0 / (props.get(i, a) * reps);
                            pr.weight[i] += w;
                            pr.amount[i] += w * y[i];
                        }
                    }
                }
            }
        }
    }
    Accumulated {
        pools,
        shares: counts.iter().map(|c| c / n as f64).collect(),
    }
}

/// Draws a capacity-filling random assignment: a seeded permutation of rows
/// gives the first `caps[0]` rows to the first program, the next `caps[1]`
/// to the second, and so on; everyone else gets control.
pub fn random_assignment(
    n: usize,
    programs: &[usize],
    control: usize,
    caps: &[usize],
    seed: u64,
) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let mut out = vec![control; n];
    let mut pos = 0;
    for (&p, &c) in programs.iter().zip(caps) {
        for &i in perm.iter().skip(pos).take(c) {
            out[i] = p;
        }
        pos = (pos + c).min(n);
    }
    out
}

/// Values several capacity/assignment policies on the same data. Optimal
/// policies solve the assignment problem on `cates`; random ones average
/// `reps` seeded capacity-filling random draws.
#[allow(clippy::too_many_arguments)]
pub fn compare_policies(
    table: &ExperimentTable,
    policies: &[PolicySpec],
    cates: &CatePredictions,
    scores: &DrScores,
    props: &Propensities,
    estimator: ValueEstimator,
    reps: usize,
    seed: u64,
) -> Result<PolicyComparison> {
    if policies.len() < 2 {
        return Err(Error::Config(
            "policy comparison needs at least two policies".into(),
        ));
    }
    if reps == 0 {
        return Err(Error::Config("random policy reps must be >= 1".into()));
    }
    let n = table.n_rows();
    if scores.n_rows() != n || cates.n_rows() != n || props.probs.rows() != n {
        return Err(Error::Validation(
            "scores, effects and propensities must cover the table".into(),
        ));
    }
    let arms = table.arms();
    let control = arms.control_index();
    let programs: Vec<usize> = arms.programs().collect();
    let program_labels: Vec<String> = programs
        .iter()
        .map(|&p| arms.label(p).to_string())
        .collect();
    let mut pool_names: Vec<String> = program_labels.clone();
    let mut pool_arms: Vec<Vec<usize>> = programs.iter().map(|&p| vec![p]).collect();
    pool_names.push(PROGRAMS.into());
    pool_arms.push(programs.clone());
    pool_names.push(ALL.into());
    pool_arms.push((0..arms.len()).collect());

    let base = seed::derive(seed, "compare-policies");
    let mut results = Vec::with_capacity(policies.len());
    let mut influences: Vec<Vec<(f64, Vec<f64>)>> = Vec::with_capacity(policies.len());
    for spec in policies {
        let caps = spec
            .capacities
            .resolve(&program_labels, arms.control_label(), n)?;
        let assignments: Vec<Vec<usize>> = match spec.mode {
            AssignmentMode::Optimal => vec![solve_assignment(cates, &spec.capacities)?.assigned],
            AssignmentMode::Random => {
                // Keyed by the resolved caps: identical policies draw identically.
                let key: Vec<String> = caps.iter().map(|c| c.to_string()).collect();
                let pseed = seed::derive(base, &key.join(","));
                (0..reps as u64)
                    .into_par_iter()
                    .map(|r| {
                        random_assignment(
                            n,
                            &programs,
                            control,
                            &caps,
                            seed::derive_index(pseed, r),
                        )
                    })
                    .collect()
            }
        };
        let acc = accumulate(table, scores, props, estimator, &assignments, &pool_arms);
        let mut pools = Vec::with_capacity(pool_names.len());
        let mut infl = Vec::with_capacity(pool_names.len());
        for (p, rows) in acc.pools.iter().enumerate() {
            let phi = rows.influence();
            let v = rows.value();
            let members = (acc.shares[p] * n as f64).round() as usize;
            pools.push(PoolValue {
                pool: pool_names[p].clone(),
                share: acc.shares[p],
                value: Estimate::new(v, se_from_influence(&phi), members, n - members),
            });
            infl.push((v, phi));
        }
        influences.push(infl);
        results.push(PolicyResult {
            name: spec.name.clone(),
            mode: spec.mode,
            caps,
            pools,
        });
    }
    let differences = (1..policies.len())
        .map(|k| PolicyDifference {
            first: policies[0].name.clone(),
            other: policies[k].name.clone(),
            pools: (0..pool_names.len())
                .map(|p| {
                    let (v1, phi1) = &influences[0][p];
                    let (v2, phi2) = &influences[k][p];
                    let d: Vec<f64> = phi1.iter().zip(phi2).map(|(a, b)| a - b).collect();
                    PoolDifference {
                        pool: pool_names[p].clone(),
                        difference: Estimate::new(v1 - v2, se_from_influence(&d), 0, 0),
                        relative_gain_pct: 100.0 * (v1 - v2) / v2,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(PolicyComparison {
        estimator,
        random_reps: reps,
        pools: pool_names,
        policies: results,
        differences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMean {
    pub covariate: String,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    pub group: String,
    pub n: usize,
    pub covariates: Vec<CovariateMean>,
}

/// Covariate means and standard errors within each assignment group.
pub fn covariate_profile(
    table: &ExperimentTable,
    plan: &AssignmentPlan,
) -> Result<Vec<GroupProfile>> {
    if plan.n_rows() != table.n_rows() {
        return Err(Error::Validation("plan does not cover the table".into()));
    }
    let x = table.covariates();
    let order = display_order(plan.arms.len(), plan.control);
    Ok(order
        .into_iter()
        .filter_map(|g| {
            let members = plan.members(g);
            if members.is_empty() {
                return None;
            }
            let covariates = table
                .covariate_names()
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let v: Vec<f64> = members.iter().map(|&i| x.get(i, j)).collect();
                    CovariateMean {
                        covariate: name.clone(),
                        mean: mean(&v),
                        se: (sample_variance(&v) / v.len() as f64).sqrt(),
                    }
                })
                .collect();
            Some(GroupProfile {
                group: plan.arms[g].clone(),
                n: members.len(),
                covariates,
            })
        })
        .collect())
}
