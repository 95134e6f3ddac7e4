//! Doubly-robust value of a deterministic policy.

use serde::{Deserialize, Serialize};

use super::assign::AssignmentPlan;
use super::rule::{apply_priority_rule, PriorityRule};
use super::tree::PolicyTree;
use crate::dataset::ExperimentTable;
use crate::dr::DrScores;
use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance, Estimate};

/// Anything that maps rows to arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Policy {
    Rule(PriorityRule),
    Tree(PolicyTree),
    Plan(AssignmentPlan),
}

impl Policy {
    /// Arm index per row of `table`.
    pub fn actions(&self, table: &ExperimentTable) -> Result<Vec<usize>> {
        let arms = table.arms();
        match self {
            Policy::Rule(rule) => {
                let groups = apply_priority_rule(table, rule)?;
                let by_group: Vec<usize> = rule
                    .actions(arms.control_label())
                    .iter()
                    .map(|a| {
                        arms.index_of(a)
                            .ok_or_else(|| Error::Config(format!("rule assigns unknown arm {a}")))
                    })
                    .collect::<Result<_>>()?;
                Ok(groups
                    .labels
                    .labels
                    .iter()
                    .map(|&g| by_group[g - 1])
                    .collect())
            }
            Policy::Tree(tree) => (0..table.n_rows())
                .map(|i| {
                    let label =
                        tree.action_for(table.covariates().row(i), table.covariate_names())?;
                    arms.index_of(label)
                        .ok_or_else(|| Error::Config(format!("tree assigns unknown arm {label}")))
                })
                .collect(),
            Policy::Plan(plan) => {
                if plan.n_rows() != table.n_rows() {
                    return Err(Error::Validation(format!(
                        "plan covers {} rows, table has {}",
                        plan.n_rows(),
                        table.n_rows()
                    )));
                }
                plan.assigned
                    .iter()
                    .map(|&a| {
                        arms.index_of(&plan.arms[a]).ok_or_else(|| {
                            Error::Config(format!("plan assigns unknown arm {}", plan.arms[a]))
                        })
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub value: Estimate,
    pub shares: Vec<(String, f64)>,
}

/// Per-row doubly-robust contributions `psi_i(a_i)`.
pub fn value_contributions(scores: &DrScores, actions: &[usize]) -> Result<Vec<f64>> {
    if actions.len() != scores.n_rows() {
        return Err(Error::Validation(
            "policy does not cover every scored row".into(),
        ));
    }
    actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if a >= scores.arms.len() {
                return Err(Error::Validation(format!(
                    "row {i}: arm index {a} out of range"
                )));
            }
            Ok(scores.psi.get(i, a))
        })
        .collect()
}

/// Mean doubly-robust value of the assigned arms with a row-level se.
pub fn evaluate_actions(scores: &DrScores, actions: &[usize]) -> Result<PolicyValue> {
    let contrib = value_contributions(scores, actions)?;
    let n = contrib.len();
    let se = (sample_variance(&contrib) / n as f64).sqrt();
    let shares = scores
        .arms
        .iter()
        .enumerate()
        .map(|(a, label)| {
            (
                label.clone(),
                actions.iter().filter(|&&x| x == a).count() as f64 / n as f64,
            )
        })
        .collect();
    let treated = actions.iter().filter(|&&a| a != scores.control).count();
    Ok(PolicyValue {
        value: Estimate::new(mean(&contrib), se, treated, n - treated),
        shares,
    })
}

pub fn evaluate_policy_value(
    table: &ExperimentTable,
    policy: &Policy,
    scores: &DrScores,
) -> Result<PolicyValue> {
    if scores.arms != table.arms().labels() {
        return Err(Error::Validation(
            "scores were computed for a different arm set".into(),
        ));
    }
    let actions = policy.actions(table)?;
    evaluate_actions(scores, &actions)
}
