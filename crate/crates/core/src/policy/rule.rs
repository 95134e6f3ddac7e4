//! Ordered priority rules: the first group whose predicates all hold claims
//! the row; rows matching no group fall into the catch-all.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentTable;
use crate::dr::GroupLabels;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    /// Encoded covariate name, e.g. `grad` or `city=warsaw`.
    pub column: String,
    pub op: Op,
    pub value: f64,
}

impl Predicate {
    pub fn new(column: impl Into<String>, op: Op, value: f64) -> Self {
        Self {
            column: column.into(),
            op,
            value,
        }
    }

    pub fn holds(&self, v: f64) -> bool {
        match self.op {
            Op::Eq => v == self.value,
            Op::Ne => v != self.value,
            Op::Lt => v < self.value,
            Op::Le => v <= self.value,
            Op::Gt => v > self.value,
            Op::Ge => v >= self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityGroup {
    pub name: String,
    /// Conjunction; an empty list matches every row.
    #[serde(default)]
    pub all: Vec<Predicate>,
    /// Arm given to this group when the rule is evaluated as a policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
}

fn default_catch_all() -> String {
    "rest".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityRule {
    pub groups: Vec<PriorityGroup>,
    #[serde(default = "default_catch_all")]
    pub catch_all: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catch_all_action: Option<String>,
}

impl PriorityRule {
    pub fn new(groups: Vec<PriorityGroup>) -> Self {
        Self {
            groups,
            catch_all: default_catch_all(),
            catch_all_action: None,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| g.name.clone())
            .chain(std::iter::once(self.catch_all.clone()))
            .collect()
    }

    /// Arm label per group (catch-all last); unset actions map to `control`.
    pub fn actions(&self, control: &str) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| g.action.clone().unwrap_or_else(|| control.to_string()))
            .chain(std::iter::once(
                self.catch_all_action
                    .clone()
                    .unwrap_or_else(|| control.to_string()),
            ))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityAssignment {
    pub labels: GroupLabels,
    pub counts: Vec<usize>,
    pub shares: Vec<f64>,
    pub cumulative: Vec<f64>,
}

pub fn apply_priority_rule(
    table: &ExperimentTable,
    rule: &PriorityRule,
) -> Result<PriorityAssignment> {
    let resolved: Vec<Vec<(usize, &Predicate)>> = rule
        .groups
        .iter()
        .map(|g| {
            g.all
                .iter()
                .map(|p| {
                    let j = table.column_index(&p.column).ok_or_else(|| {
                        Error::Config(format!("group {}: unknown column {}", g.name, p.column))
                    })?;
                    Ok((j, p))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let x = table.covariates();
    let catch_all = rule.groups.len() + 1;
    let labels: Vec<usize> = (0..table.n_rows())
        .map(|i| {
            let row = x.row(i);
            resolved
                .iter()
                .position(|preds| preds.iter().all(|(j, p)| p.holds(row[*j])))
                .map_or(catch_all, |g| g + 1)
        })
        .collect();
    let labels = GroupLabels::new(labels, rule.group_names())?;
    let n = table.n_rows().max(1) as f64;
    let counts: Vec<usize> = (1..=labels.n_groups())
        .map(|g| labels.members(g).len())
        .collect();
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let cumulative = shares
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    Ok(PriorityAssignment {
        labels,
        counts,
        shares,
        cumulative,
    })
}
