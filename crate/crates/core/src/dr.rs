//! Doubly-robust (AIPW) scores and the estimators built on them.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentTable;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nuisance::{
    fit_propensity, oof_outcome_by_arm, CrossFitPlan, LearnerSpec, Propensities,
};
use crate::seed;
use crate::stats::{mean, sample_variance, Estimate};

/// Per-row AIPW scores.
///
/// `psi[i][a]` estimates the potential outcome `Y_i(a)`; `gamma[i][k]` is the
/// contrast of the `k`-th program (arm order, control skipped) against control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrScores {
    pub arms: Vec<String>,
    pub control: usize,
    pub programs: Vec<usize>,
    pub mu: Matrix,
    pub propensity: Matrix,
    pub psi: Matrix,
    pub gamma: Matrix,
    pub arm_of_row: Vec<usize>,
    pub notes: Vec<String>,
}

impl DrScores {
    /// Builds scores from supplied nuisance predictions (`n x arms` each).
    pub fn from_nuisances(table: &ExperimentTable, mu: Matrix, propensity: Matrix) -> Result<Self> {
        let n = table.n_rows();
        let arms = table.arms();
        let k = arms.len();
        if mu.rows() != n || mu.cols() != k || propensity.rows() != n || propensity.cols() != k {
            return Err(Error::Validation(
                "nuisance matrices must be rows x arms".into(),
            ));
        }
        if !mu.all_finite() {
            return Err(Error::Computation(
                "outcome model produced non-finite predictions".into(),
            ));
        }
        let y = table.outcome();
        let w = table.arm_indices();
        let mut psi = Matrix::zeros(n, k);
        for i in 0..n {
            let a = w[i];
            let e = propensity.get(i, a);
            if !(e > 0.0) {
                return Err(Error::Computation(format!(
                    "row {i}: propensity of observed arm is {e}"
                )));
            }
            for b in 0..k {
                let m = mu.get(i, b);
                psi.set(i, b, if a == b { m + (y[i] - m) / e } else { m });
            }
        }
        let control = arms.control_index();
        let programs: Vec<usize> = arms.programs().collect();
        let mut gamma = Matrix::zeros(n, programs.len());
        for i in 0..n {
            let a = w[i];
            for (c, &p) in programs.iter().enumerate() {
                // differencing the model terms first keeps constant shifts of y exact
                let mut g = mu.get(i, p) - mu.get(i, control);
                if a == p {
                    g += (y[i] - mu.get(i, p)) / propensity.get(i, p);
                } else if a == control {
                    g -= (y[i] - mu.get(i, control)) / propensity.get(i, control);
                }
                gamma.set(i, c, g);
            }
        }
        if !psi.all_finite() || !gamma.all_finite() {
            return Err(Error::Computation("non-finite AIPW scores".into()));
        }
        Ok(Self {
            arms: arms.labels().to_vec(),
            control,
            programs,
            mu,
            propensity,
            psi,
            gamma,
            arm_of_row: w.to_vec(),
            notes: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.psi.rows()
    }

    pub fn arm_index(&self, label: &str) -> Result<usize> {
        self.arms
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::Domain(format!("unknown arm {label}")))
    }

    /// Contrast column of `arm`, or `None` for the control arm.
    pub fn contrast(&self, arm: usize) -> Option<Vec<f64>> {
        let c = self.programs.iter().position(|&p| p == arm)?;
        Some(self.gamma.column(c).collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row".to_string()];
        header.extend(
            self.programs
                .iter()
                .map(|&p| format!("gamma:{}", self.arms[p])),
        );
        header.extend(self.arms.iter().map(|a| format!("psi:{a}")));
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.gamma.row(i).iter().map(|v| format!("{v}")));
            rec.extend(self.psi.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Cross-fitted AIPW scores with learned outcome and propensity models.
pub fn aipw_scores(
    table: &ExperimentTable,
    outcome_spec: &LearnerSpec,
    propensity_spec: &LearnerSpec,
    plan: &CrossFitPlan,
    clip: f64,
    seed: u64,
) -> Result<DrScores> {
    let surface = oof_outcome_by_arm(table, outcome_spec, plan, seed::derive(seed, "outcome"))?;
    let props = fit_propensity(table, propensity_spec, plan, clip, seed)?;
    let mut scores = DrScores::from_nuisances(table, surface.mu, props.probs)?;
    scores.notes = surface.notes;
    scores.notes.extend(props.notes);
    Ok(scores)
}

/// Same as [`aipw_scores`] but with precomputed propensities, e.g. fitted on a
/// different covariate set.
pub fn aipw_scores_with_propensities(
    table: &ExperimentTable,
    outcome_spec: &LearnerSpec,
    props: &Propensities,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<DrScores> {
    let surface = oof_outcome_by_arm(table, outcome_spec, plan, seed::derive(seed, "outcome"))?;
    let mut scores = DrScores::from_nuisances(table, surface.mu, props.probs.clone())?;
    scores.notes = surface.notes;
    scores.notes.extend(props.notes.iter().cloned());
    Ok(scores)
}

fn mean_estimate(values: &[f64], n_treat: usize, n_control: usize) -> Estimate {
    let se = (sample_variance(values) / values.len() as f64).sqrt();
    Estimate::new(mean(values), se, n_treat, n_control)
}

/// AIPW average effect of `arm` against control.
pub fn aipw_ate(scores: &DrScores, arm: &str) -> Result<Estimate> {
    let a = scores.arm_index(arm)?;
    let count = |k: usize| scores.arm_of_row.iter().filter(|&&w| w == k).count();
    match scores.contrast(a) {
        None => Ok(Estimate::new(0.0, 0.0, count(a), count(a))),
        Some(g) => Ok(mean_estimate(&g, count(a), count(scores.control))),
    }
}

/// AIPW estimate of the mean potential outcome `E[Y(arm)]`.
pub fn aipw_mean(scores: &DrScores, arm: &str) -> Result<Estimate> {
    let a = scores.arm_index(arm)?;
    let col: Vec<f64> = scores.psi.column(a).collect();
    let n_arm = scores.arm_of_row.iter().filter(|&&w| w == a).count();
    Ok(mean_estimate(&col, n_arm, scores.n_rows() - n_arm))
}

/// Priority-group label per row, 1-based and contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabels {
    pub labels: Vec<usize>,
    pub names: Vec<String>,
}

impl GroupLabels {
    pub fn new(labels: Vec<usize>, names: Vec<String>) -> Result<Self> {
        let g = names.len();
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > g) {
            return Err(Error::Validation(format!(
                "group label {bad} outside 1..={g}"
            )));
        }
        Ok(Self { labels, names })
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == group)
            .collect()
    }

    pub fn shares(&self) -> Vec<f64> {
        let n = self.labels.len().max(1) as f64;
        (1..=self.n_groups())
            .map(|g| self.members(g).len() as f64 / n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub group: usize,
    pub name: String,
    pub n: usize,
    pub share: f64,
    /// `None` when the group has fewer than two rows.
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAteReport {
    pub arm: String,
    pub groups: Vec<GroupEstimate>,
    pub pooled: Estimate,
}

/// Per-group AIPW effects of `arm` plus the pooled effect.
pub fn group_ate(scores: &DrScores, labels: &GroupLabels, arm: &str) -> Result<GroupAteReport> {
    if labels.labels.len() != scores.n_rows() {
        return Err(Error::Validation(
            "group labels do not cover the scored rows".into(),
        ));
    }
    let a = scores.arm_index(arm)?;
    let values: Vec<f64> = scores
        .contrast(a)
        .unwrap_or_else(|| vec![0.0; scores.n_rows()]);
    let pooled = aipw_ate(scores, arm)?;
    let shares = labels.shares();
    let mut groups = Vec::with_capacity(labels.n_groups());
    for g in 1..=labels.n_groups() {
        let rows = labels.members(g);
        let estimate = if rows.len() < 2 {
            log::warn!("group {g} has {} rows; skipped", rows.len());
            None
        } else {
            let v: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
            let nt = rows.iter().filter(|&&i| scores.arm_of_row[i] == a).count();
            let nc = rows
                .iter()
                .filter(|&&i| scores.arm_of_row[i] == scores.control)
                .count();
            Some(mean_estimate(&v, nt, nc))
        };
        groups.push(GroupEstimate {
            group: g,
            name: labels.names[g - 1].clone(),
            n: rows.len(),
            share: shares[g - 1],
            estimate,
        });
    }
    if groups.iter().all(|g| g.n == 0) {
        return Err(Error::Domain("all groups are empty".into()));
    }
    Ok(GroupAteReport {
        arm: arm.to_string(),
        groups,
        pooled,
    })
}

/// Self-normalized inverse-propensity weighted mean of observed outcomes over
/// `subset`, whose rows must all have observed arm `arm`.
pub fn hajek_value(
    table: &ExperimentTable,
    props: &Propensities,
    subset: &[usize],
    arm: &str,
) -> Result<Estimate> {
    let a = table.arms().require(arm)?;
    if subset.is_empty() {
        return Err(Error::Domain(format!("empty subset for arm {arm}")));
    }
    let y = table.outcome();
    let mut sw = 0.0;
    let mut swy = 0.0;
    for &i in subset {
        if table.arm_indices()[i] != a {
            return Err(Error::Validation(format!(
                "row {i} was not observed in arm {arm}"
            )));
        }
        let w = 1.0 / props.get(i, a);
        sw += w;
        swy += w * y[i];
    }
    let point = swy / sw;
    let ss: f64 = subset
        .iter()
        .map(|&i| {
            let w = 1.0 / props.get(i, a);
            w * w * (y[i] - point) * (y[i] - point)
        })
        .sum();
    Ok(Estimate::new(point, ss.sqrt() / sw, subset.len(), 0))
}
