//! Randomization-based estimators: difference in means with Neyman variance,
//! paired-design variance, relative effects, covariate balance and cumulative
//! effects over time.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::ExperimentTable;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_LEVEL: f64 = 0.95;

fn std_normal() -> Normal {
    Normal::standard()
}

/// Two-sided normal quantile for confidence level `level`.
pub fn z_for_level(level: f64) -> f64 {
    std_normal().inverse_cdf(0.5 + level / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Two-sided p-value of a standard normal statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    // constant samples return their value exactly, so their variance is exactly 0
    if v.iter().all(|&x| x == v[0]) {
        return v[0];
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with denominator `n - 1`; zero for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn population_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Point estimate with standard error, normal confidence interval and the
/// sample sizes behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n_treat: usize,
    pub n_control: usize,
}

impl Estimate {
    pub fn new(point: f64, se: f64, n_treat: usize, n_control: usize) -> Self {
        Self::with_level(point, se, DEFAULT_LEVEL, n_treat, n_control)
    }

    pub fn with_level(point: f64, se: f64, level: f64, n_treat: usize, n_control: usize) -> Self {
        let se = se.max(0.0);
        let half = z_for_level(level) * se;
        Self {
            point,
            se,
            ci_low: point - half,
            ci_high: point + half,
            level,
            n_treat,
            n_control,
        }
    }

    /// Same estimate with the interval recomputed at another level.
    pub fn at_level(&self, level: f64) -> Self {
        Self::with_level(self.point, self.se, level, self.n_treat, self.n_control)
    }

    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            self.point / self.se
        } else if self.point == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(self.point)
        }
    }

    /// Two-sided normal p-value for a zero null.
    pub fn p_value(&self) -> f64 {
        two_sided_p(self.z())
    }

    /// `self - other` treating the two estimates as independent.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate::with_level(
            self.point - other.point,
            (self.se * self.se + other.se * other.se).sqrt(),
            self.level,
            self.n_treat + other.n_treat,
            self.n_control + other.n_control,
        )
    }
}

/// Difference in means of two samples with the Neyman variance estimate
/// `s_t^2/n_t + s_c^2/n_c`.
pub fn diff_in_means_values(treat: &[f64], control: &[f64]) -> Result<Estimate> {
    if treat.is_empty() || control.is_empty() {
        return Err(Error::Domain(
            "difference in means needs both arms non-empty".into(),
        ));
    }
    let point = mean(treat) - mean(control);
    let var = sample_variance(treat) / treat.len() as f64
        + sample_variance(control) / control.len() as f64;
    Ok(Estimate::new(point, var.sqrt(), treat.len(), control.len()))
}

fn arm_outcomes(table: &ExperimentTable, arm: &str) -> Result<Vec<f64>> {
    let rows = table.split_by_arm(arm)?;
    Ok(rows.iter().map(|&i| table.outcome()[i]).collect())
}

pub fn diff_in_means(
    table: &ExperimentTable,
    treat_arm: &str,
    control_arm: &str,
) -> Result<Estimate> {
    let t = arm_outcomes(table, treat_arm)?;
    let c = arm_outcomes(table, control_arm)?;
    diff_in_means_values(&t, &c)
}

/// Effect as a percentage of the control mean.
///
/// The standard error uses the delta method for the ratio of two independent
/// means; `control_mean_se` is the standard error of the control mean (pass
/// zero to treat the baseline as fixed).
pub fn ate_pct_baseline(
    est: &Estimate,
    control_mean: f64,
    control_mean_se: f64,
) -> Result<Estimate> {
    if !(control_mean > 0.0) {
        return Err(Error::Domain(format!(
            "control mean must be positive, got {control_mean}"
        )));
    }
    let point = 100.0 * est.point / control_mean;
    let var_c = control_mean_se * control_mean_se;
    let var_t = (est.se * est.se - var_c).max(0.0);
    let treat_mean = control_mean + est.point;
    let var_ratio = var_t / (control_mean * control_mean)
        + treat_mean * treat_mean * var_c / control_mean.powi(4);
    Ok(Estimate::with_level(
        point,
        100.0 * var_ratio.sqrt(),
        est.level,
        est.n_treat,
        est.n_control,
    ))
}

/// Difference in means and the percentage-of-baseline version in one call.
pub fn relative_effect(
    table: &ExperimentTable,
    treat_arm: &str,
    control_arm: &str,
) -> Result<Estimate> {
    let est = diff_in_means(table, treat_arm, control_arm)?;
    let c = arm_outcomes(table, control_arm)?;
    let se_c = (sample_variance(&c) / c.len() as f64).sqrt();
    ate_pct_baseline(&est, mean(&c), se_c)
}

/// Which pair-level quantity feeds the paired variance formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairEffect {
    /// Treated outcome minus control outcome within the pair.
    #[default]
    WithinPairDifference,
    /// Mean outcome of the two pair members.
    PairMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEstimate {
    pub estimate: Estimate,
    pub complete_pairs: usize,
    /// Pairs lacking a treated or a control member; excluded.
    pub incomplete_pairs: usize,
    pub pair_effect: PairEffect,
}

/// Paired-design effect with the conservative variance
/// `V = 1/(J(J-1)) * sum_j (tau_j - tau)^2` over the `J` complete pairs.
pub fn paired_ate(
    table: &ExperimentTable,
    treat_arm: &str,
    control_arm: &str,
    pair_effect: PairEffect,
) -> Result<PairedEstimate> {
    let t = table.arms().require(treat_arm)?;
    let c = table.arms().require(control_arm)?;
    let ids = table
        .pair_ids()
        .ok_or_else(|| Error::Domain("paired estimator needs a pair id column".into()))?;
    let mut members: std::collections::BTreeMap<i64, (Option<f64>, Option<f64>)> =
        Default::default();
    for (i, (&pid, &a)) in ids.iter().zip(table.arm_indices()).enumerate() {
        let y = table.outcome()[i];
        let e = members.entry(pid).or_default();
        if a == t {
            e.0 = Some(y);
        } else if a == c {
            e.1 = Some(y);
        }
    }
    let mut diffs = Vec::new();
    let mut pair_means = Vec::new();
    let mut incomplete = 0;
    for (yt, yc) in members.values() {
        match (yt, yc) {
            (Some(yt), Some(yc)) => {
                diffs.push(yt - yc);
                pair_means.push(0.5 * (yt + yc));
            }
            (None, None) => {}
            _ => incomplete += 1,
        }
    }
    let j = diffs.len();
    if j < 2 {
        return Err(Error::Domain(format!(
            "paired estimator needs at least 2 complete pairs, found {j}"
        )));
    }
    let point = mean(&diffs);
    let effects = match pair_effect {
        PairEffect::WithinPairDifference => &diffs,
        PairEffect::PairMean => &pair_means,
    };
    let m = mean(effects);
    let v = effects.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (j * (j - 1)) as f64;
    Ok(PairedEstimate {
        estimate: Estimate::new(point, v.sqrt(), j, j),
        complete_pairs: j,
        incomplete_pairs: incomplete,
        pair_effect,
    })
}

/// One covariate's balance between two arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_treat: f64,
    pub mean_control: f64,
    /// `|mean_t - mean_c| / sqrt(var_t + var_c)` with population variances.
    pub smd: f64,
    /// Two-sample z-test of equal means (sample variances).
    pub p_value: f64,
}

pub fn balance_row(name: &str, treat: &[f64], control: &[f64]) -> Result<BalanceRow> {
    if treat.is_empty() || control.is_empty() {
        return Err(Error::Domain("balance needs both arms non-empty".into()));
    }
    let (mt, mc) = (mean(treat), mean(control));
    let diff = (mt - mc).abs();
    let pooled = population_variance(treat) + population_variance(control);
    let se = (sample_variance(treat) / treat.len() as f64
        + sample_variance(control) / control.len() as f64)
        .sqrt();
    let (smd, p_value) = if diff == 0.0 {
        (0.0, 1.0)
    } else if pooled == 0.0 || se == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (diff / pooled.sqrt(), two_sided_p(diff / se))
    };
    Ok(BalanceRow {
        covariate: name.to_string(),
        mean_treat: mt,
        mean_control: mc,
        smd,
        p_value,
    })
}

pub fn balance_table(
    table: &ExperimentTable,
    treat_arm: &str,
    control_arm: &str,
) -> Result<Vec<BalanceRow>> {
    let t = table.split_by_arm(treat_arm)?;
    let c = table.split_by_arm(control_arm)?;
    if t.is_empty() || c.is_empty() {
        return Err(Error::Domain("balance needs both arms non-empty".into()));
    }
    let x = table.covariates();
    table
        .covariate_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let vt: Vec<f64> = t.iter().map(|&i| x.get(i, j)).collect();
            let vc: Vec<f64> = c.iter().map(|&i| x.get(i, j)).collect();
            balance_row(name, &vt, &vc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthEstimate {
    pub month: String,
    pub estimate: Estimate,
}

/// Difference in means of the cumulative success indicator at each month.
///
/// `outcome_by_month[i][m]` is 1 when row `i` has succeeded by month `m`;
/// rows must be 0/1 and nondecreasing across months.
pub fn cumulative_ate(
    table: &ExperimentTable,
    treat_arm: &str,
    control_arm: &str,
    outcome_by_month: &Matrix,
    months: &[String],
) -> Result<Vec<MonthEstimate>> {
    if outcome_by_month.rows() != table.n_rows() || outcome_by_month.cols() != months.len() {
        return Err(Error::Validation(
            "monthly outcome matrix shape does not match table and month labels".into(),
        ));
    }
    for i in 0..outcome_by_month.rows() {
        let row = outcome_by_month.row(i);
        if row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Validation(format!(
                "row {i}: monthly outcomes must be 0/1"
            )));
        }
        if row.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation(format!(
                "row {i}: cumulative outcome decreases over time"
            )));
        }
    }
    let t = table.split_by_arm(treat_arm)?;
    let c = table.split_by_arm(control_arm)?;
    months
        .iter()
        .enumerate()
        .map(|(m, label)| {
            let yt: Vec<f64> = t.iter().map(|&i| outcome_by_month.get(i, m)).collect();
            let yc: Vec<f64> = c.iter().map(|&i| outcome_by_month.get(i, m)).collect();
            Ok(MonthEstimate {
                month: label.clone(),
                estimate: diff_in_means_values(&yt, &yc)?,
            })
        })
        .collect()
}

/// Test that two (independent) group effects differ; `se = sqrt(se1^2 + se2^2)`.
pub fn difference_test(first: &Estimate, second: &Estimate) -> (Estimate, f64) {
    let d = first.minus(second);
    let p = d.p_value();
    (d, p)
}
