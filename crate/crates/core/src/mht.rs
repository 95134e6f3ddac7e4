//! Romano-Wolf stepdown adjustment for families of subgroup effects.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentTable;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{two_sided_p, Estimate};

pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;
pub const MIN_BOOTSTRAP_REPS: usize = 100;

/// One hypothesis: the effect in a subgroup is zero, or two subgroups share
/// the same effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Hypothesis {
    Subgroup {
        label: String,
        members: Vec<bool>,
    },
    Difference {
        label: String,
        first: Vec<bool>,
        second: Vec<bool>,
    },
}

impl Hypothesis {
    pub fn subgroup(label: impl Into<String>, members: Vec<bool>) -> Self {
        Hypothesis::Subgroup {
            label: label.into(),
            members,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Hypothesis::Subgroup { label, .. } | Hypothesis::Difference { label, .. } => label,
        }
    }

    fn masks(&self) -> Vec<&[bool]> {
        match self {
            Hypothesis::Subgroup { members, .. } => vec![members],
            Hypothesis::Difference { first, second, .. } => vec![first, second],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFamily {
    pub hypotheses: Vec<Hypothesis>,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl HypothesisFamily {
    pub fn new(hypotheses: Vec<Hypothesis>, reps: usize, seed: u64) -> Self {
        Self {
            hypotheses,
            reps,
            seed,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedResult {
    pub label: String,
    pub estimate: Estimate,
    pub t: f64,
    /// Normal-approximation two-sided p-value.
    pub p_normal: f64,
    /// Single-hypothesis bootstrap p-value.
    pub p_unadjusted: f64,
    pub p_adjusted: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomanoWolfReport {
    pub treat_arm: String,
    pub control_arm: String,
    pub reps: usize,
    pub alpha: f64,
    pub redraws: usize,
    pub paired_resampling: bool,
    pub results: Vec<AdjustedResult>,
}

/// Resampling units: row lists drawn together, grouped in strata drawn
/// separately.
struct Design {
    strata: Vec<Vec<Vec<usize>>>,
}

impl Design {
    fn build(table: &ExperimentTable, treat: usize, control: usize) -> (Self, bool) {
        let arms = table.arm_indices();
        let in_scope = |i: usize| arms[i] == treat || arms[i] == control;
        if let Some(pairs) = table.pair_ids() {
            let mut by_pair: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
            let mut singles_t = Vec::new();
            let mut singles_c = Vec::new();
            for i in (0..table.n_rows()).filter(|&i| in_scope(i)) {
                by_pair.entry(pairs[i]).or_default().push(i);
            }
            let mut complete = Vec::new();
            for (_, rows) in by_pair {
                let has_t = rows.iter().any(|&i| arms[i] == treat);
                let has_c = rows.iter().any(|&i| arms[i] == control);
                if has_t && has_c {
                    complete.push(rows);
                } else {
                    for i in rows {
                        if arms[i] == treat {
                            singles_t.push(vec![i]);
                        } else {
                            singles_c.push(vec![i]);
                        }
                    }
                }
            }
            let strata = [complete, singles_t, singles_c]
                .into_iter()
                .filter(|s| !s.is_empty())
                .collect();
            (Self { strata }, true)
        } else {
            let t = (0..table.n_rows())
                .filter(|&i| arms[i] == treat)
                .map(|i| vec![i])
                .collect();
            let c = (0..table.n_rows())
                .filter(|&i| arms[i] == control)
                .map(|i| vec![i])
                .collect();
            (Self { strata: vec![t, c] }, false)
        }
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<u32> {
        let mut counts = vec![0u32; n];
        for stratum in &self.strata {
            let m = stratum.len();
            for _ in 0..m {
                for &i in &stratum[rng.random_range(0..m)] {
                    counts[i] += 1;
                }
            }
        }
        counts
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    s: f64,
    ss: f64,
}

impl Moments {
    fn add(&mut self, w: f64, y: f64) {
        self.n += w;
        self.s += w * y;
        self.ss += w * y * y;
    }
    fn mean(&self) -> f64 {
        self.s / self.n
    }
    fn var_of_mean(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        ((self.ss - self.n * m * m) / (self.n - 1.0)).max(0.0) / self.n
    }
}

/// Difference in means within each mask, from weighted row counts. `None` if
/// either arm is absent from a mask.
fn statistics(
    table: &ExperimentTable,
    masks: &[Vec<&[bool]>],
    treat: usize,
    control: usize,
    weights: &[u32],
) -> Option<Vec<(f64, f64, usize, usize)>> {
    let y = table.outcome();
    let arms = table.arm_indices();
    let mut out = Vec::with_capacity(masks.len());
    for hm in masks {
        let mut est = 0.0;
        let mut var = 0.0;
        let mut nt = 0;
        let mut nc = 0;
        for (k, mask) in hm.iter().enumerate() {
            let mut t = Moments::default();
            let mut c = Moments::default();
            for i in 0..y.len() {
                let w = weights[i];
                if w == 0 || !mask[i] {
                    continue;
                }
                if arms[i] == treat {
                    t.add(f64::from(w), y[i]);
                } else if arms[i] == control {
                    c.add(f64::from(w), y[i]);
                }
            }
            if t.n == 0.0 || c.n == 0.0 {
                return None;
            }
            let d = t.mean() - c.mean();
            est += if k == 0 { d } else { -d };
            var += t.var_of_mean() + c.var_of_mean();
            if k == 0 {
                nt = t.n as usize;
                nc = c.n as usize;
            }
        }
        out.push((est, var.sqrt(), nt, nc));
    }
    Some(out)
}

/// Studentized max-t stepdown over bootstrap resamples of rows (within arm,
/// or whole pairs when pair ids exist).
pub fn romano_wolf(
    table: &ExperimentTable,
    family: &HypothesisFamily,
    treat_arm: &str,
    control_arm: &str,
) -> Result<RomanoWolfReport> {
    let h = family.hypotheses.len();
    if h == 0 {
        return Err(Error::Config("hypothesis family is empty".into()));
    }
    if family.reps < MIN_BOOTSTRAP_REPS {
        return Err(Error::Config(format!(
            "bootstrap reps must be >= {MIN_BOOTSTRAP_REPS}, got {}",
            family.reps
        )));
    }
    let n = table.n_rows();
    let treat = table.arms().require(treat_arm)?;
    let control = table.arms().require(control_arm)?;
    let masks: Vec<Vec<&[bool]>> = family.hypotheses.iter().map(|h| h.masks()).collect();
    if masks.iter().flatten().any(|m| m.len() != n) {
        return Err(Error::Validation(
            "hypothesis membership length differs from the table".into(),
        ));
    }
    let ones = vec![1u32; n];
    let observed = statistics(table, &masks, treat, control, &ones)
        .ok_or_else(|| Error::Domain("a subgroup lacks treated or control rows".into()))?;
    let t_obs: Vec<f64> = observed
        .iter()
        .map(|&(e, se, _, _)| if se > 0.0 { e / se } else { 0.0 })
        .collect();

    let (design, paired) = Design::build(table, treat, control);
    let base = seed::derive(family.seed, "romano-wolf");
    let cap = 10 * family.reps;
    let draws: Vec<(Vec<f64>, usize)> = (0..family.reps as u64)
        .into_par_iter()
        .map(|r| {
            let rseed = seed::derive_index(base, r);
            let mut attempt = 0u64;
            loop {
                let mut rng = seed::rng(seed::derive_index(rseed, attempt));
                let counts = design.draw(n, &mut rng);
                if let Some(stats) = statistics(table, &masks, treat, control, &counts) {
                    let t: Vec<f64> = stats
                        .iter()
                        .zip(&observed)
                        .map(|(&(e, se, _, _), &(e0, se0, _, _))| {
                            let s = if se > 0.0 { se } else { se0 };
                            if s > 0.0 {
                                (e - e0) / s
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    return (t, attempt as usize);
                }
                attempt += 1;
                if attempt as usize > cap {
                    return (Vec::new(), attempt as usize);
                }
            }
        })
        .collect();
    let redraws: usize = draws.iter().map(|d| d.1).sum();
    if redraws > cap || draws.iter().any(|d| d.0.is_empty()) {
        return Err(Error::Computation(format!(
            "bootstrap needed {redraws} redraws, more than the cap of {cap}"
        )));
    }

    let reps = family.reps as f64;
    let abs_obs: Vec<f64> = t_obs.iter().map(|t| t.abs()).collect();
    let p_unadjusted: Vec<f64> = (0..h)
        .map(|k| {
            (1.0 + draws.iter().filter(|d| d.0[k].abs() >= abs_obs[k]).count() as f64)
                / (reps + 1.0)
        })
        .collect();
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&a, &b| abs_obs[b].total_cmp(&abs_obs[a]).then(a.cmp(&b)));
    let mut p_adjusted = vec![0.0; h];
    let mut running: f64 = 0.0;
    for (step, &k) in order.iter().enumerate() {
        let rest = &order[step..];
        let exceed = draws
            .iter()
            .filter(|d| rest.iter().map(|&j| d.0[j].abs()).fold(0.0, f64::max) >= abs_obs[k])
            .count();
        let p = (1.0 + exceed as f64) / (reps + 1.0);
        running = running.max(p);
        p_adjusted[k] = running;
    }
    let results = (0..h)
        .map(|k| {
            let (e, se, nt, nc) = observed[k];
            AdjustedResult {
                label: family.hypotheses[k].label().to_string(),
                estimate: Estimate::new(e, se, nt, nc),
                t: t_obs[k],
                p_normal: two_sided_p(t_obs[k]),
                p_unadjusted: p_unadjusted[k],
                p_adjusted: p_adjusted[k].max(p_unadjusted[k]),
                rejected: p_adjusted[k] <= family.alpha,
            }
        })
        .collect();
    Ok(RomanoWolfReport {
        treat_arm: treat_arm.to_string(),
        control_arm: control_arm.to_string(),
        reps: family.reps,
        alpha: family.alpha,
        redraws,
        paired_resampling: paired,
        results,
    })
}
