//! Outcome and propensity learners behind one interface, with K-fold
//! cross-fitting.

pub mod boost;
pub mod forest;
pub mod linear;
pub mod logit;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentTable;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub use boost::BoostedStumps;
pub use forest::{RandomForest, RegressionTree};
pub use linear::{RidgeModel, Standardizer};
pub use logit::MultinomialLogit;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    RegularizedLinear,
    RegularizedMultinomialLogit,
    RandomForestRegressor,
    GradientBoostedStumps,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::RegularizedLinear => "regularized-linear",
            LearnerKind::RegularizedMultinomialLogit => "regularized-multinomial-logit",
            LearnerKind::RandomForestRegressor => "random-forest-regressor",
            LearnerKind::GradientBoostedStumps => "gradient-boosted-stumps",
        }
    }
}

fn default_trees() -> usize {
    200
}
fn default_min_leaf() -> usize {
    5
}
fn default_rounds() -> usize {
    300
}
fn default_rate() -> f64 {
    0.1
}
fn default_subsample() -> f64 {
    1.0
}

/// Learner choice plus hyperparameters. Fields irrelevant to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// Ridge penalty per observation; `None` means `1/n` on the training rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    #[serde(default = "default_trees")]
    pub trees: usize,
    /// Forest depth limit; `None` grows until `min_leaf` stops splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_subsample")]
    pub subsample: f64,
    /// Overrides the seed handed down by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            penalty: None,
            trees: default_trees(),
            max_depth: None,
            min_leaf: default_min_leaf(),
            mtry: None,
            rounds: default_rounds(),
            learning_rate: default_rate(),
            subsample: default_subsample(),
            seed: None,
        }
    }

    pub fn linear() -> Self {
        Self::new(LearnerKind::RegularizedLinear)
    }

    pub fn logit() -> Self {
        Self::new(LearnerKind::RegularizedMultinomialLogit)
    }

    pub fn forest() -> Self {
        Self::new(LearnerKind::RandomForestRegressor)
    }

    pub fn boosted() -> Self {
        Self::new(LearnerKind::GradientBoostedStumps)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.kind.name())));
        if let Some(p) = self.penalty {
            if !(p.is_finite() && p >= 0.0) {
                return bad("penalty must be finite and >= 0");
            }
        }
        if self.trees == 0 || self.trees > 100_000 {
            return bad("trees must be in 1..=100000");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1");
        }
        if self.mtry == Some(0) {
            return bad("mtry must be >= 1");
        }
        if self.rounds > 100_000 {
            return bad("rounds must be <= 100000");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        Ok(())
    }

    fn seed_or(&self, seed: u64) -> u64 {
        self.seed.unwrap_or(seed)
    }

    fn penalty_for(&self, m: usize) -> f64 {
        self.penalty.unwrap_or(1.0 / m.max(1) as f64)
    }
}

/// A fitted regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regressor {
    Linear(RidgeModel),
    Logit(MultinomialLogit),
    Forest(RandomForest),
    Boosted(BoostedStumps),
}

impl Regressor {
    /// Fits `spec` to `y` on `rows`. The logit kind needs a 0/1 target and
    /// predicts `P(y = 1)`.
    pub fn fit(
        spec: &LearnerSpec,
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let seed = spec.seed_or(seed);
        Ok(match spec.kind {
            LearnerKind::RegularizedLinear => {
                Regressor::Linear(RidgeModel::fit(x, y, rows, spec.penalty_for(rows.len())))
            }
            LearnerKind::RegularizedMultinomialLogit => {
                if rows.iter().any(|&i| y[i] != 0.0 && y[i] != 1.0) {
                    return Err(Error::Config(
                        "regularized-multinomial-logit needs a 0/1 target when used as an outcome model".into(),
                    ));
                }
                let labels: Vec<usize> = y.iter().map(|&v| usize::from(v == 1.0)).collect();
                let both =
                    rows.iter().any(|&i| labels[i] == 0) && rows.iter().any(|&i| labels[i] == 1);
                let pseudo = if both { 0.0 } else { 0.5 };
                Regressor::Logit(MultinomialLogit::fit(
                    x,
                    &labels,
                    rows,
                    2,
                    spec.penalty_for(rows.len()),
                    pseudo,
                ))
            }
            LearnerKind::RandomForestRegressor => Regressor::Forest(RandomForest::fit(
                x,
                y,
                rows,
                spec.trees,
                spec.max_depth,
                spec.min_leaf,
                spec.mtry,
                seed,
            )),
            LearnerKind::GradientBoostedStumps => Regressor::Boosted(BoostedStumps::fit(
                x,
                y,
                rows,
                spec.rounds,
                spec.learning_rate,
                spec.subsample,
                spec.min_leaf,
                seed,
            )),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Linear(m) => m.predict(x),
            Regressor::Logit(m) => m.predict_proba(x)[1],
            Regressor::Forest(m) => m.predict(x),
            Regressor::Boosted(m) => m.predict(x),
        }
    }
}

/// A fitted class-probability model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classifier {
    Logit(MultinomialLogit),
    /// One regressor per class on the class indicator, renormalized.
    OneVsRest {
        models: Vec<Regressor>,
    },
}

impl Classifier {
    /// Fits class probabilities. Returns the model and whether smoothing
    /// pseudo-counts were needed because a class is absent from `rows`.
    pub fn fit(
        spec: &LearnerSpec,
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        rows: &[usize],
        seed: u64,
    ) -> Result<(Self, bool)> {
        let mut seen = vec![false; n_classes];
        for &i in rows {
            seen[labels[i]] = true;
        }
        let smoothed = seen.iter().any(|s| !s);
        let model = match spec.kind {
            LearnerKind::RegularizedMultinomialLogit => {
                let pseudo = if smoothed { 0.5 } else { 0.0 };
                Classifier::Logit(MultinomialLogit::fit(
                    x,
                    labels,
                    rows,
                    n_classes,
                    spec.penalty_for(rows.len()),
                    pseudo,
                ))
            }
            _ => {
                let mut models = Vec::with_capacity(n_classes);
                for k in 0..n_classes {
                    let ind: Vec<f64> = labels
                        .iter()
                        .map(|&l| f64::from(u8::from(l == k)))
                        .collect();
                    models.push(Regressor::fit(
                        spec,
                        x,
                        &ind,
                        rows,
                        seed::derive_index(seed, k as u64),
                    )?);
                }
                Classifier::OneVsRest { models }
            }
        };
        Ok((model, smoothed))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Classifier::Logit(m) => m.predict_proba(x),
            Classifier::OneVsRest { models } => {
                let mut p: Vec<f64> = models
                    .iter()
                    .map(|m| m.predict(x).clamp(0.0, 1.0))
                    .collect();
                let s: f64 = p.iter().sum();
                if s > 0.0 {
                    p.iter_mut().for_each(|v| *v /= s);
                } else {
                    let k = p.len() as f64;
                    p.iter_mut().for_each(|v| *v = 1.0 / k);
                }
                p
            }
        }
    }
}

/// Deterministic fold assignment: rows are shuffled with the seed and dealt
/// round-robin, so fold sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    pub k: usize,
    pub folds: Vec<usize>,
}

impl CrossFitPlan {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("fold count must be >= 2, got {k}")));
        }
        if n < k {
            return Err(Error::Domain(format!("{n} rows cannot fill {k} folds")));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(seed));
        let mut folds = vec![0; n];
        for (pos, &i) in perm.iter().enumerate() {
            folds[i] = pos % k;
        }
        Ok(Self { k, folds })
    }

    pub fn n_rows(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.folds[row]
    }

    /// Rows outside fold `f`, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] != f)
            .collect()
    }

    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == f)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

/// Out-of-fold predictions of a real target.
pub fn oof_regression(
    x: &Matrix,
    y: &[f64],
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<Vec<f64>> {
    check_plan(x.rows(), plan)?;
    let per_fold: Vec<Result<Vec<(usize, f64)>>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let model = Regressor::fit(
                spec,
                x,
                y,
                &plan.train_rows(f),
                seed::derive_index(seed, f as u64),
            )?;
            Ok(plan
                .test_rows(f)
                .into_iter()
                .map(|i| (i, model.predict(x.row(i))))
                .collect())
        })
        .collect();
    let mut out = vec![0.0; x.rows()];
    for fold in per_fold {
        for (i, v) in fold? {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Out-of-fold class probabilities; also returns the folds that needed
/// smoothing pseudo-counts.
pub fn oof_classification(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<(Matrix, Vec<usize>)> {
    check_plan(x.rows(), plan)?;
    let per_fold: Vec<Result<(Vec<(usize, Vec<f64>)>, bool)>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (model, smoothed) = Classifier::fit(
                spec,
                x,
                labels,
                n_classes,
                &plan.train_rows(f),
                seed::derive_index(seed, f as u64),
            )?;
            let preds = plan
                .test_rows(f)
                .into_iter()
                .map(|i| (i, model.predict_proba(x.row(i))))
                .collect();
            Ok((preds, smoothed))
        })
        .collect();
    let mut out = Matrix::zeros(x.rows(), n_classes);
    let mut smoothed_folds = Vec::new();
    for (f, fold) in per_fold.into_iter().enumerate() {
        let (preds, smoothed) = fold?;
        if smoothed {
            smoothed_folds.push(f);
        }
        for (i, p) in preds {
            out.row_mut(i).copy_from_slice(&p);
        }
    }
    Ok((out, smoothed_folds))
}

fn check_plan(n: usize, plan: &CrossFitPlan) -> Result<()> {
    if plan.n_rows() != n {
        return Err(Error::Validation(format!(
            "fold plan covers {} rows but the data has {n}",
            plan.n_rows()
        )));
    }
    Ok(())
}

/// What `fit_predict_oof` should learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Outcome,
    Arm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OofPredictions {
    Real(Vec<f64>),
    Probabilities {
        probs: Matrix,
        smoothed_folds: Vec<usize>,
    },
}

pub fn fit_predict_oof(
    table: &ExperimentTable,
    target: Target,
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<OofPredictions> {
    spec.validate()?;
    match target {
        Target::Outcome => oof_regression(table.covariates(), table.outcome(), spec, plan, seed)
            .map(OofPredictions::Real),
        Target::Arm => {
            let (probs, smoothed_folds) = oof_classification(
                table.covariates(),
                table.arm_indices(),
                table.arms().len(),
                spec,
                plan,
                seed,
            )?;
            Ok(OofPredictions::Probabilities {
                probs,
                smoothed_folds,
            })
        }
    }
}

/// Per-arm outcome predictions `mu(x_i, a)`, each produced without row `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSurface {
    pub arms: Vec<String>,
    /// n x arms.
    pub mu: Matrix,
    pub notes: Vec<String>,
}

/// Fits one outcome model per arm on that arm's rows, cross-fitted with
/// `plan`. Model seeds derive from arm labels, so reordering arms only
/// permutes columns. An arm whose training rows cannot cover every fold
/// falls back to leave-one-out fits.
pub fn oof_outcome_by_arm(
    table: &ExperimentTable,
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<OutcomeSurface> {
    spec.validate()?;
    let x = table.covariates();
    let y = table.outcome();
    let n = table.n_rows();
    check_plan(n, plan)?;
    let arms = table.arms();
    let mut mu = Matrix::zeros(n, arms.len());
    let mut notes = Vec::new();
    for a in 0..arms.len() {
        let label = arms.label(a);
        let arm_seed = seed::derive(seed, &format!("outcome:{label}"));
        let arm_rows = table.rows_in_arm(a);
        if arm_rows.is_empty() {
            return Err(Error::Domain(format!("arm {label} has no rows")));
        }
        let folds_covered = (0..plan.k).all(|f| arm_rows.iter().any(|&i| plan.fold_of(i) != f));
        if arm_rows.len() >= plan.k && folds_covered {
            let cols: Vec<Result<Vec<(usize, f64)>>> = (0..plan.k)
                .into_par_iter()
                .map(|f| {
                    let train: Vec<usize> = arm_rows
                        .iter()
                        .copied()
                        .filter(|&i| plan.fold_of(i) != f)
                        .collect();
                    let model =
                        Regressor::fit(spec, x, y, &train, seed::derive_index(arm_seed, f as u64))?;
                    Ok(plan
                        .test_rows(f)
                        .into_iter()
                        .map(|i| (i, model.predict(x.row(i))))
                        .collect())
                })
                .collect();
            for c in cols {
                for (i, v) in c? {
                    mu.set(i, a, v);
                }
            }
        } else {
            log::warn!(
                "arm {label}: {} rows for {} folds, using leave-one-out fits",
                arm_rows.len(),
                plan.k
            );
            notes.push(format!(
                "arm {label}: {} rows for {} folds; leave-one-out fits used",
                arm_rows.len(),
                plan.k
            ));
            let full = if arm_rows.len() > 1 {
                Some(Regressor::fit(spec, x, y, &arm_rows, arm_seed)?)
            } else {
                None
            };
            let loo: Vec<Result<(usize, f64)>> = arm_rows
                .par_iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let train: Vec<usize> = arm_rows.iter().copied().filter(|&r| r != i).collect();
                    if train.is_empty() {
                        return Ok((i, 0.0));
                    }
                    let m = Regressor::fit(
                        spec,
                        x,
                        y,
                        &train,
                        seed::derive_index(arm_seed, pos as u64),
                    )?;
                    Ok((i, m.predict(x.row(i))))
                })
                .collect();
            for r in loo {
                let (i, v) = r?;
                mu.set(i, a, v);
            }
            if let Some(full) = full {
                for i in 0..n {
                    if table.arm_indices()[i] != a {
                        mu.set(i, a, full.predict(x.row(i)));
                    }
                }
            }
        }
    }
    Ok(OutcomeSurface {
        arms: arms.labels().to_vec(),
        mu,
        notes,
    })
}

/// Projects `p` onto the simplex restricted to `[eps, 1]`: entries below
/// `eps` are pinned there and the rest rescaled, repeating until stable.
/// Returns the number of pinned entries.
pub fn clip_and_normalize(p: &mut [f64], eps: f64) -> usize {
    let k = p.len();
    if k == 0 {
        return 0;
    }
    for v in p.iter_mut() {
        if !v.is_finite() || *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    if s <= 0.0 {
        p.iter_mut().for_each(|v| *v = 1.0 / k as f64);
    } else {
        p.iter_mut().for_each(|v| *v /= s);
    }
    let eps = eps.min(1.0 / k as f64);
    let mut pinned = vec![false; k];
    loop {
        let mut changed = false;
        for j in 0..k {
            if !pinned[j] && p[j] < eps {
                pinned[j] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let n_pinned = pinned.iter().filter(|&&b| b).count();
        let free: f64 = (0..k).filter(|&j| !pinned[j]).map(|j| p[j]).sum();
        let budget = 1.0 - eps * n_pinned as f64;
        for j in 0..k {
            if pinned[j] {
                p[j] = eps;
            } else if free > 0.0 {
                p[j] *= budget / free;
            }
        }
    }
    pinned.iter().filter(|&&b| b).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub arm: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Rows whose probability for this arm was raised to the clip floor.
    pub clipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propensities {
    pub arms: Vec<String>,
    /// n x arms, rows sum to one.
    pub probs: Matrix,
    pub clip: f64,
    pub overlap: Vec<OverlapRow>,
    pub notes: Vec<String>,
}

impl Propensities {
    /// Wraps given probabilities, clipping and renormalizing each row.
    pub fn from_matrix(arms: Vec<String>, mut probs: Matrix, clip: f64) -> Result<Self> {
        if probs.cols() != arms.len() {
            return Err(Error::Validation(format!(
                "{} propensity columns for {} arms",
                probs.cols(),
                arms.len()
            )));
        }
        let mut clipped = vec![0usize; arms.len()];
        for i in 0..probs.rows() {
            let row = probs.row_mut(i);
            let before: Vec<f64> = row.to_vec();
            clip_and_normalize(row, clip);
            for (j, (b, a)) in before.iter().zip(row.iter()).enumerate() {
                if a > b && (*a - clip).abs() < 1e-15 {
                    clipped[j] += 1;
                }
            }
        }
        let overlap = arms
            .iter()
            .enumerate()
            .map(|(j, arm)| {
                let col: Vec<f64> = probs.column(j).collect();
                OverlapRow {
                    arm: arm.clone(),
                    min: col.iter().copied().fold(f64::INFINITY, f64::min),
                    max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: col.iter().sum::<f64>() / col.len().max(1) as f64,
                    clipped: clipped[j],
                }
            })
            .collect();
        Ok(Self {
            arms,
            probs,
            clip,
            overlap,
            notes: Vec::new(),
        })
    }

    /// Every row gets the observed arm shares.
    pub fn marginal(table: &ExperimentTable) -> Self {
        let n = table.n_rows();
        let counts = table.arm_counts();
        let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let mut probs = Matrix::zeros(n, shares.len());
        for i in 0..n {
            probs.row_mut(i).copy_from_slice(&shares);
        }
        Self::from_matrix(table.arms().labels().to_vec(), probs, 0.0).expect("shapes agree")
    }

    pub fn get(&self, row: usize, arm: usize) -> f64 {
        self.probs.get(row, arm)
    }
}

/// Cross-fitted arm probabilities, clipped at `clip` and renormalized.
pub fn fit_propensity(
    table: &ExperimentTable,
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    clip: f64,
    seed: u64,
) -> Result<Propensities> {
    spec.validate()?;
    if !(0.0..0.5).contains(&clip) {
        return Err(Error::Config(format!(
            "propensity clip must be in [0, 0.5), got {clip}"
        )));
    }
    let present = table.arm_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::Domain(
            "propensity model needs at least two arms present".into(),
        ));
    }
    let (probs, smoothed) = oof_classification(
        table.covariates(),
        table.arm_indices(),
        table.arms().len(),
        spec,
        plan,
        seed::derive(seed, "propensity"),
    )?;
    let mut out = Propensities::from_matrix(table.arms().labels().to_vec(), probs, clip)?;
    for f in smoothed {
        log::warn!(
            "propensity fold {f}: an arm is missing from the training rows; pseudo-counts added"
        );
        out.notes.push(format!(
            "fold {f}: arm missing from training rows, smoothing pseudo-counts added"
        ));
    }
    if let Some(max) = propensity_slope_max(table, spec, plan, seed) {
        if max > 20.0 {
            log::warn!("propensity model: standardized slope {max:.1} suggests separation");
            out.notes.push(format!(
                "large standardized slope {max:.1}; possible separation"
            ));
        }
    }
    Ok(out)
}

// Refit on all rows only to inspect coefficients for separation.
fn propensity_slope_max(
    table: &ExperimentTable,
    spec: &LearnerSpec,
    _plan: &CrossFitPlan,
    _seed: u64,
) -> Option<f64> {
    if spec.kind != LearnerKind::RegularizedMultinomialLogit {
        return None;
    }
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    let m = MultinomialLogit::fit(
        table.covariates(),
        table.arm_indices(),
        &rows,
        table.arms().len(),
        spec.penalty_for(rows.len()),
        0.0,
    );
    Some(m.max_abs_slope)
}
