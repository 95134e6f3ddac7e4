//! Seeded synthetic experiments with known potential-outcome means.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cate::{CateMethod, CatePredictions};
use crate::dataset::{ArmSet, ColumnKind, ExperimentTable, TableParts};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nuisance::LearnerSpec;
use crate::policy::{solve_assignment, AssignmentPlan, Capacities};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovariateDist {
    Bernoulli {
        p: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// One-hot encoded as `name=level` columns in level order.
    Categorical {
        levels: Vec<String>,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub dist: CovariateDist,
}

/// `coef * prod(factors)`; a factor `!col` contributes `1 - col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: f64,
    pub factors: Vec<String>,
}

impl Term {
    pub fn new(coef: f64, factors: &[&str]) -> Self {
        Self {
            coef,
            factors: factors.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPredictor {
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<Term>,
}

impl LinearPredictor {
    pub fn constant(intercept: f64) -> Self {
        Self {
            intercept,
            terms: Vec::new(),
        }
    }

    pub fn with(mut self, coef: f64, factors: &[&str]) -> Self {
        self.terms.push(Term::new(coef, factors));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `y ~ Bernoulli(mu)`; requires a binary outcome.
    Bernoulli,
    Gaussian {
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AssignmentSpec {
    /// Exact counts from shares (largest remainder), randomly permuted.
    CompletelyRandomized {
        shares: BTreeMap<String, f64>,
    },
    FixedCounts {
        counts: BTreeMap<String, usize>,
    },
    /// One treated and one control row per pair plus unpaired extra treated
    /// rows. Pair members share a Gaussian shift of their means.
    Paired {
        treat: String,
        n_pairs: usize,
        #[serde(default)]
        extra_treated: usize,
        #[serde(default)]
        pair_shift_sd: f64,
    },
    /// Rows are selected with a logistic probability; selected rows are
    /// randomized by `shares`, the rest get `unselected_arm`.
    Selection {
        logit: LinearPredictor,
        shares: BTreeMap<String, f64>,
        unselected_arm: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub arms: Vec<String>,
    pub control: String,
    pub binary_outcome: bool,
    pub covariates: Vec<CovariateSpec>,
    /// Mean outcome per arm label.
    pub outcomes: BTreeMap<String, LinearPredictor>,
    pub noise: NoiseModel,
    pub assignment: AssignmentSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Ground truth for a generated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub arms: Vec<String>,
    pub control: usize,
    /// n x arms: mean outcome of each row under each arm.
    pub mu: Matrix,
    /// n x arms: assignment probabilities.
    pub propensity: Matrix,
    /// Rows whose mean had to be clamped into [0, 1].
    pub clamped: usize,
}

impl GroundTruth {
    pub fn n_rows(&self) -> usize {
        self.mu.rows()
    }

    pub fn programs(&self) -> Vec<usize> {
        (0..self.arms.len())
            .filter(|&a| a != self.control)
            .collect()
    }

    /// True effect of `arm` versus control for each row.
    pub fn tau(&self, arm: usize) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| self.mu.get(i, arm) - self.mu.get(i, self.control))
            .collect()
    }

    /// Sample average effect of `arm`.
    pub fn ate(&self, arm: usize) -> f64 {
        self.tau(arm).iter().sum::<f64>() / self.n_rows() as f64
    }

    /// Mean true outcome under the given per-row arms.
    pub fn policy_value(&self, actions: &[usize]) -> f64 {
        actions
            .iter()
            .enumerate()
            .map(|(i, &a)| self.mu.get(i, a))
            .sum::<f64>()
            / actions.len() as f64
    }

    /// True effects packaged for the assignment solver.
    pub fn cates(&self) -> CatePredictions {
        let programs = self.programs();
        let n = self.n_rows();
        let mut tau = Matrix::zeros(n, programs.len());
        for (c, &p) in programs.iter().enumerate() {
            for (i, t) in self.tau(p).into_iter().enumerate() {
                tau.set(i, c, t);
            }
        }
        CatePredictions {
            arms: self.arms.clone(),
            control: self.control,
            programs,
            tau,
            method: CateMethod::TLearner,
            spec: LearnerSpec::linear(),
            folds: 0,
            notes: vec!["true effects".into()],
        }
    }

    /// Per-row true means (`mu:<arm>`) and assignment probabilities (`p:<arm>`).
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        header.extend(self.arms.iter().map(|a| format!("mu:{a}")));
        header.extend(self.arms.iter().map(|a| format!("p:{a}")));
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.mu.row(i).iter().map(|v| format!("{v}")));
            rec.extend(self.propensity.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::Computation(e.to_string()))
    }

    pub fn oracle_plan(&self, caps: &Capacities) -> Result<AssignmentPlan> {
        solve_assignment(&self.cates(), caps)
    }

    /// Expected true value of a capacity-filling random assignment.
    pub fn random_value(&self, caps: &[usize]) -> f64 {
        let n = self.n_rows() as f64;
        let base = (0..self.n_rows())
            .map(|i| self.mu.get(i, self.control))
            .sum::<f64>()
            / n;
        base + self
            .programs()
            .iter()
            .zip(caps)
            .map(|(&p, &c)| c as f64 / n * self.ate(p))
            .sum::<f64>()
    }
}

struct Columns {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
}

fn columns(spec: &DgpSpec) -> Columns {
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    for c in &spec.covariates {
        match &c.dist {
            CovariateDist::Bernoulli { .. } => {
                names.push(c.name.clone());
                kinds.push(ColumnKind::Binary);
            }
            CovariateDist::Normal { .. } | CovariateDist::Uniform { .. } => {
                names.push(c.name.clone());
                kinds.push(ColumnKind::Numeric);
            }
            CovariateDist::Categorical { levels, .. } => {
                for l in levels {
                    names.push(format!("{}={l}", c.name));
                    kinds.push(ColumnKind::Categorical {
                        source: c.name.clone(),
                        level: l.clone(),
                    });
                }
            }
        }
    }
    Columns { names, kinds }
}

fn check_shares(shares: &BTreeMap<String, f64>, arms: &[String]) -> Result<()> {
    for (k, &v) in shares {
        if !arms.contains(k) {
            return Err(Error::Config(format!("share for unknown arm {k}")));
        }
        if !(v > 0.0 && v < 1.0) && !(v == 1.0 && shares.len() == 1) {
            return Err(Error::Config(format!(
                "share for {k} must be in (0, 1), got {v}"
            )));
        }
    }
    let s: f64 = shares.values().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("arm shares sum to {s}, not 1")));
    }
    Ok(())
}

impl DgpSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let arms = ArmSet::new(self.arms.iter().cloned(), &self.control)?;
        let cols = columns(self);
        let mut seen = std::collections::BTreeSet::new();
        for n in &cols.names {
            if !seen.insert(n) {
                return Err(Error::Config(format!("duplicate covariate column {n}")));
            }
        }
        for c in &self.covariates {
            match &c.dist {
                CovariateDist::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                    return Err(Error::Config(format!("{}: p must be in [0, 1]", c.name)))
                }
                CovariateDist::Normal { sd, .. } if !(*sd >= 0.0) => {
                    return Err(Error::Config(format!("{}: sd must be >= 0", c.name)))
                }
                CovariateDist::Uniform { low, high } if !(low <= high) => {
                    return Err(Error::Config(format!(
                        "{}: low must not exceed high",
                        c.name
                    )))
                }
                CovariateDist::Categorical { levels, probs } => {
                    if levels.is_empty() || levels.len() != probs.len() {
                        return Err(Error::Config(format!(
                            "{}: levels and probs must match",
                            c.name
                        )));
                    }
                    if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                        || probs.iter().any(|p| *p < 0.0)
                    {
                        return Err(Error::Config(format!(
                            "{}: probs must be a distribution",
                            c.name
                        )));
                    }
                }
                _ => {}
            }
        }
        for label in &self.arms {
            if !self.outcomes.contains_key(label) {
                return Err(Error::Config(format!("no outcome model for arm {label}")));
            }
        }
        for (label, lp) in &self.outcomes {
            if arms.index_of(label).is_none() {
                return Err(Error::Config(format!(
                    "outcome model for unknown arm {label}"
                )));
            }
            check_terms(lp, &cols.names)?;
        }
        match (&self.noise, self.binary_outcome) {
            (NoiseModel::Bernoulli, false) => {
                return Err(Error::Config(
                    "bernoulli noise needs binary_outcome = true".into(),
                ))
            }
            (NoiseModel::Gaussian { .. }, true) => {
                return Err(Error::Config(
                    "gaussian noise needs binary_outcome = false".into(),
                ))
            }
            (NoiseModel::Gaussian { sd }, _) if !(*sd >= 0.0) => {
                return Err(Error::Config("noise sd must be >= 0".into()))
            }
            _ => {}
        }
        match &self.assignment {
            AssignmentSpec::CompletelyRandomized { shares } => check_shares(shares, &self.arms)?,
            AssignmentSpec::FixedCounts { counts } => {
                for k in counts.keys() {
                    arms.require(k)
                        .map_err(|_| Error::Config(format!("count for unknown arm {k}")))?;
                }
                let total: usize = counts.values().sum();
                if total != self.n {
                    return Err(Error::Config(format!(
                        "arm counts sum to {total}, n is {}",
                        self.n
                    )));
                }
            }
            AssignmentSpec::Paired {
                treat,
                n_pairs,
                extra_treated,
                pair_shift_sd,
            } => {
                if arms.index_of(treat).is_none() || treat == &self.control {
                    return Err(Error::Config(format!(
                        "paired treat arm {treat} must be a program"
                    )));
                }
                if 2 * n_pairs + extra_treated != self.n {
                    return Err(Error::Config(format!(
                        "paired design has {} rows, n is {}",
                        2 * n_pairs + extra_treated,
                        self.n
                    )));
                }
                if !(*pair_shift_sd >= 0.0) {
                    return Err(Error::Config("pair_shift_sd must be >= 0".into()));
                }
            }
            AssignmentSpec::Selection {
                logit,
                shares,
                unselected_arm,
            } => {
                check_terms(logit, &cols.names)?;
                check_shares(shares, &self.arms)?;
                if arms.index_of(unselected_arm).is_none() {
                    return Err(Error::Config(format!(
                        "unknown unselected arm {unselected_arm}"
                    )));
                }
            }
        }
        if self.n < 2 {
            return Err(Error::Config("n must be >= 2".into()));
        }
        Ok(())
    }
}

fn check_terms(lp: &LinearPredictor, names: &[String]) -> Result<()> {
    for t in &lp.terms {
        for f in &t.factors {
            let col = f.strip_prefix('!').unwrap_or(f);
            if !names.iter().any(|n| n == col) {
                return Err(Error::Config(format!(
                    "term references unknown covariate {col}"
                )));
            }
        }
    }
    Ok(())
}

struct Resolved {
    intercept: f64,
    terms: Vec<(f64, Vec<(usize, bool)>)>,
}

impl Resolved {
    fn new(lp: &LinearPredictor, names: &[String]) -> Self {
        let terms = lp
            .terms
            .iter()
            .map(|t| {
                let fs = t
                    .factors
                    .iter()
                    .map(|f| {
                        let (neg, col) = match f.strip_prefix('!') {
                            Some(c) => (true, c),
                            None => (false, f.as_str()),
                        };
                        (names.iter().position(|n| n == col).expect("validated"), neg)
                    })
                    .collect();
                (t.coef, fs)
            })
            .collect();
        Self {
            intercept: lp.intercept,
            terms,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|(c, fs)| {
                    c * fs
                        .iter()
                        .map(|&(j, neg)| if neg { 1.0 - x[j] } else { x[j] })
                        .product::<f64>()
                })
                .sum::<f64>()
    }
}

/// Exact per-arm counts from shares by largest remainder; ties go to the
/// earlier arm in `order`.
fn apportion(n: usize, shares: &[(usize, f64)]) -> Vec<(usize, usize)> {
    let raw: Vec<f64> = shares.iter().map(|(_, s)| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    for &k in &order {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    shares.iter().map(|(a, _)| *a).zip(counts).collect()
}

fn permuted_arms(n: usize, counts: &[(usize, usize)], rng: &mut seed::StageRng) -> Vec<usize> {
    let mut arm: Vec<usize> = counts
        .iter()
        .flat_map(|&(a, c)| std::iter::repeat_n(a, c))
        .collect();
    debug_assert_eq!(arm.len(), n);
    arm.shuffle(rng);
    arm
}

/// Generates a table and its ground truth. The spec's seed is used.
pub fn generate(spec: &DgpSpec) -> Result<(ExperimentTable, GroundTruth)> {
    spec.validate()?;
    let arms = ArmSet::new(spec.arms.iter().cloned(), &spec.control)?;
    let k = arms.len();
    let n = spec.n;
    let cols = columns(spec);
    let d = cols.names.len();

    let mut rng = seed::stage_rng(spec.seed, "covariates");
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let mut j = 0;
        for c in &spec.covariates {
            match &c.dist {
                CovariateDist::Bernoulli { p } => {
                    x.set(i, j, f64::from(u8::from(rng.random::<f64>() < *p)));
                    j += 1;
                }
                CovariateDist::Normal { mean, sd } => {
                    let v = if *sd > 0.0 {
                        Normal::new(*mean, *sd).expect("validated").sample(&mut rng)
                    } else {
                        *mean
                    };
                    x.set(i, j, v);
                    j += 1;
                }
                CovariateDist::Uniform { low, high } => {
                    x.set(i, j, low + (high - low) * rng.random::<f64>());
                    j += 1;
                }
                CovariateDist::Categorical { levels, probs } => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = levels.len() - 1;
                    for (l, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = l;
                            break;
                        }
                    }
                    for l in 0..levels.len() {
                        x.set(i, j + l, f64::from(u8::from(l == pick)));
                    }
                    j += levels.len();
                }
            }
        }
    }

    let models: Vec<Resolved> = spec
        .arms
        .iter()
        .map(|a| Resolved::new(&spec.outcomes[a], &cols.names))
        .collect();
    let mut mu = Matrix::zeros(n, k);
    for i in 0..n {
        for a in 0..k {
            mu.set(i, a, models[a].eval(x.row(i)));
        }
    }

    let mut arng = seed::stage_rng(spec.seed, "assignment");
    let mut propensity = Matrix::zeros(n, k);
    let mut pair_id = None;
    let mut selected = None;
    let arm: Vec<usize> = match &spec.assignment {
        AssignmentSpec::CompletelyRandomized { shares } => {
            let s: Vec<(usize, f64)> = spec
                .arms
                .iter()
                .enumerate()
                .map(|(a, l)| (a, shares.get(l).copied().unwrap_or(0.0)))
                .collect();
            for i in 0..n {
                for &(a, p) in &s {
                    propensity.set(i, a, p);
                }
            }
            permuted_arms(n, &apportion(n, &s), &mut arng)
        }
        AssignmentSpec::FixedCounts { counts } => {
            let c: Vec<(usize, usize)> = spec
                .arms
                .iter()
                .enumerate()
                .map(|(a, l)| (a, counts.get(l).copied().unwrap_or(0)))
                .collect();
            for i in 0..n {
                for &(a, m) in &c {
                    propensity.set(i, a, m as f64 / n as f64);
                }
            }
            permuted_arms(n, &c, &mut arng)
        }
        AssignmentSpec::Paired {
            treat,
            n_pairs,
            extra_treated,
            pair_shift_sd,
        } => {
            let t = arms.require(treat)?;
            let c = arms.control_index();
            let mut arm = vec![c; n];
            let mut ids = vec![0i64; n];
            let shift = Normal::new(0.0, pair_shift_sd.max(0.0)).expect("validated");
            for p in 0..*n_pairs {
                let (a, b) = (2 * p, 2 * p + 1);
                if arng.random::<bool>() {
                    arm[a] = t;
                } else {
                    arm[b] = t;
                }
                ids[a] = p as i64;
                ids[b] = p as i64;
                let s = if *pair_shift_sd > 0.0 {
                    shift.sample(&mut arng)
                } else {
                    0.0
                };
                for r in [a, b] {
                    for k2 in 0..k {
                        mu.set(r, k2, mu.get(r, k2) + s);
                    }
                    propensity.set(r, t, 0.5);
                    propensity.set(r, c, 0.5);
                }
            }
            for e in 0..*extra_treated {
                let r = 2 * n_pairs + e;
                arm[r] = t;
                ids[r] = (n_pairs + e) as i64;
                let s = if *pair_shift_sd > 0.0 {
                    shift.sample(&mut arng)
                } else {
                    0.0
                };
                for k2 in 0..k {
                    mu.set(r, k2, mu.get(r, k2) + s);
                }
                propensity.set(r, t, 1.0);
            }
            pair_id = Some(ids);
            arm
        }
        AssignmentSpec::Selection {
            logit,
            shares,
            unselected_arm,
        } => {
            let lp = Resolved::new(logit, &cols.names);
            let un = arms.require(unselected_arm)?;
            let s: Vec<(usize, f64)> = spec
                .arms
                .iter()
                .enumerate()
                .filter_map(|(a, l)| shares.get(l).map(|&p| (a, p)))
                .collect();
            let mut sel = vec![false; n];
            let mut arm = vec![un; n];
            for i in 0..n {
                let pi = 1.0 / (1.0 + (-lp.eval(x.row(i))).exp());
                sel[i] = arng.random::<f64>() < pi;
                for &(a, p) in &s {
                    propensity.set(i, a, propensity.get(i, a) + pi * p);
                }
                propensity.set(i, un, propensity.get(i, un) + 1.0 - pi);
                if sel[i] {
                    let u: f64 = arng.random();
                    let mut acc = 0.0;
                    arm[i] = s.last().expect("shares non-empty").0;
                    for &(a, p) in &s {
                        acc += p;
                        if u < acc {
                            arm[i] = a;
                            break;
                        }
                    }
                }
            }
            selected = Some(sel);
            arm
        }
    };

    let mut clamped = 0;
    if spec.binary_outcome {
        for i in 0..n {
            let mut hit = false;
            for a in 0..k {
                let v = mu.get(i, a);
                if !(0.0..=1.0).contains(&v) {
                    mu.set(i, a, v.clamp(0.0, 1.0));
                    hit = true;
                }
            }
            clamped += usize::from(hit);
        }
    }

    let mut orng = seed::stage_rng(spec.seed, "outcomes");
    let outcome: Vec<f64> = (0..n)
        .map(|i| {
            let m = mu.get(i, arm[i]);
            match spec.noise {
                NoiseModel::Bernoulli => f64::from(u8::from(orng.random::<f64>() < m)),
                NoiseModel::Gaussian { sd } => {
                    if sd > 0.0 {
                        m + Normal::new(0.0, sd).expect("validated").sample(&mut orng)
                    } else {
                        m
                    }
                }
            }
        })
        .collect();

    let mut parts = TableParts::new(x, cols.names, arms.clone(), arm, outcome);
    parts.kinds = cols.kinds;
    parts.binary_outcome = spec.binary_outcome;
    parts.pair_id = pair_id;
    parts.selected = selected;
    let table = ExperimentTable::new(parts)?;
    Ok((
        table,
        GroundTruth {
            arms: spec.arms.clone(),
            control: arms.control_index(),
            mu,
            propensity,
            clamped,
        },
    ))
}

pub const PRESETS: [&str; 4] = [
    "mentoring-like",
    "challenges-like",
    "pooled-like",
    "heterogeneous-policy",
];

fn bern(name: &str, p: f64) -> CovariateSpec {
    CovariateSpec {
        name: name.into(),
        dist: CovariateDist::Bernoulli { p },
    }
}

fn shares(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn outcomes(items: Vec<(&str, LinearPredictor)>) -> BTreeMap<String, LinearPredictor> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Named calibrated designs.
///
/// * `mentoring-like`: 147 randomized pairs plus 5 unpaired treated rows
///   (152 treated, 147 control); control mean 0.293, average effect 0.129
///   (0.099 plus 0.1 for small-city applicants, 30% of the pool).
/// * `challenges-like`: 183 treated and 225 control; control mean 0.196,
///   effect 0.144 minus 0.1 for graduate-degree holders (55%), average 0.089.
/// * `pooled-like`: three arms (152 mentoring, 183 challenges, 372 control)
///   with independent graduate degree (62%), U/X track (42.1%) and Warsaw
///   (31.8%) indicators, so the four priority groups of the admission rule
///   hold about 15%, 7%, 16% and 62% of applicants. Group 1 gains 0.35 from
///   either program, everyone else 0.05.
/// * `heterogeneous-policy`: 10000 rows, shares 0.4 control / 0.2 mentoring /
///   0.4 challenges; mentoring helps small-city applicants and mothers,
///   challenges helps applicants without a graduate degree and STEM
///   graduates. `experience_years` is pure noise.
///
/// Covariates are mutually independent in every preset.
pub fn preset(name: &str) -> Result<DgpSpec> {
    let spec = match name {
        "mentoring-like" => DgpSpec {
            n: 299,
            arms: vec!["control".into(), "mentoring".into()],
            control: "control".into(),
            binary_outcome: true,
            covariates: vec![
                bern("small_city", 0.3),
                bern("stem", 0.6),
                bern("grad", 0.66),
                bern("mother", 0.2),
            ],
            outcomes: outcomes(vec![
                (
                    "control",
                    LinearPredictor::constant(0.233).with(0.1, &["stem"]),
                ),
                (
                    "mentoring",
                    LinearPredictor::constant(0.332)
                        .with(0.1, &["stem"])
                        .with(0.1, &["small_city"]),
                ),
            ]),
            noise: NoiseModel::Bernoulli,
            assignment: AssignmentSpec::Paired {
                treat: "mentoring".into(),
                n_pairs: 147,
                extra_treated: 5,
                pair_shift_sd: 0.05,
            },
            seed: 0,
        },
        "challenges-like" => DgpSpec {
            n: 408,
            arms: vec!["control".into(), "challenges".into()],
            control: "control".into(),
            binary_outcome: true,
            covariates: vec![
                bern("stem", 0.4),
                bern("lot_of_time", 0.5),
                bern("grad", 0.55),
            ],
            outcomes: outcomes(vec![
                (
                    "control",
                    LinearPredictor::constant(0.153)
                        .with(0.1, &["stem"])
                        .with(0.05, &["lot_of_time"])
                        .with(-0.04, &["grad"]),
                ),
                (
                    "challenges",
                    LinearPredictor::constant(0.297)
                        .with(0.1, &["stem"])
                        .with(0.05, &["lot_of_time"])
                        .with(-0.14, &["grad"]),
                ),
            ]),
            noise: NoiseModel::Bernoulli,
            assignment: AssignmentSpec::FixedCounts {
                counts: [
                    ("challenges".to_string(), 183),
                    ("control".to_string(), 225),
                ]
                .into_iter()
                .collect(),
            },
            seed: 0,
        },
        "pooled-like" => {
            let group1 = ["!grad", "!warsaw", "!ux"];
            DgpSpec {
                n: 707,
                arms: vec!["control".into(), "mentoring".into(), "challenges".into()],
                control: "control".into(),
                binary_outcome: true,
                covariates: vec![
                    bern("grad", 0.62),
                    bern("ux", 0.421),
                    bern("warsaw", 0.318),
                    bern("stem", 0.4),
                ],
                outcomes: outcomes(vec![
                    (
                        "control",
                        LinearPredictor::constant(0.16).with(0.05, &["stem"]),
                    ),
                    (
                        "mentoring",
                        LinearPredictor::constant(0.21)
                            .with(0.05, &["stem"])
                            .with(0.30, &group1),
                    ),
                    (
                        "challenges",
                        LinearPredictor::constant(0.21)
                            .with(0.05, &["stem"])
                            .with(0.30, &group1),
                    ),
                ]),
                noise: NoiseModel::Bernoulli,
                assignment: AssignmentSpec::FixedCounts {
                    counts: [
                        ("mentoring".to_string(), 152),
                        ("challenges".to_string(), 183),
                        ("control".to_string(), 372),
                    ]
                    .into_iter()
                    .collect(),
                },
                seed: 0,
            }
        }
        "heterogeneous-policy" => DgpSpec {
            n: 10000,
            arms: vec!["control".into(), "mentoring".into(), "challenges".into()],
            control: "control".into(),
            binary_outcome: true,
            covariates: vec![
                bern("small_city", 0.3),
                bern("mother", 0.2),
                bern("grad", 0.6),
                bern("stem", 0.4),
                CovariateSpec {
                    name: "experience_years".into(),
                    dist: CovariateDist::Uniform {
                        low: 0.0,
                        high: 10.0,
                    },
                },
            ],
            outcomes: outcomes(vec![
                (
                    "control",
                    LinearPredictor::constant(0.15)
                        .with(0.1, &["stem"])
                        .with(0.05, &["grad"]),
                ),
                (
                    "mentoring",
                    LinearPredictor::constant(0.20)
                        .with(0.1, &["stem"])
                        .with(0.05, &["grad"])
                        .with(0.30, &["small_city"])
                        .with(0.10, &["mother"]),
                ),
                (
                    "challenges",
                    LinearPredictor::constant(0.17)
                        .with(0.16, &["stem"])
                        .with(0.05, &["grad"])
                        .with(0.12, &["!grad"]),
                ),
            ]),
            noise: NoiseModel::Bernoulli,
            assignment: AssignmentSpec::CompletelyRandomized {
                shares: shares(&[("control", 0.4), ("mentoring", 0.2), ("challenges", 0.4)]),
            },
            seed: 0,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other}; known presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// `preset(name)` with `seed` set.
pub fn preset_with_seed(name: &str, seed: u64) -> Result<DgpSpec> {
    let mut s = preset(name)?;
    s.seed = seed;
    Ok(s)
}
