//! Out-of-fold per-unit effect predictions for every program arm.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentTable;
use crate::dr::{aipw_scores, DrScores};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nuisance::{oof_outcome_by_arm, oof_regression, CrossFitPlan, LearnerSpec};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CateMethod {
    TLearner,
    #[default]
    DrLearner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatePredictions {
    pub arms: Vec<String>,
    pub control: usize,
    /// Program arm indices, one per column of `tau`.
    pub programs: Vec<usize>,
    /// n x programs.
    pub tau: Matrix,
    pub method: CateMethod,
    pub spec: LearnerSpec,
    pub folds: usize,
    pub notes: Vec<String>,
}

impl CatePredictions {
    pub fn n_rows(&self) -> usize {
        self.tau.rows()
    }

    pub fn program_labels(&self) -> Vec<String> {
        self.programs
            .iter()
            .map(|&p| self.arms[p].clone())
            .collect()
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let c = self.programs.iter().position(|&p| self.arms[p] == label)?;
        Some(self.tau.column(c).collect())
    }

    pub fn mean(&self, label: &str) -> Option<f64> {
        let col = self.column(label)?;
        Some(col.iter().sum::<f64>() / col.len() as f64)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_bytes()?).map_err(|e| Error::io(path, e))
    }

    /// CSV with a `row` column and one `tau:<arm>` column per program.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        header.extend(self.program_labels().iter().map(|l| format!("tau:{l}")));
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.tau.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::Computation(e.to_string()))
    }

    /// Reads a file written by [`CatePredictions::write_csv`]. Column labels
    /// must name the program arms of `arms` in order.
    pub fn read_csv(path: impl AsRef<Path>, arms: &[String], control: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let control_idx = arms
            .iter()
            .position(|a| a == control)
            .ok_or_else(|| Error::Schema(format!("control arm {control} not in arm set")))?;
        let programs: Vec<usize> = (0..arms.len()).filter(|&a| a != control_idx).collect();
        let expected: Vec<String> = std::iter::once("row".to_string())
            .chain(programs.iter().map(|&p| format!("tau:{}", arms[p])))
            .collect();
        if header.iter().collect::<Vec<_>>()
            != expected.iter().map(String::as_str).collect::<Vec<_>>()
        {
            return Err(Error::Schema(format!(
                "effect file header must be {}",
                expected.join(",")
            )));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k as u64 + 2;
            let idx: usize = rec[0].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad row id {:?}", &rec[0]),
            })?;
            if idx != rows {
                return Err(Error::Parse {
                    line,
                    message: format!("expected row id {rows}, found {idx}"),
                });
            }
            for cell in rec.iter().skip(1) {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad effect value {cell:?}"),
                })?;
                data.push(v);
            }
            rows += 1;
        }
        Ok(Self {
            arms: arms.to_vec(),
            control: control_idx,
            tau: Matrix::from_vec(rows, programs.len(), data),
            programs,
            method: CateMethod::DrLearner,
            spec: LearnerSpec::linear(),
            folds: 0,
            notes: vec![format!("loaded from {}", path.display())],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub kind: String,
    pub mse: f64,
    /// Standard error of the per-row squared-error difference to the best
    /// candidate; zero for the best itself.
    pub se_vs_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub chosen: usize,
    pub spec: LearnerSpec,
    pub candidates: Vec<CandidateScore>,
}

/// Picks the outcome learner with the smallest out-of-fold squared error of
/// the per-arm predictions at each row's observed arm. Any earlier-listed
/// candidate within one standard error of the best wins the tie.
pub fn select_outcome_model(
    table: &ExperimentTable,
    candidates: &[LearnerSpec],
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<ModelSelection> {
    if candidates.is_empty() {
        return Err(Error::Config("no outcome learner candidates".into()));
    }
    let y = table.outcome();
    let w = table.arm_indices();
    let n = table.n_rows();
    let mut errors = Vec::with_capacity(candidates.len());
    for spec in candidates {
        let surface = oof_outcome_by_arm(table, spec, plan, seed::derive(seed, "outcome"))?;
        let e: Vec<f64> = (0..n)
            .map(|i| (y[i] - surface.mu.get(i, w[i])).powi(2))
            .collect();
        errors.push(e);
    }
    let mse: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().sum::<f64>() / n as f64)
        .collect();
    let best = (0..mse.len()).fold(0, |b, k| if mse[k] < mse[b] { k } else { b });
    let se_vs_best: Vec<f64> = errors
        .iter()
        .map(|e| {
            let d: Vec<f64> = e.iter().zip(&errors[best]).map(|(a, b)| a - b).collect();
            (crate::stats::sample_variance(&d) / n as f64).sqrt()
        })
        .collect();
    let chosen = (0..mse.len())
        .find(|&k| mse[k] - mse[best] <= se_vs_best[k])
        .unwrap_or(best);
    Ok(ModelSelection {
        chosen,
        spec: candidates[chosen].clone(),
        candidates: candidates
            .iter()
            .zip(mse.iter().zip(&se_vs_best))
            .map(|(s, (&m, &se))| CandidateScore {
                kind: s.kind.name().to_string(),
                mse: m,
                se_vs_best: se,
            })
            .collect(),
    })
}

/// `tau_p(x) = mu_p(x) - mu_0(x)` from per-arm cross-fitted outcome models.
pub fn t_learner(
    table: &ExperimentTable,
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<CatePredictions> {
    let surface = oof_outcome_by_arm(table, spec, plan, seed::derive(seed, "outcome"))?;
    let arms = table.arms();
    let control = arms.control_index();
    let programs: Vec<usize> = arms.programs().collect();
    let n = table.n_rows();
    let mut tau = Matrix::zeros(n, programs.len());
    for i in 0..n {
        for (c, &p) in programs.iter().enumerate() {
            tau.set(i, c, surface.mu.get(i, p) - surface.mu.get(i, control));
        }
    }
    Ok(CatePredictions {
        arms: arms.labels().to_vec(),
        control,
        programs,
        tau,
        method: CateMethod::TLearner,
        spec: spec.clone(),
        folds: plan.k,
        notes: surface.notes,
    })
}

/// Regresses each program's AIPW contrast on the covariates, out of fold.
pub fn dr_learner(
    table: &ExperimentTable,
    scores: &DrScores,
    spec: &LearnerSpec,
    plan: &CrossFitPlan,
    seed: u64,
) -> Result<CatePredictions> {
    if scores.n_rows() != table.n_rows() {
        return Err(Error::Validation("scores do not match the table".into()));
    }
    let n = table.n_rows();
    let mut tau = Matrix::zeros(n, scores.programs.len());
    for (c, &p) in scores.programs.iter().enumerate() {
        let target: Vec<f64> = scores.gamma.column(c).collect();
        let label = &scores.arms[p];
        let pred = oof_regression(
            table.covariates(),
            &target,
            spec,
            plan,
            seed::derive(seed, &format!("cate:{label}")),
        )?;
        for (i, v) in pred.into_iter().enumerate() {
            tau.set(i, c, v);
        }
    }
    Ok(CatePredictions {
        arms: scores.arms.clone(),
        control: scores.control,
        programs: scores.programs.clone(),
        tau,
        method: CateMethod::DrLearner,
        spec: spec.clone(),
        folds: plan.k,
        notes: scores.notes.clone(),
    })
}

/// Fits effects with `method`; the dr-learner also fits AIPW scores using
/// `spec` for outcomes and `propensity_spec` for arm probabilities.
pub fn fit_cate(
    table: &ExperimentTable,
    method: CateMethod,
    spec: &LearnerSpec,
    propensity_spec: &LearnerSpec,
    plan: &CrossFitPlan,
    clip: f64,
    seed: u64,
) -> Result<CatePredictions> {
    if let Some(a) = table.arm_counts().iter().position(|&c| c == 0) {
        return Err(Error::Domain(format!(
            "arm {} has no rows",
            table.arms().label(a)
        )));
    }
    match method {
        CateMethod::TLearner => t_learner(table, spec, plan, seed),
        CateMethod::DrLearner => {
            let scores = aipw_scores(table, spec, propensity_spec, plan, clip, seed)?;
            dr_learner(table, &scores, spec, plan, seed)
        }
    }
}
