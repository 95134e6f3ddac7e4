//! End-to-end targeting: outcome-model choice, effect estimation, capacity
//! constrained assignment and counterfactual policy values.

use serde::{Deserialize, Serialize};

use crate::cate::{dr_learner, t_learner, CateMethod, CatePredictions, ModelSelection};
use crate::counterfactual::{
    compare_policies, covariate_profile, group_value_matrix, AssignmentMode, GroupProfile,
    GroupValueMatrix, PolicyComparison, PolicySpec, ValueEstimator, DEFAULT_RANDOM_REPS,
};
use crate::dataset::ExperimentTable;
use crate::dr::{aipw_ate, aipw_scores_with_propensities, DrScores};
use crate::error::{Error, Result};
use crate::nuisance::{
    fit_propensity, CrossFitPlan, LearnerSpec, OverlapRow, Propensities, DEFAULT_CLIP,
    DEFAULT_FOLDS,
};
use crate::policy::{solve_assignment, AssignmentPlan, Capacities};
use crate::seed;
use crate::stats::Estimate;

fn default_candidates() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::linear(),
        LearnerSpec::forest(),
        LearnerSpec::boosted(),
    ]
}

fn default_propensity() -> LearnerSpec {
    LearnerSpec::logit()
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

fn default_reps() -> usize {
    DEFAULT_RANDOM_REPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Outcome learners compared by out-of-fold error; the chosen one also
    /// fits the effect model.
    #[serde(default = "default_candidates")]
    pub outcome_candidates: Vec<LearnerSpec>,
    #[serde(default = "default_propensity")]
    pub propensity: LearnerSpec,
    #[serde(default)]
    pub cate_method: CateMethod,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_clip")]
    pub clip: f64,
    /// Capacities for the targeted policy and its random counterpart.
    pub capacities: Capacities,
    /// Randomly filled baseline capacities, if any.
    #[serde(default)]
    pub status_quo: Option<Capacities>,
    #[serde(default = "default_reps")]
    pub random_reps: usize,
    #[serde(default)]
    pub estimator: ValueEstimator,
}

impl PipelineConfig {
    pub fn new(capacities: Capacities) -> Self {
        Self {
            outcome_candidates: default_candidates(),
            propensity: default_propensity(),
            cate_method: CateMethod::default(),
            folds: DEFAULT_FOLDS,
            clip: DEFAULT_CLIP,
            capacities,
            status_quo: None,
            random_reps: DEFAULT_RANDOM_REPS,
            estimator: ValueEstimator::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome_candidates.is_empty() {
            return Err(Error::Config("outcome_candidates must not be empty".into()));
        }
        for s in &self.outcome_candidates {
            s.validate()?;
        }
        self.propensity.validate()?;
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return Err(Error::Config("clip must be in [0, 0.5)".into()));
        }
        if self.random_reps == 0 {
            return Err(Error::Config("random_reps must be >= 1".into()));
        }
        Ok(())
    }

    /// Policies compared: targeted, random with the same capacities, and the
    /// status quo when configured.
    pub fn policies(&self) -> Vec<PolicySpec> {
        let mut out = vec![
            PolicySpec {
                name: "optimal".into(),
                capacities: self.capacities.clone(),
                mode: AssignmentMode::Optimal,
            },
            PolicySpec {
                name: "random".into(),
                capacities: self.capacities.clone(),
                mode: AssignmentMode::Random,
            },
        ];
        if let Some(sq) = &self.status_quo {
            out.push(PolicySpec {
                name: "status quo".into(),
                capacities: sq.clone(),
                mode: AssignmentMode::Random,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEffect {
    pub arm: String,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_rows: usize,
    pub arms: Vec<String>,
    pub selection: ModelSelection,
    pub overlap: Vec<OverlapRow>,
    pub ate: Vec<ArmEffect>,
    /// Mean predicted effect per program.
    pub mean_cate: Vec<ArmEffect>,
    pub assignment_counts: Vec<(String, usize)>,
    pub objective: f64,
    pub group_values: GroupValueMatrix,
    pub comparison: PolicyComparison,
    pub profile: Vec<GroupProfile>,
    pub notes: Vec<String>,
}

/// Everything the pipeline produced, including per-row artifacts that are
/// written separately from the report.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub cates: CatePredictions,
    pub scores: DrScores,
    pub propensities: Propensities,
    pub plan: AssignmentPlan,
}

pub fn run_pipeline(
    table: &ExperimentTable,
    config: &PipelineConfig,
    seed: u64,
) -> Result<PipelineRun> {
    config.validate()?;
    if let Some(a) = table.arm_counts().iter().position(|&c| c == 0) {
        return Err(Error::Domain(format!(
            "arm {} has no rows",
            table.arms().label(a)
        )));
    }
    let folds = CrossFitPlan::new(table.n_rows(), config.folds, seed::derive(seed, "folds"))?;

    let selection = crate::cate::select_outcome_model(
        table,
        &config.outcome_candidates,
        &folds,
        seed::derive(seed, "model-selection"),
    )?;
    log::info!("outcome model: {}", selection.spec.kind.name());

    let props = fit_propensity(
        table,
        &config.propensity,
        &folds,
        config.clip,
        seed::derive(seed, "nuisance"),
    )?;
    let scores = aipw_scores_with_propensities(
        table,
        &selection.spec,
        &props,
        &folds,
        seed::derive(seed, "nuisance"),
    )?;

    let cate_seed = seed::derive(seed, "cate");
    let cates = match config.cate_method {
        CateMethod::TLearner => t_learner(table, &selection.spec, &folds, cate_seed)?,
        CateMethod::DrLearner => dr_learner(table, &scores, &selection.spec, &folds, cate_seed)?,
    };

    let plan = solve_assignment(&cates, &config.capacities)?;
    let group_values = group_value_matrix(table, &plan, &props)?;
    let comparison = compare_policies(
        table,
        &config.policies(),
        &cates,
        &scores,
        &props,
        config.estimator,
        config.random_reps,
        seed::derive(seed, "policies"),
    )?;
    let profile = covariate_profile(table, &plan)?;

    let ate = cates
        .program_labels()
        .into_iter()
        .map(|arm| aipw_ate(&scores, &arm).map(|estimate| ArmEffect { arm, estimate }))
        .collect::<Result<Vec<_>>>()?;
    let mean_cate = cates
        .program_labels()
        .into_iter()
        .map(|arm| {
            let tau = cates.column(&arm).expect("program column");
            let estimate = Estimate::new(crate::stats::mean(&tau), 0.0, tau.len(), 0);
            ArmEffect { arm, estimate }
        })
        .collect();
    let mut notes = scores.notes.clone();
    for n in &props.notes {
        if !notes.contains(n) {
            notes.push(n.clone());
        }
    }
    let report = PipelineReport {
        n_rows: table.n_rows(),
        arms: table.arms().labels().to_vec(),
        selection,
        overlap: props.overlap.clone(),
        ate,
        mean_cate,
        assignment_counts: plan
            .arms
            .iter()
            .cloned()
            .zip(plan.counts.iter().copied())
            .collect(),
        objective: plan.objective,
        group_values,
        comparison,
        profile,
        notes,
    };
    Ok(PipelineRun {
        report,
        cates,
        scores,
        propensities: props,
        plan,
    })
}
