mod common;

use std::collections::BTreeMap;

use targetkit_core::counterfactual::{
    compare_policies, covariate_profile, group_value_matrix, AssignmentMode, PolicySpec,
    ValueEstimator,
};
use targetkit_core::dr::aipw_scores;
use targetkit_core::nuisance::fit_propensity;
use targetkit_core::policy::solve_assignment;
use targetkit_core::sim::{
    generate, preset_with_seed, AssignmentSpec, CovariateDist, CovariateSpec, DgpSpec,
    LinearPredictor, NoiseModel,
};
use targetkit_core::{
    run_pipeline, AssignmentPlan, Capacities, CrossFitPlan, ExperimentTable, GroundTruth,
    LearnerSpec, Matrix, PipelineConfig, Propensities,
};

fn true_propensities(truth: &GroundTruth) -> Propensities {
    Propensities::from_matrix(truth.arms.clone(), truth.propensity.clone(), 0.0).unwrap()
}

fn caps(m: f64, c: f64) -> Capacities {
    Capacities::fractions([("mentoring", m), ("challenges", c)])
}

/// Small-city rows gain 0.35 from mentoring, everyone else 0.05.
fn small_city_spec(seed: u64) -> DgpSpec {
    let bern = |name: &str, p: f64| CovariateSpec {
        name: name.into(),
        dist: CovariateDist::Bernoulli { p },
    };
    let outcomes: BTreeMap<String, LinearPredictor> = [
        (
            "control",
            LinearPredictor::constant(0.15).with(0.1, &["stem"]),
        ),
        (
            "mentoring",
            LinearPredictor::constant(0.20)
                .with(0.1, &["stem"])
                .with(0.30, &["small_city"]),
        ),
        (
            "challenges",
            LinearPredictor::constant(0.20).with(0.15, &["stem"]),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    DgpSpec {
        n: 3000,
        arms: vec!["control".into(), "mentoring".into(), "challenges".into()],
        control: "control".into(),
        binary_outcome: true,
        covariates: vec![bern("small_city", 0.3), bern("stem", 0.4)],
        outcomes,
        noise: NoiseModel::Bernoulli,
        assignment: AssignmentSpec::CompletelyRandomized {
            shares: [
                ("control", 1.0 / 3.0),
                ("mentoring", 1.0 / 3.0),
                ("challenges", 1.0 / 3.0),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        },
        seed,
    }
}

#[test]
fn mentoring_group_contrast_recovers_the_designed_gain() {
    let mut points = Vec::new();
    for seed in 0..4 {
        let (table, truth) = generate(&small_city_spec(seed)).unwrap();
        // The oracle plan sends exactly the small-city rows to mentoring.
        let sc = table.column_index("small_city").unwrap();
        let n_sc = (0..table.n_rows())
            .filter(|&i| table.covariates().get(i, sc) == 1.0)
            .count();
        let plan = truth
            .oracle_plan(&Capacities::counts([
                ("mentoring", n_sc),
                ("challenges", table.n_rows() / 2),
            ]))
            .unwrap();
        let group = plan.members(1);
        assert!(group.iter().all(|&i| table.covariates().get(i, sc) == 1.0));
        let m = group_value_matrix(&table, &plan, &true_propensities(&truth)).unwrap();
        let row = m.rows.iter().find(|r| r.group == "mentoring").unwrap();
        let k = m
            .contrasts
            .iter()
            .position(|c| c.ends_with("control"))
            .unwrap();
        let c = row.contrasts[k].as_ref().unwrap();
        assert!(
            (c.point - 0.35).abs() <= 3.0 * c.se,
            "seed {seed}: {} ({})",
            c.point,
            c.se
        );
        points.push(c.point);
    }
    let avg = points.iter().sum::<f64>() / points.len() as f64;
    assert!((avg - 0.35).abs() <= 0.06, "{avg}");
}

#[test]
fn everyone_in_control_collapses_the_matrix() {
    let (table, truth) = generate(&small_city_spec(1)).unwrap();
    let plan = truth.oracle_plan(&caps(0.0, 0.0)).unwrap();
    let m = group_value_matrix(&table, &plan, &true_propensities(&truth)).unwrap();
    let groups: Vec<&str> = m.rows.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(groups, ["control", "all"]);
    let ctrl = m.columns.iter().position(|c| c == "control").unwrap();
    for row in &m.rows {
        assert_eq!(
            row.optimal.as_ref().unwrap().point,
            row.under[ctrl].as_ref().unwrap().point
        );
    }
}

#[test]
fn homogeneous_effects_give_pooled_contrasts() {
    let mut spec = small_city_spec(2);
    spec.n = 6000;
    spec.outcomes.insert(
        "mentoring".into(),
        LinearPredictor::constant(0.30).with(0.1, &["stem"]),
    );
    spec.outcomes.insert(
        "challenges".into(),
        LinearPredictor::constant(0.30).with(0.1, &["stem"]),
    );
    let (table, truth) = generate(&spec).unwrap();
    let props = Propensities::marginal(&table);
    // Any split will do; effects do not depend on it.
    let plan = truth.oracle_plan(&caps(0.3, 0.3)).unwrap();
    let m = group_value_matrix(&table, &plan, &props).unwrap();
    for row in &m.rows {
        for (name, c) in m.contrasts.iter().zip(&row.contrasts) {
            let c = c.as_ref().unwrap();
            let expected = if name.ends_with("control") { 0.15 } else { 0.0 };
            assert!(
                (c.point - expected).abs() <= 3.0 * c.se,
                "{} {name}: {} ({})",
                row.group,
                c.point,
                c.se
            );
        }
    }
}

fn pipeline_table(seed: u64) -> (ExperimentTable, GroundTruth) {
    generate(&preset_with_seed("heterogeneous-policy", seed).unwrap()).unwrap()
}

#[test]
fn identical_policies_have_zero_differences() {
    let (table, truth) = generate(&small_city_spec(3)).unwrap();
    let folds = CrossFitPlan::new(table.n_rows(), 3, 1).unwrap();
    let scores = aipw_scores(
        &table,
        &LearnerSpec::linear(),
        &LearnerSpec::logit(),
        &folds,
        0.01,
        2,
    )
    .unwrap();
    let props = fit_propensity(&table, &LearnerSpec::logit(), &folds, 0.01, 2).unwrap();
    for mode in [AssignmentMode::Optimal, AssignmentMode::Random] {
        let spec = PolicySpec {
            name: "p".into(),
            capacities: caps(0.13, 0.5),
            mode,
        };
        for estimator in [ValueEstimator::DoublyRobust, ValueEstimator::Hajek] {
            let cmp = compare_policies(
                &table,
                &[spec.clone(), spec.clone()],
                &truth.cates(),
                &scores,
                &props,
                estimator,
                20,
                9,
            )
            .unwrap();
            for d in &cmp.differences[0].pools {
                assert!(
                    d.difference.point.abs() < 1e-12,
                    "{mode:?} {estimator:?} {}",
                    d.pool
                );
                assert!(d.difference.se.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn status_quo_to_optimal_gain_is_in_band() {
    let (table, truth) = pipeline_table(0);
    let mut cfg = PipelineConfig::new(caps(0.13, 0.5));
    cfg.outcome_candidates = vec![LearnerSpec::linear()];
    cfg.status_quo = Some(caps(0.13, 0.15));
    cfg.random_reps = 50;
    let run = run_pipeline(&table, &cfg, 7).unwrap();
    let d = run
        .report
        .comparison
        .differences
        .iter()
        .find(|d| d.other == "status quo")
        .unwrap();
    let gain = d
        .pools
        .iter()
        .find(|p| p.pool == "all")
        .unwrap()
        .relative_gain_pct;

    let n = table.n_rows();
    let oracle = truth.oracle_plan(&caps(0.13, 0.5)).unwrap();
    let sq_caps = caps(0.13, 0.15)
        .resolve(&["mentoring".into(), "challenges".into()], "control", n)
        .unwrap();
    let optimal = truth.policy_value(&oracle.assigned);
    let status_quo = truth.random_value(&sq_caps);
    let oracle_gain = 100.0 * (optimal - status_quo) / status_quo;
    assert!(
        (20.0..=40.0).contains(&oracle_gain),
        "oracle gain {oracle_gain:.1}%"
    );
    assert!(
        (20.0..=40.0).contains(&gain),
        "estimated gain {gain:.1}% (oracle {oracle_gain:.1}%)"
    );
}

fn plan_from(table: &ExperimentTable, assigned: Vec<usize>) -> AssignmentPlan {
    let arms = table.arms();
    AssignmentPlan::from_assignment(
        arms.labels().to_vec(),
        arms.control_index(),
        assigned,
        vec![table.n_rows(); arms.n_programs()],
        None,
    )
}

#[test]
fn one_group_profile_is_the_overall_mean() {
    let (table, _) = generate(&small_city_spec(4)).unwrap();
    let plan = plan_from(&table, vec![1; table.n_rows()]);
    let profile = covariate_profile(&table, &plan).unwrap();
    assert_eq!(profile.len(), 1);
    for (j, c) in profile[0].covariates.iter().enumerate() {
        let col: Vec<f64> = table.covariates().column(j).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        assert!((c.mean - m).abs() < 1e-12);
    }
}

#[test]
fn constant_covariate_profiles_identically() {
    let x = Matrix::from_rows(&(0..12).map(|i| vec![2.0, f64::from(i)]).collect::<Vec<_>>());
    let arm: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let table = common::table_from(
        x,
        &["k", "i"],
        &["control", "a", "b"],
        arm.clone(),
        vec![0.0; 12],
    );
    let profile = covariate_profile(&table, &plan_from(&table, arm)).unwrap();
    assert_eq!(profile.len(), 3);
    for g in &profile {
        assert_eq!(g.covariates[0].mean, 2.0);
        assert_eq!(g.covariates[0].se, 0.0);
    }
}

#[test]
fn small_city_rows_are_prioritized_for_mentoring() {
    let (table, truth) = pipeline_table(1);
    let mut cfg = PipelineConfig::new(caps(0.13, 0.5));
    cfg.outcome_candidates = vec![LearnerSpec::linear()];
    cfg.random_reps = 10;
    let run = run_pipeline(&table, &cfg, 3).unwrap();
    let mean_of = |group: &str| {
        let g = run
            .report
            .profile
            .iter()
            .find(|g| g.group == group)
            .unwrap();
        g.covariates
            .iter()
            .find(|c| c.covariate == "small_city")
            .unwrap()
            .mean
    };
    assert!(mean_of("mentoring") > mean_of("challenges") + 0.3);
    // Same ordering under the true effects.
    let oracle = solve_assignment(&truth.cates(), &caps(0.13, 0.5)).unwrap();
    let oracle_profile = covariate_profile(&table, &oracle).unwrap();
    let sc = |g: &str| {
        oracle_profile
            .iter()
            .find(|p| p.group == g)
            .unwrap()
            .covariates[0]
            .mean
    };
    assert!(sc("mentoring") > sc("challenges"));
}
