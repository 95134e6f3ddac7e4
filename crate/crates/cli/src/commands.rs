use std::path::Path;

use serde::Serialize;
use targetkit_core::cate::{fit_cate, select_outcome_model, ModelSelection};
use targetkit_core::counterfactual::{covariate_profile, GroupProfile};
use targetkit_core::dataset::{ingest_csv, IngestReport};
use targetkit_core::dr::{aipw_ate, aipw_scores, DrScores};
use targetkit_core::mht::{romano_wolf, Hypothesis, HypothesisFamily, RomanoWolfReport};
use targetkit_core::policy::{
    action_preference, evaluate_actions, rewards_from_scores, search_policy_tree, solve_assignment,
    Policy, PolicyValue, Predicate,
};
use targetkit_core::report::{self, estimates_md, table as md_table};
use targetkit_core::sim::{self, DgpSpec};
use targetkit_core::stats::{
    ate_pct_baseline, balance_table, diff_in_means, mean, paired_ate, sample_variance,
};
use targetkit_core::stats::{BalanceRow, PairEffect};
use targetkit_core::{
    run_pipeline, seed, CatePredictions, CrossFitPlan, Error, Estimate, ExperimentTable,
    PipelineConfig, PolicyTree, Result, Schema,
};

use crate::config::RunConfig;
use crate::output::{sha256_hex, Audit, Outputs};
use crate::{Command, PolicyCommand};

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Outputs> {
    match command {
        Command::Ate => cmd_ate(cfg),
        Command::Balance => cmd_balance(cfg),
        Command::Cate => cmd_cate(cfg),
        Command::Mht => cmd_mht(cfg),
        Command::Policy(PolicyCommand::Learn) => cmd_policy_learn(cfg),
        Command::Policy(PolicyCommand::Assign) => cmd_policy_assign(cfg),
        Command::Policy(PolicyCommand::Evaluate) => cmd_policy_evaluate(cfg),
        Command::Policy(PolicyCommand::Compare) => cmd_policy_compare(cfg),
        Command::Simulate { preset } => cmd_simulate(cfg, preset.as_deref()),
    }
}

struct Loaded {
    table: ExperimentTable,
    ingest: IngestReport,
    input_sha256: String,
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input CSV given (--input or config \"input\")".into()))?;
    let schema_path = cfg
        .schema
        .as_ref()
        .ok_or_else(|| Error::Config("no schema given (--schema or config \"schema\")".into()))?;
    let schema = Schema::from_json_file(schema_path)?;
    let bytes = std::fs::read(input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let (table, ingest) = ingest_csv(input, &schema)?;
    if ingest.rows_dropped > 0 {
        log::warn!("{} rows dropped for missing values", ingest.rows_dropped);
    }
    Ok(Loaded {
        table,
        ingest,
        input_sha256: sha256_hex(&bytes),
    })
}

fn audit(command: &str, cfg: &RunConfig, input_sha256: Option<String>) -> Audit {
    Audit {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(cfg.canonical_json().as_bytes()),
        input_sha256,
        seed: cfg.seed,
    }
}

/// Program arms to analyze: the configured ones, or all programs.
fn treat_arms(cfg: &RunConfig, table: &ExperimentTable) -> Result<Vec<String>> {
    let arms = table.arms();
    if cfg.treat.is_empty() {
        return Ok(arms.programs().map(|a| arms.label(a).to_string()).collect());
    }
    for t in &cfg.treat {
        let i = arms
            .require(t)
            .map_err(|_| Error::Config(format!("unknown treat arm {t}")))?;
        if i == arms.control_index() {
            return Err(Error::Config(format!("treat arm {t} is the control arm")));
        }
    }
    Ok(cfg.treat.clone())
}

fn folds(cfg: &RunConfig, table: &ExperimentTable) -> Result<CrossFitPlan> {
    CrossFitPlan::new(table.n_rows(), cfg.folds, seed::derive(cfg.seed, "folds"))
}

fn scores(cfg: &RunConfig, table: &ExperimentTable) -> Result<DrScores> {
    let plan = folds(cfg, table)?;
    aipw_scores(
        table,
        &cfg.outcome_learner,
        &cfg.propensity_learner,
        &plan,
        cfg.clip,
        seed::derive(cfg.seed, "nuisance"),
    )
}

fn ingest_md(ingest: &IngestReport) -> String {
    let mut s = format!(
        "{} rows read, {} dropped for missing values",
        ingest.rows_read, ingest.rows_dropped
    );
    if !ingest.incomplete_pairs.is_empty() {
        s.push_str(&format!(
            ", {} incomplete pairs",
            ingest.incomplete_pairs.len()
        ));
    }
    s.push_str("\n\n");
    s
}

// ---- ate ----------------------------------------------------------------

#[derive(Serialize)]
struct ArmAte {
    arm: String,
    control: String,
    difference_in_means: Estimate,
    /// Effect as a percentage of the control mean.
    relative_pct: Estimate,
    control_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    paired: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    complete_pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aipw: Option<Estimate>,
}

#[derive(Serialize)]
struct AteReport {
    ingest: IngestReport,
    level: f64,
    effects: Vec<ArmAte>,
    notes: Vec<String>,
}

fn cmd_ate(cfg: &RunConfig) -> Result<Outputs> {
    let data = load(cfg)?;
    let table = &data.table;
    let control = table.arms().control_label().to_string();
    let arms = treat_arms(cfg, table)?;
    let dr = if cfg.adjusted {
        Some(scores(cfg, table)?)
    } else {
        None
    };
    let mut effects = Vec::new();
    for arm in &arms {
        let dim = diff_in_means(table, arm, &control)?.at_level(cfg.level);
        let ys: Vec<f64> = table
            .split_by_arm(&control)?
            .iter()
            .map(|&i| table.outcome()[i])
            .collect();
        let cm = mean(&ys);
        let cm_se = (sample_variance(&ys) / ys.len() as f64).sqrt();
        let rel = ate_pct_baseline(&dim, cm, cm_se)?.at_level(cfg.level);
        let (paired, complete_pairs) = match table.pair_ids() {
            Some(_) => match paired_ate(table, arm, &control, PairEffect::WithinPairDifference) {
                Ok(p) => (Some(p.estimate.at_level(cfg.level)), Some(p.complete_pairs)),
                Err(e) if !e.is_validation() => {
                    log::warn!("paired estimate for {arm} unavailable: {e}");
                    (None, None)
                }
                Err(e) => return Err(e),
            },
            None => (None, None),
        };
        let aipw = match &dr {
            Some(s) => Some(aipw_ate(s, arm)?.at_level(cfg.level)),
            None => None,
        };
        effects.push(ArmAte {
            arm: arm.clone(),
            control: control.clone(),
            difference_in_means: dim,
            relative_pct: rel,
            control_mean: cm,
            paired,
            complete_pairs,
            aipw,
        });
    }
    let report = AteReport {
        ingest: data.ingest.clone(),
        level: cfg.level,
        effects,
        notes: dr.map(|s| s.notes).unwrap_or_default(),
    };
    let mut rows = Vec::new();
    for e in &report.effects {
        rows.push((
            format!("{}: difference in means", e.arm),
            e.difference_in_means.clone(),
        ));
        rows.push((
            format!("{}: % of control mean", e.arm),
            e.relative_pct.clone(),
        ));
        if let Some(p) = &e.paired {
            rows.push((format!("{}: paired", e.arm), p.clone()));
        }
        if let Some(a) = &e.aipw {
            rows.push((format!("{}: AIPW", e.arm), a.clone()));
        }
    }
    let mut md = ingest_md(&report.ingest);
    md.push_str(&format!(
        "Effects against {control}, {}% intervals.\n\n",
        report.level * 100.0
    ));
    md.push_str(&estimates_md(&rows));
    notes_md(&mut md, &report.notes);
    let mut out = Outputs::default();
    out.report(
        "ate",
        &cfg.formats,
        &audit("ate", cfg, Some(data.input_sha256)),
        &report,
        md,
    );
    Ok(out)
}

fn notes_md(md: &mut String, notes: &[String]) {
    if !notes.is_empty() {
        md.push_str("\nNotes:\n\n");
        for n in notes {
            md.push_str(&format!("- {n}\n"));
        }
    }
}

// ---- balance ------------------------------------------------------------

#[derive(Serialize)]
struct ArmBalance {
    arm: String,
    control: String,
    rows: Vec<BalanceRow>,
}

fn cmd_balance(cfg: &RunConfig) -> Result<Outputs> {
    let data = load(cfg)?;
    let table = &data.table;
    let control = table.arms().control_label().to_string();
    let mut all = Vec::new();
    let mut md = ingest_md(&data.ingest);
    for arm in treat_arms(cfg, table)? {
        let rows = balance_table(table, &arm, &control)?;
        md.push_str(&format!("## {arm} vs {control}\n\n"));
        md.push_str(&report::balance_md(&rows));
        md.push('\n');
        all.push(ArmBalance {
            arm,
            control: control.clone(),
            rows,
        });
    }
    let mut out = Outputs::default();
    out.report(
        "balance",
        &cfg.formats,
        &audit("balance", cfg, Some(data.input_sha256)),
        &all,
        md,
    );
    Ok(out)
}

// ---- cate ---------------------------------------------------------------

#[derive(Serialize)]
struct CateSummary {
    arm: String,
    mean: f64,
    sd: f64,
    min: f64,
    q25: f64,
    median: f64,
    q75: f64,
    max: f64,
}

#[derive(Serialize)]
struct CateReport {
    method: String,
    learner: String,
    folds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<ModelSelection>,
    summaries: Vec<CateSummary>,
    notes: Vec<String>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fit_cates(
    cfg: &RunConfig,
    table: &ExperimentTable,
) -> Result<(CatePredictions, Option<ModelSelection>)> {
    let plan = folds(cfg, table)?;
    let (spec, selection) = if cfg.cate.candidates.is_empty() {
        (cfg.outcome_learner.clone(), None)
    } else {
        let sel = select_outcome_model(
            table,
            &cfg.cate.candidates,
            &plan,
            seed::derive(cfg.seed, "model-selection"),
        )?;
        (sel.spec.clone(), Some(sel))
    };
    let cates = fit_cate(
        table,
        cfg.cate.method,
        &spec,
        &cfg.propensity_learner,
        &plan,
        cfg.clip,
        seed::derive(cfg.seed, "cate"),
    )?;
    Ok((cates, selection))
}

fn cmd_cate(cfg: &RunConfig) -> Result<Outputs> {
    let data = load(cfg)?;
    let (cates, selection) = fit_cates(cfg, &data.table)?;
    let summaries: Vec<CateSummary> = cates
        .program_labels()
        .into_iter()
        .map(|arm| {
            let mut v = cates.column(&arm).expect("program column");
            let m = mean(&v);
            let sd = sample_variance(&v).sqrt();
            v.sort_by(f64::total_cmp);
            CateSummary {
                arm,
                mean: m,
                sd,
                min: v[0],
                q25: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q75: quantile(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect();
    let report = CateReport {
        method: serde_json::to_value(cates.method)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        learner: cates.spec.kind.name().into(),
        folds: cates.folds,
        selection,
        summaries,
        notes: cates.notes.clone(),
    };
    let rows: Vec<Vec<String>> = report
        .summaries
        .iter()
        .map(|s| {
            [s.mean, s.sd, s.min, s.q25, s.median, s.q75, s.max]
                .iter()
                .map(|v| format!("{v:.3}"))
                .fold(vec![s.arm.clone()], |mut r, c| {
                    r.push(c);
                    r
                })
        })
        .collect();
    let mut md = format!(
        "{} with {} outcome learner, {} folds.\n\n",
        report.method, report.learner, report.folds
    );
    md.push_str(&md_table(
        &["arm", "mean", "sd", "min", "q25", "median", "q75", "max"],
        &rows,
    ));
    notes_md(&mut md, &report.notes);
    let mut out = Outputs::default();
    out.report(
        "cate",
        &cfg.formats,
        &audit("cate", cfg, Some(data.input_sha256)),
        &report,
        md,
    );
    out.add("cates.csv", cates.to_csv_bytes()?);
    Ok(out)
}

// ---- mht ----------------------------------------------------------------

fn mask(table: &ExperimentTable, preds: &[Predicate]) -> Result<Vec<bool>> {
    let cols: Vec<usize> = preds
        .iter()
        .map(|p| table.require_column(&p.column))
        .collect::<Result<_>>()?;
    let x = table.covariates();
    Ok((0..table.n_rows())
        .map(|i| preds.iter().zip(&cols).all(|(p, &j)| p.holds(x.get(i, j))))
        .collect())
}

fn cmd_mht(cfg: &RunConfig) -> Result<Outputs> {
    if cfg.mht.hypotheses.is_empty() {
        return Err(Error::Config("mht.hypotheses is empty".into()));
    }
    let data = load(cfg)?;
    let table = &data.table;
    let hyps: Vec<Hypothesis> = cfg
        .mht
        .hypotheses
        .iter()
        .map(|h| {
            let first = mask(table, &h.filter)?;
            Ok(match &h.versus {
                None => Hypothesis::subgroup(h.label.clone(), first),
                Some(v) => Hypothesis::Difference {
                    label: h.label.clone(),
                    first,
                    second: mask(table, v)?,
                },
            })
        })
        .collect::<Result<_>>()?;
    let control = table.arms().control_label().to_string();
    let mut reports: Vec<RomanoWolfReport> = Vec::new();
    let mut md = String::new();
    for arm in treat_arms(cfg, table)? {
        let mut fam = HypothesisFamily::new(
            hyps.clone(),
            cfg.mht.reps,
            seed::derive(cfg.seed, &format!("mht:{arm}")),
        );
        fam.alpha = cfg.mht.alpha;
        let r = romano_wolf(table, &fam, &arm, &control)?;
        md.push_str(&format!("## {arm}\n\n"));
        md.push_str(&report::romano_wolf_md(&r));
        md.push('\n');
        reports.push(r);
    }
    let mut out = Outputs::default();
    out.report(
        "mht",
        &cfg.formats,
        &audit("mht", cfg, Some(data.input_sha256)),
        &reports,
        md,
    );
    Ok(out)
}

// ---- policy learn -------------------------------------------------------

#[derive(Serialize)]
struct LearnReport {
    tree: PolicyTree,
    rendered: String,
    /// In-sample doubly-robust value of the tree.
    value: PolicyValue,
    /// Everyone-to-one-arm values for comparison.
    baselines: Vec<(String, Estimate)>,
}

fn baselines(scores: &DrScores) -> Result<Vec<(String, Estimate)>> {
    let n = scores.n_rows();
    scores
        .arms
        .iter()
        .enumerate()
        .map(|(a, label)| {
            Ok((
                format!("all {label}"),
                evaluate_actions(scores, &vec![a; n])?.value,
            ))
        })
        .collect()
}

fn cmd_policy_learn(cfg: &RunConfig) -> Result<Outputs> {
    let data = load(cfg)?;
    let table = &data.table;
    let s = scores(cfg, table)?;
    let rewards = rewards_from_scores(&s);
    let pref = action_preference(s.arms.len(), s.control);
    let tree = search_policy_tree(
        table.covariates(),
        table.covariate_names(),
        &rewards,
        &s.arms,
        &pref,
        cfg.policy.depth,
        cfg.policy.approximate,
    )?;
    let policy = Policy::Tree(tree.clone());
    let actions = policy.actions(table)?;
    let value = evaluate_actions(&s, &actions)?;
    let report = LearnReport {
        rendered: tree.render(),
        tree,
        value,
        baselines: baselines(&s)?,
    };
    let mut md = format!(
        "Depth {} tree{}:\n\n```\n{}```\n\n",
        report.tree.depth,
        if report.tree.approximate {
            " (greedy)"
        } else {
            ""
        },
        report.rendered
    );
    let mut rows = vec![("tree".to_string(), report.value.value.clone())];
    rows.extend(report.baselines.iter().cloned());
    md.push_str(&estimates_md(&rows));
    md.push('\n');
    md.push_str(&shares_md(&report.value.shares));
    let mut out = Outputs::default();
    out.report(
        "policy-learn",
        &cfg.formats,
        &audit("policy-learn", cfg, Some(data.input_sha256)),
        &report,
        md,
    );
    out.json("tree.json", &policy);
    Ok(out)
}

fn shares_md(shares: &[(String, f64)]) -> String {
    let rows: Vec<Vec<String>> = shares
        .iter()
        .map(|(a, s)| vec![a.clone(), format!("{s:.3}")])
        .collect();
    md_table(&["arm", "share"], &rows)
}

// ---- policy assign ------------------------------------------------------

#[derive(Serialize)]
struct AssignReport {
    source: String,
    caps: Vec<(String, usize)>,
    counts: Vec<(String, usize)>,
    binding: Vec<(String, bool)>,
    objective: f64,
    profile: Vec<GroupProfile>,
}

fn cmd_policy_assign(cfg: &RunConfig) -> Result<Outputs> {
    let caps = cfg
        .policy
        .capacities
        .as_ref()
        .ok_or_else(|| Error::Config("policy.capacities is required".into()))?;
    let data = load(cfg)?;
    let table = &data.table;
    let (cates, source) = match &cfg.policy.cates {
        Some(path) => {
            let c = CatePredictions::read_csv(
                path,
                table.arms().labels(),
                table.arms().control_label(),
            )?;
            if c.n_rows() != table.n_rows() {
                return Err(Error::Validation(format!(
                    "{} has {} rows, the table has {}",
                    path.display(),
                    c.n_rows(),
                    table.n_rows()
                )));
            }
            (c, path.display().to_string())
        }
        None => (fit_cates(cfg, table)?.0, "fitted".to_string()),
    };
    let plan = solve_assignment(&cates, caps)?;
    let programs = plan.programs();
    let report = AssignReport {
        source,
        caps: programs
            .iter()
            .map(|&p| plan.arms[p].clone())
            .zip(plan.caps.iter().copied())
            .collect(),
        counts: plan
            .arms
            .iter()
            .cloned()
            .zip(plan.counts.iter().copied())
            .collect(),
        binding: programs
            .iter()
            .map(|&p| plan.arms[p].clone())
            .zip(plan.binding.iter().copied())
            .collect(),
        objective: plan.objective,
        profile: covariate_profile(table, &plan)?,
    };
    let rows: Vec<Vec<String>> = report
        .counts
        .iter()
        .map(|(a, c)| {
            let cap = report
                .caps
                .iter()
                .find(|(p, _)| p == a)
                .map(|(_, c)| c.to_string())
                .unwrap_or_else(|| "-".into());
            vec![a.clone(), c.to_string(), cap]
        })
        .collect();
    let mut md = format!("Effects from {}.\n\n", report.source);
    md.push_str(&md_table(&["arm", "assigned", "cap"], &rows));
    md.push_str(&format!(
        "\nsum of predicted effects: {:.3}\n\n",
        report.objective
    ));
    md.push_str(&report::profile_md(&report.profile));
    let mut out = Outputs::default();
    out.report(
        "policy-assign",
        &cfg.formats,
        &audit("policy-assign", cfg, Some(data.input_sha256)),
        &report,
        md,
    );
    out.add("assignment.csv", plan.to_csv_bytes()?);
    out.json("plan.json", &Policy::Plan(plan));
    Ok(out)
}

// ---- policy evaluate ----------------------------------------------------

#[derive(Serialize)]
struct EvaluateReport {
    policy: String,
    value: PolicyValue,
    baselines: Vec<(String, Estimate)>,
}

fn read_policy(path: &Path) -> Result<Policy> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn cmd_policy_evaluate(cfg: &RunConfig) -> Result<Outputs> {
    let path = cfg
        .policy
        .policy_file
        .as_ref()
        .ok_or_else(|| Error::Config("policy.policy_file is required".into()))?;
    let policy = read_policy(path)?;
    let data = load(cfg)?;
    let table = &data.table;
    let s = scores(cfg, table)?;
    let actions = policy.actions(table)?;
    let report = EvaluateReport {
        policy: path.display().to_string(),
        value: evaluate_actions(&s, &actions)?,
        baselines: baselines(&s)?,
    };
    let mut rows = vec![("policy".to_string(), report.value.value.clone())];
    rows.extend(report.baselines.iter().cloned());
    let mut md = format!("Doubly-robust value of {}.\n\n", report.policy);
    md.push_str(&estimates_md(&rows));
    md.push('\n');
    md.push_str(&shares_md(&report.value.shares));
    let mut out = Outputs::default();
    out.report(
        "policy-evaluate",
        &cfg.formats,
        &audit("policy-evaluate", cfg, Some(data.input_sha256)),
        &report,
        md,
    );
    Ok(out)
}

// ---- policy compare -----------------------------------------------------

fn cmd_policy_compare(cfg: &RunConfig) -> Result<Outputs> {
    let caps = cfg
        .policy
        .capacities
        .clone()
        .ok_or_else(|| Error::Config("policy.capacities is required".into()))?;
    let data = load(cfg)?;
    let mut pc = PipelineConfig::new(caps);
    if !cfg.policy.outcome_candidates.is_empty() {
        pc.outcome_candidates = cfg.policy.outcome_candidates.clone();
    }
    pc.propensity = cfg.propensity_learner.clone();
    pc.cate_method = cfg.cate.method;
    pc.folds = cfg.folds;
    pc.clip = cfg.clip;
    pc.status_quo = cfg.policy.status_quo.clone();
    pc.random_reps = cfg.policy.random_reps;
    pc.estimator = cfg.policy.estimator;
    let run = run_pipeline(&data.table, &pc, cfg.seed)?;
    let mut md = ingest_md(&data.ingest);
    md.push_str(&report::pipeline_md(&run.report));
    let mut out = Outputs::default();
    out.report(
        "policy-compare",
        &cfg.formats,
        &audit("policy-compare", cfg, Some(data.input_sha256)),
        &run.report,
        md,
    );
    out.add("cates.csv", run.cates.to_csv_bytes()?);
    out.add("assignment.csv", run.plan.to_csv_bytes()?);
    Ok(out)
}

// ---- simulate -----------------------------------------------------------

#[derive(Serialize)]
struct OracleSummary {
    caps: Vec<usize>,
    optimal_value: f64,
    random_value: f64,
    gap: f64,
    optimal_counts: Vec<(String, usize)>,
}

#[derive(Serialize)]
struct SimulateReport {
    spec: DgpSpec,
    n_rows: usize,
    arm_counts: Vec<(String, usize)>,
    /// Sample average of the true effects per program.
    true_ate: Vec<(String, f64)>,
    clamped_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleSummary>,
}

fn cmd_simulate(cfg: &RunConfig, preset: Option<&str>) -> Result<Outputs> {
    let mut spec = match (preset, &cfg.simulate.preset, &cfg.simulate.spec) {
        (Some(p), _, _) => sim::preset(p)?,
        (None, Some(_), Some(_)) => {
            return Err(Error::Config(
                "simulate: give either preset or spec, not both".into(),
            ))
        }
        (None, Some(p), None) => sim::preset(p)?,
        (None, None, Some(s)) => s.clone(),
        (None, None, None) => {
            return Err(Error::Config(
                "simulate needs --preset, simulate.preset or simulate.spec".into(),
            ))
        }
    };
    spec.seed = cfg.seed;
    let (table, truth) = sim::generate(&spec)?;
    let oracle = match &cfg.policy.capacities {
        Some(caps) => {
            let plan = truth.oracle_plan(caps)?;
            let optimal_value = truth.policy_value(&plan.assigned);
            let random_value = truth.random_value(&plan.caps);
            Some(OracleSummary {
                caps: plan.caps.clone(),
                optimal_value,
                random_value,
                gap: optimal_value - random_value,
                optimal_counts: plan
                    .arms
                    .iter()
                    .cloned()
                    .zip(plan.counts.iter().copied())
                    .collect(),
            })
        }
        None => None,
    };
    let report = SimulateReport {
        n_rows: table.n_rows(),
        arm_counts: table
            .arms()
            .labels()
            .iter()
            .cloned()
            .zip(table.arm_counts())
            .collect(),
        true_ate: truth
            .programs()
            .iter()
            .map(|&p| (truth.arms[p].clone(), truth.ate(p)))
            .collect(),
        clamped_rows: truth.clamped,
        oracle,
        spec,
    };
    let mut md = format!("{} rows.\n\n", report.n_rows);
    let rows: Vec<Vec<String>> = report
        .arm_counts
        .iter()
        .map(|(a, c)| vec![a.clone(), c.to_string()])
        .collect();
    md.push_str(&md_table(&["arm", "rows"], &rows));
    let rows: Vec<Vec<String>> = report
        .true_ate
        .iter()
        .map(|(a, t)| vec![a.clone(), format!("{t:.4}")])
        .collect();
    md.push('\n');
    md.push_str(&md_table(&["program", "true average effect"], &rows));
    if let Some(o) = &report.oracle {
        md.push_str(&format!(
            "\nOracle assignment value {:.4}, random {:.4}, gap {:.4}.\n",
            o.optimal_value, o.random_value, o.gap
        ));
    }
    let (csv, schema) = table.to_csv_bytes()?;
    let mut out = Outputs::default();
    out.report(
        "simulate",
        &cfg.formats,
        &audit("simulate", cfg, None),
        &report,
        md,
    );
    out.add("data.csv", csv);
    out.json("schema.json", &schema);
    out.add("truth.csv", truth.to_csv_bytes()?);
    Ok(out)
}
