use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_targetkit"));
    c.env_remove("TARGETKIT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, preset: &str, seed: u64) -> (PathBuf, PathBuf) {
    let out = dir.join(preset);
    let o = run(&[
        "simulate",
        "--preset",
        preset,
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (out.join("data.csv"), out.join("schema.json"))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn files_in(dir: &Path) -> Vec<String> {
    match std::fs::read_dir(dir) {
        Ok(rd) => {
            let mut v: Vec<String> = rd
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect();
            v.sort();
            v
        }
        Err(_) => Vec::new(),
    }
}

const COMPARE_CONFIG: &str = r#"{
  "seed": 11,
  "policy": {
    "random_reps": 50,
    "outcome_candidates": [{"kind": "regularized-linear"}],
    "capacities": {"limits": {"mentoring": 0.13, "challenges": 0.5}},
    "status_quo": {"limits": {"mentoring": 0.13, "challenges": 0.15}}
  }
}"#;

#[test]
fn ate_on_mentoring_preset_is_near_the_design_effect() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "mentoring-like", 3);
    let out = tmp.path().join("ate");
    let o = run(&[
        "ate",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("ate.json"));
    let e = &r["result"]["effects"][0];
    assert_eq!(e["arm"], "mentoring");
    let point = e["difference_in_means"]["point"].as_f64().unwrap();
    let se = e["difference_in_means"]["se"].as_f64().unwrap();
    assert!((point - 0.129).abs() <= 3.0 * se, "{point} ({se})");
    assert!(e["paired"]["point"].is_number());
    assert_eq!(e["complete_pairs"], 147);
    assert_eq!(r["seed"], 1);
    assert_eq!(r["command"], "ate");
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["input_sha256"].as_str().unwrap().len(), 64);
    let md = std::fs::read_to_string(out.join("ate.md")).unwrap();
    assert!(md.contains(r["config_sha256"].as_str().unwrap()));
    assert!(md.contains("seed 1"));
}

#[test]
fn policy_compare_report_has_three_policies_and_consistent_shares() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "pooled-like", 5);
    let cfg = write(tmp.path(), "cfg.json", COMPARE_CONFIG);
    let out = tmp.path().join("cmp");
    let o = run(&[
        "policy",
        "compare",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        files_in(&out),
        [
            "assignment.csv",
            "cates.csv",
            "policy-compare.json",
            "policy-compare.md"
        ]
    );
    let r = read_json(&out.join("policy-compare.json"));
    let policies = r["result"]["comparison"]["policies"].as_array().unwrap();
    let names: Vec<&str> = policies
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["optimal", "random", "status quo"]);
    for p in policies {
        let share = |pool: &str| {
            p["pools"]
                .as_array()
                .unwrap()
                .iter()
                .find(|v| v["pool"] == pool)
                .unwrap()["share"]
                .as_f64()
                .unwrap()
        };
        assert!((share("mentoring") + share("challenges") - share("programs")).abs() < 1e-12);
        assert!((share("all") - 1.0).abs() < 1e-9);
    }
    let sq = &policies[2];
    let sq_share = |pool: &str| {
        sq["pools"]
            .as_array()
            .unwrap()
            .iter()
            .find(|v| v["pool"] == pool)
            .unwrap()["share"]
            .as_f64()
            .unwrap()
    };
    assert!((sq_share("challenges") - 106.0 / 707.0).abs() < 1e-12);
    let md = std::fs::read_to_string(out.join("policy-compare.md")).unwrap();
    assert!(md.contains("| value all |"));
    assert!(md.contains("optimal - random"));
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "pooled-like", 6);
    let cfg = write(tmp.path(), "cfg.json", COMPARE_CONFIG);
    let go = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = bin()
            .env("TARGETKIT_THREADS", threads)
            .args([
                "policy",
                "compare",
                "--input",
                s(&data),
                "--schema",
                s(&schema),
                "--config",
                s(&cfg),
                "--out",
                s(&out),
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = go("a", "1");
    let b = go("b", "1");
    let c = go("c", "3");
    for f in files_in(&a) {
        let x = std::fs::read(a.join(&f)).unwrap();
        assert_eq!(
            x,
            std::fs::read(b.join(&f)).unwrap(),
            "{f} differs between runs"
        );
        assert_eq!(
            x,
            std::fs::read(c.join(&f)).unwrap(),
            "{f} differs across thread counts"
        );
    }
}

#[test]
fn invalid_schema_exits_1_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = simulate(tmp.path(), "challenges-like", 1);
    let bad = write(
        tmp.path(),
        "bad.json",
        r#"{"columns": {"arm": "arm"}, "arms": ["control", "challenges"], "control": "control"}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "ate",
        "--input",
        s(&data),
        "--schema",
        s(&bad),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(files_in(&out).is_empty());
}

#[test]
fn unknown_config_key_exits_1() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "challenges-like", 1);
    let cfg = write(tmp.path(), "cfg.json", r#"{"seeds": 3}"#);
    let out = tmp.path().join("out");
    let o = run(&[
        "ate",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds"));
    assert!(files_in(&out).is_empty());
}

#[test]
fn missing_input_and_bad_flags_exit_1() {
    assert_eq!(run(&["ate"]).status.code(), Some(1));
    assert_eq!(run(&["ate", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", "--preset", "no-such-preset"])
            .status
            .code(),
        Some(1)
    );
    let o = bin()
        .env("TARGETKIT_THREADS", "zero")
        .args(["simulate", "--preset", "mentoring-like"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn empty_arm_is_a_computation_error() {
    let tmp = TempDir::new().unwrap();
    let data = write(
        tmp.path(),
        "d.csv",
        "arm,outcome,x\ncontrol,0,1\ncontrol,1,2\ncontrol,0,3\ntreated,1,4\ntreated,0,5\ntreated,1,6\n",
    );
    let schema = write(
        tmp.path(),
        "s.json",
        r#"{"columns": {"arm": "arm", "outcome": "outcome", "x": "covariate:numeric"},
            "arms": ["control", "treated", "other"], "control": "control", "binary_outcome": true}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "cate",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--format",
        "json",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(files_in(&out).is_empty());
}

#[test]
fn learn_then_evaluate_round_trips_the_tree() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "pooled-like", 8);
    let out = tmp.path().join("learn");
    let o = run(&[
        "policy",
        "learn",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let learned = read_json(&out.join("policy-learn.json"));
    let cfg = write(
        tmp.path(),
        "eval.json",
        &format!(
            r#"{{"seed": 4, "policy": {{"policy_file": "{}"}}}}"#,
            s(&out.join("tree.json"))
        ),
    );
    let eval_out = tmp.path().join("eval");
    let o = run(&[
        "policy",
        "evaluate",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--config",
        s(&cfg),
        "--out",
        s(&eval_out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let evaluated = read_json(&eval_out.join("policy-evaluate.json"));
    // Same seed, same scores: the stored tree has the learned value.
    assert_eq!(learned["result"]["value"], evaluated["result"]["value"]);
}

#[test]
fn rule_policy_evaluates_and_assign_respects_caps() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "pooled-like", 9);
    let rule = write(
        tmp.path(),
        "rule.json",
        r#"{"type": "rule", "groups": [
              {"name": "G1", "all": [{"column": "grad", "op": "eq", "value": 0},
                                     {"column": "warsaw", "op": "eq", "value": 0},
                                     {"column": "ux", "op": "eq", "value": 0}], "action": "mentoring"}
            ], "catch_all_action": "challenges"}"#,
    );
    let cfg = write(
        tmp.path(),
        "cfg.json",
        &format!(
            r#"{{"policy": {{"policy_file": "{}", "capacities": {{"mode": "count", "limits": {{"mentoring": 50, "challenges": 100}}}}}}}}"#,
            s(&rule)
        ),
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "policy",
        "evaluate",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "policy",
        "assign",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("policy-assign.json"));
    for pair in r["result"]["counts"].as_array().unwrap() {
        let (arm, n) = (pair[0].as_str().unwrap(), pair[1].as_u64().unwrap());
        match arm {
            "mentoring" => assert!(n <= 50),
            "challenges" => assert!(n <= 100),
            _ => {}
        }
    }
    let csv = std::fs::read_to_string(out.join("assignment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 708);
}

#[test]
fn cate_csv_feeds_assign() {
    let tmp = TempDir::new().unwrap();
    let (data, schema) = simulate(tmp.path(), "challenges-like", 2);
    let out = tmp.path().join("out");
    let o = run(&[
        "cate",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--out",
        s(&out),
        "--format",
        "md",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), ["cate.md", "cates.csv"]);
    let cfg = write(
        tmp.path(),
        "cfg.json",
        &format!(
            r#"{{"policy": {{"cates": "{}", "capacities": {{"limits": {{"challenges": 0.25}}}}}}}}"#,
            s(&out.join("cates.csv"))
        ),
    );
    let o = run(&[
        "policy",
        "assign",
        "--input",
        s(&data),
        "--schema",
        s(&schema),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("policy-assign.json"));
    assert_eq!(r["result"]["caps"][0][1], 102);
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let (a, _) = simulate(&tmp.path().join("a"), "challenges-like", 1);
    let (b, _) = simulate(&tmp.path().join("b"), "challenges-like", 1);
    let (c, _) = simulate(&tmp.path().join("c"), "challenges-like", 2);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}
