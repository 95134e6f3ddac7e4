//! Markdown rendering of result types.

use std::fmt::Write;

use crate::counterfactual::{GroupProfile, GroupValueMatrix, PolicyComparison};
use crate::dr::GroupAteReport;
use crate::mht::RomanoWolfReport;
use crate::pipeline::PipelineReport;
use crate::stats::{BalanceRow, Estimate};

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "n/a".into()
    }
}

fn pval(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "n/a".into()
    }
}

/// `point (se)`.
pub fn estimate_cell(e: &Estimate) -> String {
    format!("{} ({})", num(e.point), num(e.se))
}

fn optional_cell(e: &Option<Estimate>) -> String {
    e.as_ref()
        .map(estimate_cell)
        .unwrap_or_else(|| "n/a".into())
}

/// A pipe table; every row must have as many cells as there are headers.
pub fn table<S: AsRef<str>>(headers: &[S], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let h: Vec<&str> = headers.iter().map(|s| s.as_ref()).collect();
    let _ = writeln!(out, "| {} |", h.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(h.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

pub fn estimates_md(rows: &[(String, Estimate)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, e)| {
            vec![
                label.clone(),
                num(e.point),
                num(e.se),
                format!("[{}, {}]", num(e.ci_low), num(e.ci_high)),
                pval(e.p_value()),
                e.n_treat.to_string(),
                e.n_control.to_string(),
            ]
        })
        .collect();
    table(
        &["estimate", "point", "se", "ci", "p", "n treat", "n control"],
        &body,
    )
}

pub fn balance_md(rows: &[BalanceRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.covariate.clone(),
                num(r.mean_treat),
                num(r.mean_control),
                num(r.smd),
                pval(r.p_value),
            ]
        })
        .collect();
    table(
        &["covariate", "mean treat", "mean control", "smd", "p"],
        &body,
    )
}

pub fn romano_wolf_md(r: &RomanoWolfReport) -> String {
    let body: Vec<Vec<String>> = r
        .results
        .iter()
        .map(|h| {
            vec![
                h.label.clone(),
                estimate_cell(&h.estimate),
                num(h.t),
                pval(h.p_unadjusted),
                pval(h.p_adjusted),
                if h.rejected { "yes" } else { "no" }.into(),
            ]
        })
        .collect();
    let mut out = format!(
        "{} vs {}, {} bootstrap draws, alpha {}\n\n",
        r.treat_arm, r.control_arm, r.reps, r.alpha
    );
    out.push_str(&table(
        &[
            "hypothesis",
            "estimate (se)",
            "t",
            "p",
            "p adjusted",
            "rejected",
        ],
        &body,
    ));
    out
}

pub fn group_ate_md(r: &GroupAteReport) -> String {
    let mut body: Vec<Vec<String>> = r
        .groups
        .iter()
        .map(|g| {
            vec![
                g.name.clone(),
                g.n.to_string(),
                num(g.share),
                optional_cell(&g.estimate),
            ]
        })
        .collect();
    body.push(vec![
        "pooled".into(),
        r.pooled.n_treat.to_string(),
        "1.000".into(),
        estimate_cell(&r.pooled),
    ]);
    table(
        &["group", "n", "share", &format!("effect of {} (se)", r.arm)],
        &body,
    )
}

pub fn group_values_md(m: &GroupValueMatrix) -> String {
    let mut headers = vec!["group".to_string(), "share".into(), "optimal".into()];
    headers.extend(m.columns.iter().map(|c| format!("under {c}")));
    headers.extend(m.contrasts.iter().cloned());
    let body: Vec<Vec<String>> = m
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.group.clone(), num(r.share), optional_cell(&r.optimal)];
            row.extend(r.under.iter().map(optional_cell));
            row.extend(r.contrasts.iter().map(optional_cell));
            row
        })
        .collect();
    table(&headers, &body)
}

pub fn comparison_md(c: &PolicyComparison) -> String {
    let mut headers = vec!["pool".to_string()];
    headers.extend(c.policies.iter().map(|p| p.name.clone()));
    let mut body = Vec::new();
    for pool in &c.pools {
        let mut row = vec![format!("value {pool}")];
        let mut shares = vec![format!("share {pool}")];
        for p in &c.policies {
            let v = p.pools.iter().find(|v| &v.pool == pool);
            row.push(
                v.map(|v| estimate_cell(&v.value))
                    .unwrap_or_else(|| "n/a".into()),
            );
            shares.push(v.map(|v| num(v.share)).unwrap_or_else(|| "n/a".into()));
        }
        body.push(row);
        body.push(shares);
    }
    let mut out = table(&headers, &body);
    if !c.differences.is_empty() {
        out.push('\n');
        let mut dh = vec!["difference".to_string()];
        dh.extend(c.pools.iter().cloned());
        let rows: Vec<Vec<String>> = c
            .differences
            .iter()
            .map(|d| {
                let mut row = vec![format!("{} - {}", d.first, d.other)];
                for pool in &c.pools {
                    row.push(
                        d.pools
                            .iter()
                            .find(|p| &p.pool == pool)
                            .map(|p| {
                                format!(
                                    "{} [{}%]",
                                    estimate_cell(&p.difference),
                                    format_pct(p.relative_gain_pct)
                                )
                            })
                            .unwrap_or_else(|| "n/a".into()),
                    );
                }
                row
            })
            .collect();
        out.push_str(&table(&dh, &rows));
    }
    out
}

fn format_pct(v: f64) -> String {
    if v.is_finite() {
        format!("{v:+.1}")
    } else {
        "n/a".into()
    }
}

pub fn profile_md(profile: &[GroupProfile]) -> String {
    let Some(first) = profile.first() else {
        return String::new();
    };
    let mut headers = vec!["covariate".to_string()];
    headers.extend(profile.iter().map(|g| format!("{} (n={})", g.group, g.n)));
    let body: Vec<Vec<String>> = first
        .covariates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut row = vec![c.covariate.clone()];
            row.extend(profile.iter().map(|g| {
                let m = &g.covariates[j];
                format!("{} ({})", num(m.mean), num(m.se))
            }));
            row
        })
        .collect();
    table(&headers, &body)
}

pub fn pipeline_md(r: &PipelineReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Outcome model\n");
    let rows: Vec<Vec<String>> = r
        .selection
        .candidates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            vec![
                c.kind.clone(),
                format!("{:.5}", c.mse),
                format!("{:.5}", c.se_vs_best),
                if k == r.selection.chosen { "yes" } else { "" }.into(),
            ]
        })
        .collect();
    out.push_str(&table(
        &["learner", "oof mse", "se vs best", "chosen"],
        &rows,
    ));
    let _ = writeln!(out, "\n## Propensity overlap\n");
    let rows: Vec<Vec<String>> = r
        .overlap
        .iter()
        .map(|o| {
            vec![
                o.arm.clone(),
                num(o.min),
                num(o.max),
                num(o.mean),
                o.clipped.to_string(),
            ]
        })
        .collect();
    out.push_str(&table(&["arm", "min", "max", "mean", "clipped"], &rows));
    let _ = writeln!(out, "\n## Average effects\n");
    let est: Vec<(String, Estimate)> = r
        .ate
        .iter()
        .map(|a| (a.arm.clone(), a.estimate.clone()))
        .collect();
    out.push_str(&estimates_md(&est));
    let _ = writeln!(out, "\n## Assignment\n");
    let rows: Vec<Vec<String>> = r
        .assignment_counts
        .iter()
        .map(|(a, c)| vec![a.clone(), c.to_string(), num(*c as f64 / r.n_rows as f64)])
        .collect();
    out.push_str(&table(&["arm", "assigned", "share"], &rows));
    let _ = writeln!(out, "\nsum of predicted effects: {}", num(r.objective));
    let _ = writeln!(out, "\n## Value by assignment group\n");
    out.push_str(&group_values_md(&r.group_values));
    let _ = writeln!(out, "\n## Policy comparison\n");
    out.push_str(&comparison_md(&r.comparison));
    let _ = writeln!(out, "\n## Covariate profile\n");
    out.push_str(&profile_md(&r.profile));
    if !r.notes.is_empty() {
        let _ = writeln!(out, "\n## Notes\n");
        for n in &r.notes {
            let _ = writeln!(out, "- {n}");
        }
    }
    out
}
