//! Cost of group fairness constraints along the frontier.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::constraints::{check_feasibility, group_gap, make_fairness_pair, DesignProblem, FairnessMetric, Feasibility};
use crate::dual::solve_dual;
use crate::error::{Error, Result};
use crate::evaluator::{evaluation_split, utility_report_from_probs};
use crate::frontier::{design_split, FrontierTemplate};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedVariant {
    /// Surrogate objective on the design sample.
    pub objective: f64,
    pub recall_g0: f64,
    pub recall_g1: f64,
    /// `E[p w | G0] - E[p w | G1]` on the design sample.
    pub gap: f64,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessRow {
    pub c: f64,
    pub base: Option<SolvedVariant>,
    pub fair: Option<SolvedVariant>,
    /// `100 (fair - base) / base` on the surrogate objective.
    pub pct_variance_increase: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub metric: FairnessMetric,
    pub groups: (String, String),
    pub eps: f64,
}

fn solve_variant(
    design: &Cohort,
    eval: &Cohort,
    template: &FrontierTemplate,
    spec: &FairnessSpec,
    c: f64,
    fair: bool,
) -> Result<std::result::Result<SolvedVariant, String>> {
    let mut constraints = template.constraints_at(c);
    let groups = (spec.groups.0.as_str(), spec.groups.1.as_str());
    if fair {
        constraints.extend(make_fairness_pair(spec.metric, groups, spec.eps, design)?);
    }
    let problem = DesignProblem::new(design, constraints, template.gamma, template.estimand.clone())?;
    if let Feasibility::Infeasible { label, .. } = check_feasibility(&problem)? {
        return Ok(Err(format!("infeasible: {label}")));
    }
    let solution = match solve_dual(&problem, &template.solver) {
        Ok(s) => s,
        Err(e @ Error::Divergence { .. }) => return Ok(Err(e.to_string())),
        Err(e) => return Err(e),
    };
    let policy = Policy::from_solution(&problem, &solution)?;
    let design_probs = policy.probabilities(design)?;
    let gap = group_gap(spec.metric, groups, design, &design_probs)?;
    let report = utility_report_from_probs(eval, &policy.probabilities(eval)?)?;
    let recall = |g: &str| report.groups.get(g).map_or(0.0, |r| r.recall);
    Ok(Ok(SolvedVariant {
        objective: solution.objective,
        recall_g0: recall(groups.0),
        recall_g1: recall(groups.1),
        gap,
        policy,
    }))
}

/// Solves every utility level with and without the fairness pair and
/// reports per-group recall on the eval split and the relative increase of
/// the objective. Levels where either variant is infeasible are kept with
/// a note.
pub fn fairness_comparison(
    cohort: &Cohort,
    template: &FrontierTemplate,
    c_grid: &[f64],
    spec: &FairnessSpec,
) -> Result<Vec<FairnessRow>> {
    if !(spec.eps >= 0.0) {
        return Err(Error::Config(format!("fairness tolerance {} must be >= 0", spec.eps)));
    }
    let design = design_split(cohort)?;
    let eval = evaluation_split(cohort)?;
    for g in [&spec.groups.0, &spec.groups.1] {
        if !design.iter().any(|i| i.group.as_deref() == Some(g.as_str())) {
            return Err(Error::Config(format!("group `{g}` absent from the design sample")));
        }
    }
    c_grid
        .par_iter()
        .map(|&c| {
            let base = solve_variant(&design, &eval, template, spec, c, false)?;
            let fair = solve_variant(&design, &eval, template, spec, c, true)?;
            let pct = match (&base, &fair) {
                (Ok(b), Ok(f)) => Some(100.0 * (f.objective - b.objective) / b.objective),
                _ => None,
            };
            let note = [base.as_ref().err(), fair.as_ref().err()]
                .into_iter()
                .zip(["base", "fair"])
                .filter_map(|(e, which)| e.map(|m| format!("{which}: {m}")))
                .reduce(|a, b| format!("{a}; {b}"));
            Ok(FairnessRow {
                c,
                base: base.ok(),
                fair: fair.ok(),
                pct_variance_increase: pct,
                note,
            })
        })
        .collect()
}

/// One row per level:
/// `c,recall_g0_base,recall_g1_base,recall_g0_fair,recall_g1_fair,objective_base,objective_fair,pct_variance_increase`.
pub fn write_fairness_table<W: Write>(rows: &[FairnessRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "c",
        "recall_g0_base",
        "recall_g1_base",
        "recall_g0_fair",
        "recall_g1_fair",
        "objective_base",
        "objective_fair",
        "pct_variance_increase",
    ])?;
    let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.c.to_string(),
            f(r.base.as_ref().map(|b| b.recall_g0)),
            f(r.base.as_ref().map(|b| b.recall_g1)),
            f(r.fair.as_ref().map(|b| b.recall_g0)),
            f(r.fair.as_ref().map(|b| b.recall_g1)),
            f(r.base.as_ref().map(|b| b.objective)),
            f(r.fair.as_ref().map(|b| b.objective)),
            f(r.pct_variance_increase),
        ])?;
    }
    w.flush()?;
    Ok(())
}
