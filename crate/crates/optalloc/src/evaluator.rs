//! Utility metrics, efficiency-bound variances and Monte Carlo trials.
//!
//! Policy-level entry points evaluate on the eval split when the cohort has
//! one and on the whole cohort otherwise. The `*_from_probs` variants take
//! an explicit probability vector aligned with the cohort they are given.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, OutcomeModel, Split};
use crate::constraints::Estimand;
use crate::dual::surrogate;
use crate::error::{Error, Result};
use crate::policy::Policy;

/// The cohort that reports are computed on.
pub fn evaluation_split(cohort: &Cohort) -> Result<Cohort> {
    if cohort.has_split(Split::Eval) {
        cohort.eval()
    } else {
        log::warn!("cohort has no eval split; evaluating on all {} rows", cohort.len());
        Ok(cohort.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupUtility {
    pub size: usize,
    pub expected_utility: f64,
    pub recall: f64,
    pub budget_use: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// `mean(p u)`.
    pub expected_utility: f64,
    /// `sum(p mu0) / sum(mu0)`: expected share of adverse baseline outcomes
    /// that receive treatment.
    pub recall: f64,
    pub budget_use: f64,
    pub groups: BTreeMap<String, GroupUtility>,
}

fn group_utility<'a>(rows: impl Iterator<Item = (f64, f64, f64)> + 'a) -> GroupUtility {
    let (mut n, mut pu, mut pm, mut m, mut p_sum) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for (p, u, mu0) in rows {
        n += 1;
        pu += p * u;
        pm += p * mu0;
        m += mu0;
        p_sum += p;
    }
    let nf = n.max(1) as f64;
    GroupUtility {
        size: n,
        expected_utility: pu / nf,
        recall: if m > 0.0 { pm / m } else { 0.0 },
        budget_use: p_sum / nf,
    }
}

pub fn utility_report_from_probs(cohort: &Cohort, probs: &[f64]) -> Result<UtilityReport> {
    check_aligned(cohort, probs)?;
    let all = group_utility(cohort.iter().zip(probs).map(|(i, p)| (*p, i.u, i.mu0)));
    let mut labels: Vec<&str> = cohort.iter().filter_map(|i| i.group.as_deref()).collect();
    labels.sort_unstable();
    labels.dedup();
    let groups = labels
        .into_iter()
        .map(|g| {
            let rows = cohort
                .iter()
                .zip(probs)
                .filter(move |(i, _)| i.group.as_deref() == Some(g))
                .map(|(i, p)| (*p, i.u, i.mu0));
            (g.to_string(), group_utility(rows))
        })
        .collect();
    Ok(UtilityReport {
        expected_utility: all.expected_utility,
        recall: all.recall,
        budget_use: all.budget_use,
        groups,
    })
}

pub fn utility_report(policy: &Policy, cohort: &Cohort) -> Result<UtilityReport> {
    let eval = evaluation_split(cohort)?;
    utility_report_from_probs(&eval, &policy.probabilities(&eval)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum VarianceSource {
    /// Exact Bernoulli variances from the simulated outcome model.
    Model { beta: f64 },
    /// Conditional outcome variances bounded by `c`.
    Bound { c: f64 },
}

impl VarianceSource {
    pub fn model(model: &OutcomeModel) -> Self {
        VarianceSource::Model { beta: model.beta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// Efficiency bound, or `C * surrogate` under a variance bound.
    pub v_ate: f64,
    /// Per-individual contributions over the estimand's population, in
    /// cohort order; zero for individuals outside it.
    pub pointwise: Vec<f64>,
    /// `E[1/p + 1/(1-p) | X in S]`.
    pub surrogate: f64,
    pub variance_bound_c: Option<f64>,
    pub source: VarianceSource,
    /// Number of individuals counted toward the estimand.
    pub support: usize,
}

pub fn efficiency_variance_from_probs(
    cohort: &Cohort,
    probs: &[f64],
    estimand: &Estimand,
    source: VarianceSource,
) -> Result<VarianceReport> {
    check_aligned(cohort, probs)?;
    let inside: Vec<bool> = cohort.iter().map(|i| estimand.contains(i)).collect();
    let support = inside.iter().filter(|b| **b).count();
    if support == 0 {
        return Err(Error::InsufficientData("no evaluation rows in the target population".into()));
    }
    let k = support as f64;
    let surrogate_mean = probs
        .iter()
        .zip(&inside)
        .filter(|(_, s)| **s)
        .map(|(p, _)| surrogate(*p))
        .sum::<f64>()
        / k;
    match source {
        VarianceSource::Model { beta } => {
            let model = OutcomeModel::new(beta)?;
            let tau = cohort
                .iter()
                .zip(&inside)
                .filter(|(_, s)| **s)
                .map(|(i, _)| model.tau_x(i.mu0))
                .sum::<f64>()
                / k;
            let pointwise: Vec<f64> = cohort
                .iter()
                .zip(probs)
                .zip(&inside)
                .map(|((i, p), s)| {
                    if !*s {
                        return 0.0;
                    }
                    let dev = model.tau_x(i.mu0) - tau;
                    model.var1(i.mu0) / p + model.var0(i.mu0) / (1.0 - p) - dev * dev
                })
                .collect();
            let v_ate = pointwise.iter().sum::<f64>() / k;
            Ok(VarianceReport {
                v_ate,
                pointwise,
                surrogate: surrogate_mean,
                variance_bound_c: None,
                source,
                support,
            })
        }
        VarianceSource::Bound { c } => {
            if !(c > 0.0) {
                return Err(Error::Config(format!("variance bound {c} must be positive")));
            }
            let pointwise = probs
                .iter()
                .zip(&inside)
                .map(|(p, s)| if *s { c * surrogate(*p) } else { 0.0 })
                .collect();
            Ok(VarianceReport {
                v_ate: c * surrogate_mean,
                pointwise,
                surrogate: surrogate_mean,
                variance_bound_c: Some(c),
                source,
                support,
            })
        }
    }
}

pub fn efficiency_variance(
    policy: &Policy,
    cohort: &Cohort,
    source: VarianceSource,
) -> Result<VarianceReport> {
    let eval = evaluation_split(cohort)?;
    let probs = policy.probabilities(&eval)?;
    efficiency_variance_from_probs(&eval, &probs, &policy.estimand, source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ipw,
    Aipw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSimulation {
    /// Estimates of the reduction `E[Y(0) - Y(1)]`, one per replicate.
    pub ate_estimates: Vec<f64>,
    pub mean: f64,
    /// Sample variance across replicates.
    pub empirical_var: f64,
    pub estimator: Estimator,
}

impl TrialSimulation {
    pub fn standard_error(&self) -> f64 {
        (self.empirical_var / self.ate_estimates.len() as f64).sqrt()
    }
}

/// Replicates trials on a fixed cohort: each replicate draws assignments
/// and potential outcomes from its own seed.
pub fn simulate_trial_from_probs(
    cohort: &Cohort,
    probs: &[f64],
    model: &OutcomeModel,
    estimator: Estimator,
    replicates: usize,
    seed: u64,
) -> Result<TrialSimulation> {
    check_aligned(cohort, probs)?;
    if replicates < 2 {
        return Err(Error::Config("at least two replicates are required".into()));
    }
    let n = cohort.len() as f64;
    let ate_estimates: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let mut total = 0.0;
            for (ind, &p) in cohort.iter().zip(probs) {
                let treated = rng.random::<f64>() < p;
                let v: f64 = rng.random();
                let mu1 = model.mu1(ind.mu0);
                let y0 = if v < ind.mu0 { 1.0 } else { 0.0 };
                let y1 = if v < mu1 { 1.0 } else { 0.0 };
                total += match (estimator, treated) {
                    (Estimator::Ipw, true) => -y1 / p,
                    (Estimator::Ipw, false) => y0 / (1.0 - p),
                    (Estimator::Aipw, true) => (ind.mu0 - mu1) - (y1 - mu1) / p,
                    (Estimator::Aipw, false) => (ind.mu0 - mu1) + (y0 - ind.mu0) / (1.0 - p),
                };
            }
            total / n
        })
        .collect();
    let m = ate_estimates.len() as f64;
    let mean = ate_estimates.iter().sum::<f64>() / m;
    let empirical_var = ate_estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(TrialSimulation {
        ate_estimates,
        mean,
        empirical_var,
        estimator,
    })
}

pub fn simulate_trial(
    policy: &Policy,
    cohort: &Cohort,
    model: &OutcomeModel,
    estimator: Estimator,
    replicates: usize,
    seed: u64,
) -> Result<TrialSimulation> {
    let eval = evaluation_split(cohort)?;
    let probs = policy.probabilities(&eval)?;
    simulate_trial_from_probs(&eval, &probs, model, estimator, replicates, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBin {
    pub u_lo: f64,
    pub u_hi: f64,
    pub count: usize,
    /// Mean pointwise contribution in the bin over the population mean.
    pub relative_variance: f64,
}

/// Equal-width bins over the observed range of `u`; empty bins are
/// dropped, so the count-weighted mean of the curve is exactly one.
pub fn pointwise_variance_curve_from_report(
    cohort: &Cohort,
    report: &VarianceReport,
    estimand: &Estimand,
    bins: usize,
) -> Result<Vec<VarianceBin>> {
    if bins < 2 {
        return Err(Error::Config("at least two bins are required".into()));
    }
    let rows: Vec<(f64, f64)> = cohort
        .iter()
        .zip(&report.pointwise)
        .filter(|(i, _)| estimand.contains(i))
        .map(|(i, v)| (i.u, *v))
        .collect();
    let overall = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut sums = vec![(0usize, 0.0f64); bins];
    for (u, v) in &rows {
        let k = (((u - lo) / width) as usize).min(bins - 1);
        sums[k].0 += 1;
        sums[k].1 += v;
    }
    Ok(sums
        .iter()
        .enumerate()
        .filter(|(_, (c, _))| *c > 0)
        .map(|(k, (c, s))| VarianceBin {
            u_lo: lo + k as f64 * width,
            u_hi: lo + (k + 1) as f64 * width,
            count: *c,
            relative_variance: s / *c as f64 / overall,
        })
        .collect())
}

pub fn pointwise_variance_curve(
    policy: &Policy,
    cohort: &Cohort,
    model: &OutcomeModel,
    bins: usize,
) -> Result<Vec<VarianceBin>> {
    let eval = evaluation_split(cohort)?;
    let probs = policy.probabilities(&eval)?;
    let report =
        efficiency_variance_from_probs(&eval, &probs, &policy.estimand, VarianceSource::model(model))?;
    pointwise_variance_curve_from_report(&eval, &report, &policy.estimand, bins)
}

fn check_aligned(cohort: &Cohort, probs: &[f64]) -> Result<()> {
    if cohort.len() != probs.len() {
        return Err(Error::Config(format!(
            "{} probabilities for {} individuals",
            probs.len(),
            cohort.len()
        )));
    }
    Ok(())
}
