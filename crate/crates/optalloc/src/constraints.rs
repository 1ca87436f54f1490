//! Normalized linear-in-`p` constraints and the design problem they define.
//!
//! Every constraint has the form `E[g(p(X), X)] <= rhs` where
//! `g(p, X) = offset(X) + slope(X) * p`, `g` stays in `[0, 1]` for `p` in
//! `[0, 1]`, and `|slope(X)| <= 1`. Coefficients are affine in the utility
//! score and may be restricted to members of one group, which covers the
//! utility floor, the budget cap, both fairness families and generic linear
//! constraints with a single representation.

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Individual};
use crate::error::{Error, Result};

/// `constant + per_u * u`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineInU {
    pub constant: f64,
    pub per_u: f64,
}

impl AffineInU {
    pub const ZERO: AffineInU = AffineInU {
        constant: 0.0,
        per_u: 0.0,
    };

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            per_u: 0.0,
        }
    }

    pub fn per_u(k: f64) -> Self {
        Self {
            constant: 0.0,
            per_u: k,
        }
    }

    pub fn at(&self, u: f64) -> f64 {
        self.constant + self.per_u * u
    }
}

/// One additive piece of a constraint function, active for members of
/// `group` (or everyone when `group` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub offset: AffineInU,
    pub slope: AffineInU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    UtilityFloor,
    BudgetCap,
    FairnessUtilityGap,
    FairnessRateGap,
    GenericLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub label: String,
    pub terms: Vec<Term>,
    pub rhs: f64,
}

impl ConstraintSpec {
    /// `(offset, slope)` of `g(., X)` for one individual.
    pub fn coefficients(&self, ind: &Individual) -> Result<(f64, f64)> {
        let mut offset = 0.0;
        let mut slope = 0.0;
        for term in &self.terms {
            let active = match &term.group {
                None => true,
                Some(g) => match &ind.group {
                    Some(label) => label == g,
                    None => {
                        return Err(Error::MissingGroup {
                            id: ind.id.clone(),
                        })
                    }
                },
            };
            if active {
                offset += term.offset.at(ind.u);
                slope += term.slope.at(ind.u);
            }
        }
        Ok((offset, slope))
    }

    pub fn g(&self, p: f64, ind: &Individual) -> Result<f64> {
        let (offset, slope) = self.coefficients(ind)?;
        Ok(offset + slope * p)
    }

    /// Sample mean of `g(p_i, X_i)` over a cohort.
    pub fn mean_value(&self, cohort: &Cohort, probs: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (ind, p) in cohort.iter().zip(probs) {
            total += self.g(*p, ind)?;
        }
        Ok(total / cohort.len() as f64)
    }

    /// `mean g - rhs`; positive values are violations.
    pub fn excess(&self, cohort: &Cohort, probs: &[f64]) -> Result<f64> {
        Ok(self.mean_value(cohort, probs)? - self.rhs)
    }

    pub fn uses_groups(&self) -> bool {
        self.terms.iter().any(|t| t.group.is_some())
    }

    /// Checks `g in [0, 1]` and `|dg/dp| <= 1` on every individual at
    /// `p in {0, gamma, 1/2, 1 - gamma, 1}`.
    pub fn check_normalization(&self, cohort: &Cohort, gamma: f64) -> Result<()> {
        const SLACK: f64 = 1e-12;
        for (row, ind) in cohort.iter().enumerate() {
            let (offset, slope) = self.coefficients(ind)?;
            if slope.abs() > 1.0 + SLACK {
                return Err(Error::Config(format!(
                    "constraint `{}`: |slope| = {} > 1 at row {}",
                    self.label,
                    slope.abs(),
                    row + 1
                )));
            }
            for p in [0.0, gamma, 0.5, 1.0 - gamma, 1.0] {
                let g = offset + slope * p;
                if !(-SLACK..=1.0 + SLACK).contains(&g) {
                    return Err(Error::Config(format!(
                        "constraint `{}`: g = {g} outside [0, 1] at row {} (p = {p})",
                        self.label,
                        row + 1
                    )));
                }
            }
        }
        if !self.rhs.is_finite() {
            return Err(Error::Config(format!("constraint `{}`: rhs not finite", self.label)));
        }
        Ok(())
    }
}

/// `E[p(X) u(X)] >= c`, encoded as `g = 1 - u p <= 1 - c`.
pub fn make_utility_floor(c: f64) -> ConstraintSpec {
    ConstraintSpec {
        kind: ConstraintKind::UtilityFloor,
        label: format!("utility >= {c}"),
        terms: vec![Term {
            group: None,
            offset: AffineInU::constant(1.0),
            slope: AffineInU::per_u(-1.0),
        }],
        rhs: 1.0 - c,
    }
}

/// `E[p(X)] <= b`.
pub fn make_budget_cap(b: f64) -> ConstraintSpec {
    ConstraintSpec {
        kind: ConstraintKind::BudgetCap,
        label: format!("budget <= {b}"),
        terms: vec![Term {
            group: None,
            offset: AffineInU::ZERO,
            slope: AffineInU::constant(1.0),
        }],
        rhs: b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessMetric {
    /// Compares `E[p u | G]`.
    Utility,
    /// Compares `E[p | G]`.
    Rate,
}

impl FairnessMetric {
    fn weight(self) -> AffineInU {
        match self {
            FairnessMetric::Utility => AffineInU::per_u(1.0),
            FairnessMetric::Rate => AffineInU::constant(1.0),
        }
    }

    fn kind(self) -> ConstraintKind {
        match self {
            FairnessMetric::Utility => ConstraintKind::FairnessUtilityGap,
            FairnessMetric::Rate => ConstraintKind::FairnessRateGap,
        }
    }

    pub fn weight_at(self, u: f64) -> f64 {
        self.weight().at(u)
    }
}

/// `|E[p w | G0] - E[p w | G1]| <= eps` as two one-sided constraints.
///
/// Group probabilities and the conditional means of `w` are frozen from
/// `cohort`. Each side is scaled by `s = min(Pr[G0], Pr[G1])` so that the
/// per-individual slopes `s w / Pr[G]` stay within `[-1, 1]`; the `(1 - p)`
/// form of the subtracted group keeps `g` nonnegative.
pub fn make_fairness_pair(
    metric: FairnessMetric,
    groups: (&str, &str),
    eps: f64,
    cohort: &Cohort,
) -> Result<[ConstraintSpec; 2]> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("fairness tolerance {eps} must be >= 0")));
    }
    if groups.0 == groups.1 {
        return Err(Error::Config("fairness groups must differ".into()));
    }
    let stats = |label: &str| -> Result<(f64, f64)> {
        let members: Vec<&Individual> = cohort
            .iter()
            .filter(|i| i.group.as_deref() == Some(label))
            .collect();
        if members.is_empty() {
            return Err(Error::Config(format!("group `{label}` is empty")));
        }
        let prob = members.len() as f64 / cohort.len() as f64;
        let mean_w = members.iter().map(|i| metric.weight_at(i.u)).sum::<f64>()
            / members.len() as f64;
        Ok((prob, mean_w))
    };
    let (p0, w0) = stats(groups.0)?;
    let (p1, w1) = stats(groups.1)?;
    let scale = p0.min(p1);
    let w = metric.weight();
    let scaled = |k: f64| AffineInU {
        constant: w.constant * k,
        per_u: w.per_u * k,
    };
    let side = |(plus, p_plus): (&str, f64), (minus, p_minus, w_minus): (&str, f64, f64)| {
        ConstraintSpec {
            kind: metric.kind(),
            label: format!("gap({plus} - {minus}) <= {eps}"),
            terms: vec![
                Term {
                    group: Some(plus.to_string()),
                    offset: AffineInU::ZERO,
                    slope: scaled(scale / p_plus),
                },
                Term {
                    group: Some(minus.to_string()),
                    offset: scaled(scale / p_minus),
                    slope: scaled(-scale / p_minus),
                },
            ],
            rhs: scale * (eps + w_minus),
        }
    };
    Ok([
        side((groups.0, p0), (groups.1, p1, w1)),
        side((groups.1, p1), (groups.0, p0, w0)),
    ])
}

/// `E[p w | G0] - E[p w | G1]` for given probabilities.
pub fn group_gap(
    metric: FairnessMetric,
    groups: (&str, &str),
    cohort: &Cohort,
    probs: &[f64],
) -> Result<f64> {
    let mean = |label: &str| -> Result<f64> {
        let (mut total, mut count) = (0.0, 0usize);
        for (ind, p) in cohort.iter().zip(probs) {
            if ind.group.as_deref() == Some(label) {
                total += p * metric.weight_at(ind.u);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Config(format!("group `{label}` is empty")));
        }
        Ok(total / count as f64)
    };
    Ok(mean(groups.0)? - mean(groups.1)?)
}

/// Target subpopulation for a group average treatment effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetRule {
    All,
    UAtLeast(f64),
    Group(String),
}

impl SubsetRule {
    pub fn contains(&self, ind: &Individual) -> bool {
        match self {
            SubsetRule::All => true,
            SubsetRule::UAtLeast(t) => ind.u >= *t,
            SubsetRule::Group(g) => ind.group.as_deref() == Some(g.as_str()),
        }
    }
}

/// Estimand with its subset probability frozen from the design sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Estimand {
    Ate,
    Gate { rule: SubsetRule, probability: f64 },
}

impl Estimand {
    pub fn contains(&self, ind: &Individual) -> bool {
        match self {
            Estimand::Ate => true,
            Estimand::Gate { rule, .. } => rule.contains(ind),
        }
    }

    /// Weight of an individual's variance term in the objective:
    /// `1[X in S] / Pr[S]`.
    pub fn weight(&self, ind: &Individual) -> f64 {
        match self {
            Estimand::Ate => 1.0,
            Estimand::Gate { rule, probability } => {
                if rule.contains(ind) {
                    1.0 / probability
                } else {
                    0.0
                }
            }
        }
    }
}

/// Estimand as written in a config, before resolution against a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimandSpec {
    #[default]
    Ate,
    Gate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_at_least: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        top_fraction: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group: Option<String>,
    },
}

impl EstimandSpec {
    pub fn top_fraction(q: f64) -> Self {
        EstimandSpec::Gate {
            u_at_least: None,
            top_fraction: Some(q),
            group: None,
        }
    }

    pub fn resolve(&self, cohort: &Cohort) -> Result<Estimand> {
        let (u_at_least, top_fraction, group) = match self {
            EstimandSpec::Ate => return Ok(Estimand::Ate),
            EstimandSpec::Gate {
                u_at_least,
                top_fraction,
                group,
            } => (u_at_least, top_fraction, group),
        };
        let rule = match (u_at_least, top_fraction, group) {
            (Some(t), None, None) => SubsetRule::UAtLeast(*t),
            (None, Some(q), None) => {
                if !(*q > 0.0 && *q <= 1.0) {
                    return Err(Error::Config(format!("top fraction {q} outside (0, 1]")));
                }
                let mut u = cohort.u_values();
                u.sort_by(|a, b| b.total_cmp(a));
                let k = ((q * u.len() as f64).ceil() as usize).clamp(1, u.len());
                if k == u.len() {
                    SubsetRule::All
                } else {
                    SubsetRule::UAtLeast(u[k - 1])
                }
            }
            (None, None, Some(g)) => SubsetRule::Group(g.clone()),
            _ => {
                return Err(Error::Config(
                    "GATE needs exactly one of u_at_least, top_fraction, group".into(),
                ))
            }
        };
        let hits = cohort.iter().filter(|i| rule.contains(i)).count();
        if hits == 0 {
            return Err(Error::Config("GATE subset is empty on the design sample".into()));
        }
        Ok(Estimand::Gate {
            rule,
            probability: hits as f64 / cohort.len() as f64,
        })
    }
}

/// A cohort (the design sample) together with constraints, the box
/// parameter `gamma` and the estimand.
#[derive(Debug, Clone)]
pub struct DesignProblem<'a> {
    pub cohort: &'a Cohort,
    pub constraints: Vec<ConstraintSpec>,
    pub gamma: f64,
    pub estimand: Estimand,
}

impl<'a> DesignProblem<'a> {
    pub fn new(
        cohort: &'a Cohort,
        constraints: Vec<ConstraintSpec>,
        gamma: f64,
        estimand: Estimand,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::Config(format!("gamma {gamma} outside (0, 0.5)")));
        }
        if let Estimand::Gate { probability, .. } = &estimand {
            if !(*probability > 0.0) {
                return Err(Error::Config("GATE subset has zero probability".into()));
            }
        }
        for c in &constraints {
            c.check_normalization(cohort, gamma)?;
        }
        Ok(Self {
            cohort,
            constraints,
            gamma,
            estimand,
        })
    }

    pub fn ate(cohort: &'a Cohort, constraints: Vec<ConstraintSpec>, gamma: f64) -> Result<Self> {
        Self::new(cohort, constraints, gamma, Estimand::Ate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    /// `witness` is the best achievable value of the offending quantity: the
    /// maximum utility for a utility floor, the minimum budget use for a
    /// budget cap, or the smallest attainable worst-case excess otherwise.
    Infeasible { label: String, witness: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Largest `mean(p u)` subject to `mean(p) <= b` and `p in [gamma, 1 - gamma]`.
///
/// Everyone starts at `gamma`; the remaining budget is handed out in
/// `(1 - 2 gamma)` increments to the highest scores, the last one
/// fractionally. Returns `None` when `b < gamma`.
pub fn max_achievable_utility(u: &[f64], b: f64, gamma: f64) -> Option<f64> {
    if b < gamma || u.is_empty() {
        return None;
    }
    let n = u.len() as f64;
    let total: f64 = u.iter().sum();
    if b >= 1.0 - gamma {
        return Some((1.0 - gamma) * total / n);
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut units = (b - gamma) * n / (1.0 - 2.0 * gamma);
    let mut top = 0.0;
    for v in sorted {
        if units <= 0.0 {
            break;
        }
        let take = units.min(1.0);
        top += take * v;
        units -= take;
    }
    Some(gamma * total / n + (1.0 - 2.0 * gamma) * top / n)
}

pub fn check_feasibility(problem: &DesignProblem) -> Result<Feasibility> {
    let floors: Vec<&ConstraintSpec> = problem
        .constraints
        .iter()
        .filter(|c| c.kind == ConstraintKind::UtilityFloor)
        .collect();
    let caps: Vec<&ConstraintSpec> = problem
        .constraints
        .iter()
        .filter(|c| c.kind == ConstraintKind::BudgetCap)
        .collect();
    let closed_form = floors.len() <= 1
        && caps.len() <= 1
        && floors.len() + caps.len() == problem.constraints.len();
    if closed_form {
        return Ok(closed_form_feasibility(problem, floors.first(), caps.first()));
    }
    auxiliary_feasibility(problem)
}

fn closed_form_feasibility(
    problem: &DesignProblem,
    floor: Option<&&ConstraintSpec>,
    cap: Option<&&ConstraintSpec>,
) -> Feasibility {
    let gamma = problem.gamma;
    let b = cap.map_or(1.0, |c| c.rhs);
    if let Some(cap) = cap {
        if b < gamma {
            return Feasibility::Infeasible {
                label: cap.label.clone(),
                witness: gamma,
            };
        }
    }
    if let Some(floor) = floor {
        let c = 1.0 - floor.rhs;
        let u = problem.cohort.u_values();
        let best = max_achievable_utility(&u, b, gamma).unwrap_or(f64::NEG_INFINITY);
        if c > best + 1e-12 {
            return Feasibility::Infeasible {
                label: floor.label.clone(),
                witness: best,
            };
        }
    }
    Feasibility::Feasible
}

/// Minimizes `sum_j max(0, mean g_j - rhs_j)^2` over the box with
/// accelerated projected gradient and reports the worst remaining excess.
fn auxiliary_feasibility(problem: &DesignProblem) -> Result<Feasibility> {
    const TOL: f64 = 1e-6;
    let cohort = problem.cohort;
    let n = cohort.len();
    let j = problem.constraints.len();
    if j == 0 {
        return Ok(Feasibility::Feasible);
    }
    let (lo, hi) = (problem.gamma, 1.0 - problem.gamma);
    let mut offsets = vec![0.0; j];
    let mut slopes = vec![vec![0.0; n]; j];
    for (k, c) in problem.constraints.iter().enumerate() {
        for (i, ind) in cohort.iter().enumerate() {
            let (o, s) = c.coefficients(ind)?;
            offsets[k] += o / n as f64;
            slopes[k][i] = s;
        }
    }
    let excess = |p: &[f64]| -> Vec<f64> {
        (0..j)
            .map(|k| {
                offsets[k] + slopes[k].iter().zip(p).map(|(a, x)| a * x).sum::<f64>() / n as f64
                    - problem.constraints[k].rhs
            })
            .collect()
    };
    let lipschitz = 2.0
        * slopes
            .iter()
            .map(|row| row.iter().map(|a| a * a).sum::<f64>())
            .sum::<f64>()
        / (n as f64 * n as f64);
    let step = 1.0 / lipschitz.max(1e-12);
    let mut x = vec![0.5; n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = f64::INFINITY;
    for _ in 0..20_000 {
        let e = excess(&y);
        let mut next = y.clone();
        for (i, v) in next.iter_mut().enumerate() {
            let grad: f64 = (0..j)
                .map(|k| 2.0 * e[k].max(0.0) * slopes[k][i] / n as f64)
                .sum();
            *v = (*v - step * grad).clamp(lo, hi);
        }
        let worst = excess(&next).into_iter().fold(f64::NEG_INFINITY, f64::max);
        best = best.min(worst);
        if best <= TOL {
            return Ok(Feasibility::Feasible);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        for i in 0..n {
            y[i] = next[i] + (t - 1.0) / t_next * (next[i] - x[i]);
        }
        x = next;
        t = t_next;
    }
    let e = excess(&x);
    let (worst_k, _) = e
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if *v > acc.1 { (k, *v) } else { acc });
    Ok(Feasibility::Infeasible {
        label: problem.constraints[worst_k].label.clone(),
        witness: best,
    })
}
