//! JSON design configuration.
//!
//! ```json
//! {"constraints": [{"kind": "utility_floor", "c": 0.25},
//!                  {"kind": "budget_cap", "b": 0.3},
//!                  {"kind": "fairness", "metric": "utility", "eps": 0.02, "groups": ["A", "B"]}],
//!  "gamma": 0.01,
//!  "estimand": {"type": "ate"}}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::constraints::{
    make_budget_cap, make_fairness_pair, make_utility_floor, ConstraintKind, ConstraintSpec, Estimand,
    EstimandSpec, FairnessMetric, Term,
};
use crate::dual::SolverOptions;
use crate::error::{Error, Result};
use crate::frontier::FrontierTemplate;

pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_FAIRNESS_EPS: f64 = 0.02;

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_eps() -> f64 {
    DEFAULT_FAIRNESS_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    UtilityFloor {
        c: f64,
    },
    BudgetCap {
        b: f64,
    },
    Fairness {
        metric: FairnessMetric,
        #[serde(default = "default_eps")]
        eps: f64,
        groups: [String; 2],
    },
    /// `mean(sum_k offset_k(u) + slope_k(u) p) <= rhs`, already normalized.
    GenericLinear {
        label: String,
        terms: Vec<Term>,
        rhs: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub estimand: EstimandSpec,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            constraints: Vec::new(),
            gamma: DEFAULT_GAMMA,
            estimand: EstimandSpec::Ate,
            solver: SolverOptions::default(),
        }
    }
}

impl DesignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::Config(format!("gamma {} outside (0, 0.5)", self.gamma)));
        }
        for c in &self.constraints {
            match c {
                ConstraintConfig::UtilityFloor { c } if !(0.0..=1.0).contains(c) => {
                    return Err(Error::Config(format!("utility level {c} outside [0, 1]")))
                }
                ConstraintConfig::BudgetCap { b } if !(*b > 0.0 && *b <= 1.0) => {
                    return Err(Error::Config(format!("budget {b} outside (0, 1]")))
                }
                ConstraintConfig::Fairness { eps, groups, .. } if !(*eps >= 0.0) || groups[0] == groups[1] => {
                    return Err(Error::Config("fairness needs eps >= 0 and two distinct groups".into()))
                }
                ConstraintConfig::GenericLinear { rhs, .. } if !rhs.is_finite() => {
                    return Err(Error::Config("generic constraint rhs must be finite".into()))
                }
                _ => {}
            }
        }
        if self.constraints.iter().filter(|c| matches!(c, ConstraintConfig::BudgetCap { .. })).count() > 1 {
            return Err(Error::Config("at most one budget cap".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> Option<f64> {
        self.constraints.iter().find_map(|c| match c {
            ConstraintConfig::BudgetCap { b } => Some(*b),
            _ => None,
        })
    }

    pub fn utility_floor(&self) -> Option<f64> {
        self.constraints.iter().find_map(|c| match c {
            ConstraintConfig::UtilityFloor { c } => Some(*c),
            _ => None,
        })
    }

    /// Constraint specs normalized against the design sample.
    pub fn build_constraints(&self, design: &Cohort) -> Result<Vec<ConstraintSpec>> {
        let mut out = Vec::new();
        for c in &self.constraints {
            match c {
                ConstraintConfig::UtilityFloor { c } => out.push(make_utility_floor(*c)),
                ConstraintConfig::BudgetCap { b } => out.push(make_budget_cap(*b)),
                ConstraintConfig::Fairness { metric, eps, groups } => {
                    out.extend(make_fairness_pair(*metric, (&groups[0], &groups[1]), *eps, design)?)
                }
                ConstraintConfig::GenericLinear { label, terms, rhs } => out.push(ConstraintSpec {
                    kind: ConstraintKind::GenericLinear,
                    label: label.clone(),
                    terms: terms.clone(),
                    rhs: *rhs,
                }),
            }
        }
        Ok(out)
    }

    pub fn build_estimand(&self, design: &Cohort) -> Result<Estimand> {
        self.estimand.resolve(design)
    }

    /// Template for a frontier sweep: the budget cap plus every constraint
    /// other than the utility floor, which the sweep supplies.
    pub fn frontier_template(&self, design: &Cohort) -> Result<FrontierTemplate> {
        let budget = self
            .budget()
            .ok_or_else(|| Error::Config("a frontier needs a budget cap".into()))?;
        let extra = self
            .build_constraints(design)?
            .into_iter()
            .filter(|c| !matches!(c.kind, ConstraintKind::UtilityFloor | ConstraintKind::BudgetCap))
            .collect();
        Ok(FrontierTemplate {
            budget,
            gamma: self.gamma,
            estimand: self.build_estimand(design)?,
            extra,
            solver: self.solver.clone(),
        })
    }
}
