//! Frozen assignment policies.
//!
//! A [`Policy`] keeps the solved multipliers together with the constraint
//! definitions (including every normalization constant frozen from the
//! design sample), so that the probability for a new arrival is computed
//! from that individual alone.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{Cohort, Individual};
use crate::constraints::{ConstraintSpec, DesignProblem, Estimand};
use crate::dual::{inner_solve_weighted, DualSolution};
use crate::error::{Error, Result};

pub const POLICY_FORMAT: &str = "optalloc-policy";
pub const POLICY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the design sample, constraints, gamma and estimand.
    pub problem_hash: String,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub lambda: Vec<f64>,
    pub constraints: Vec<ConstraintSpec>,
    pub gamma: f64,
    pub estimand: Estimand,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Treated => "treated",
            Arm::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: String,
    /// The propensity used for the draw.
    pub p: f64,
    pub arm: Arm,
}

impl Policy {
    pub fn from_solution(problem: &DesignProblem, solution: &DualSolution) -> Result<Self> {
        if solution.lambda.len() != problem.constraints.len() {
            return Err(Error::Config("multiplier count does not match constraints".into()));
        }
        Ok(Self {
            lambda: solution.lambda.clone(),
            constraints: problem.constraints.clone(),
            gamma: problem.gamma,
            estimand: problem.estimand.clone(),
            provenance: Provenance {
                problem_hash: problem_hash(problem)?,
                kkt_residual: solution.kkt_residual,
                iterations: solution.iterations,
                converged: solution.converged,
            },
        })
    }

    /// The policy with all multipliers at zero: `p = 1/2` under the ATE.
    pub fn unconstrained(gamma: f64) -> Self {
        Self {
            lambda: Vec::new(),
            constraints: Vec::new(),
            gamma,
            estimand: Estimand::Ate,
            provenance: Provenance {
                problem_hash: String::new(),
                kkt_residual: 0.0,
                iterations: 0,
                converged: true,
            },
        }
    }

    /// `sum_j lambda_j slope_j(X)`.
    pub fn aggregated_coefficient(&self, ind: &Individual) -> Result<f64> {
        let mut a = 0.0;
        for (l, c) in self.lambda.iter().zip(&self.constraints) {
            if *l != 0.0 {
                a += l * c.coefficients(ind)?.1;
            } else if c.uses_groups() && ind.group.is_none() {
                return Err(Error::MissingGroup {
                    id: ind.id.clone(),
                });
            }
        }
        Ok(a)
    }

    pub fn assign_probability(&self, ind: &Individual) -> Result<f64> {
        let a = self.aggregated_coefficient(ind)?;
        Ok(inner_solve_weighted(a, self.estimand.weight(ind), self.gamma))
    }

    pub fn probabilities(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        cohort.iter().map(|i| self.assign_probability(i)).collect()
    }

    /// Bernoulli draw at `assign_probability`, reproducible from
    /// `(seed, id)` alone.
    pub fn draw_assignment(&self, ind: &Individual, seed: u64) -> Result<Assignment> {
        let p = self.assign_probability(ind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(arrival_seed(seed, &ind.id));
        let arm = if rng.random::<f64>() < p {
            Arm::Treated
        } else {
            Arm::Control
        };
        Ok(Assignment {
            id: ind.id.clone(),
            p,
            arm,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PolicyFileRef {
            format: POLICY_FORMAT,
            version: POLICY_VERSION,
            policy: self,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(POLICY_FORMAT) {
            return Err(Error::Corrupt("missing policy format tag".into()));
        }
        match value.get("version") {
            Some(serde_json::Value::Number(v)) if v.as_u64() == Some(POLICY_VERSION as u64) => {}
            Some(other) => {
                return Err(Error::Version {
                    found: other.to_string(),
                    expected: POLICY_VERSION,
                })
            }
            None => {
                return Err(Error::Version {
                    found: "none".into(),
                    expected: POLICY_VERSION,
                })
            }
        }
        let doc: PolicyFile =
            serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        Ok(doc.policy)
    }
}

#[derive(Serialize)]
struct PolicyFileRef<'a> {
    format: &'a str,
    version: u32,
    policy: &'a Policy,
}

#[derive(Deserialize)]
struct PolicyFile {
    policy: Policy,
}

pub fn export_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(policy.to_json()?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn import_policy(path: impl AsRef<Path>) -> Result<Policy> {
    let text = std::fs::read_to_string(path)?;
    Policy::from_json(&text)
}

fn arrival_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

fn problem_hash(problem: &DesignProblem) -> Result<String> {
    let mut h = Sha256::new();
    for ind in problem.cohort.iter() {
        h.update(ind.u.to_le_bytes());
        h.update(ind.mu0.to_le_bytes());
        h.update(ind.group.as_deref().unwrap_or("").as_bytes());
        h.update([0u8]);
    }
    h.update(serde_json::to_vec(&problem.constraints)?);
    h.update(problem.gamma.to_le_bytes());
    h.update(serde_json::to_vec(&problem.estimand)?);
    Ok(hex::encode(h.finalize()))
}

/// Writes the assignment log header `id,p,arm,seed`.
pub fn assignment_log_writer<W: Write>(writer: W) -> Result<csv::Writer<W>> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "p", "arm", "seed"])?;
    Ok(wtr)
}

pub fn write_assignment<W: Write>(wtr: &mut csv::Writer<W>, a: &Assignment, seed: u64) -> Result<()> {
    wtr.write_record([a.id.as_str(), &a.p.to_string(), a.arm.as_str(), &seed.to_string()])?;
    Ok(())
}
