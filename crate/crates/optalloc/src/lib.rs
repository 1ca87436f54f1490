//! Randomized allocation designs that trade targeting utility against the
//! variance of average-treatment-effect estimates.
//!
//! The pipeline runs from a [`cohort::Cohort`] of scored individuals to a
//! [`constraints::DesignProblem`], solved in the dual by
//! [`dual::solve_dual`]. The multipliers are then frozen into a
//! [`policy::Policy`] that assigns new arrivals one at a time. The
//! [`frontier`] module sweeps the utility floor and benchmarks each design
//! against uniform randomization and regression discontinuity.
//!
//! ```
//! use optalloc::cohort::{Cohort, Individual};
//! use optalloc::constraints::{make_budget_cap, make_utility_floor, DesignProblem};
//! use optalloc::dual::{solve_dual, SolverOptions};
//! use optalloc::policy::Policy;
//!
//! let cohort = Cohort::new(vec![Individual::new("a", 1.0, 1.0), Individual::new("b", 0.0, 0.0)])?;
//! let problem = DesignProblem::ate(&cohort, vec![make_utility_floor(0.45), make_budget_cap(0.5)], 0.05)?;
//! let solution = solve_dual(&problem, &SolverOptions::default())?;
//! let policy = Policy::from_solution(&problem, &solution)?;
//! let p = policy.assign_probability(&Individual::new("new", 1.0, 1.0))?;
//! assert!((p - 0.9).abs() < 1e-3);
//! # Ok::<(), optalloc::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
pub mod config;
pub mod constraints;
pub mod dual;
pub mod error;
pub mod evaluator;
pub mod fairness;
pub mod frontier;
pub mod policy;
pub mod power;

pub use error::{Error, Result};
