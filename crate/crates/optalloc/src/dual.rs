//! Lagrangian dual of the sample design problem.
//!
//! For fixed multipliers `lambda` the Lagrangian separates over individuals:
//! each one minimizes `w f(p) + a p` over `[gamma, 1 - gamma]`, where
//! `f(p) = 1/p + 1/(1 - p)`, `w` is the estimand weight (floored at [`MIN_WEIGHT`]) and
//! `a = sum_j lambda_j slope_j(X)`. The dual function
//! `D(lambda) = mean_i [w_i f(p_i) + sum_j lambda_j (g_j(p_i, X_i) - c_j)]`
//! is concave with supergradient `mean_i g_j(p_i, X_i) - c_j`, and is
//! maximized over `lambda >= 0` by spectral projected gradient ascent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::DesignProblem;
use crate::error::{Error, Result};

/// Lower bound on `f''(p) = 2/p^3 + 2/(1-p)^3` over `(0, 1)`, attained at 1/2.
pub const SURROGATE_CURVATURE: f64 = 32.0;

const CHUNK: usize = 2048;

/// Per-individual variance surrogate `1/p + 1/(1 - p)`.
pub fn surrogate(p: f64) -> f64 {
    1.0 / p + 1.0 / (1.0 - p)
}

fn surrogate_slope(p: f64) -> f64 {
    -1.0 / (p * p) + 1.0 / ((1.0 - p) * (1.0 - p))
}

fn surrogate_curvature(p: f64) -> f64 {
    2.0 / (p * p * p) + 2.0 / ((1.0 - p) * (1.0 - p) * (1.0 - p))
}

/// Minimizer of `f(p) + a p` over `[gamma, 1 - gamma]`.
///
/// The derivative `f'(p) + a` is strictly increasing, so the minimizer is the
/// clamp of its unique root, found by Newton iteration. Positive
/// coefficients are reflected (`p -> 1 - p`) so both signs share one path.
pub fn inner_solve(a: f64, gamma: f64) -> f64 {
    let (lo_bound, hi_bound) = (gamma, 1.0 - gamma);
    if a > 0.0 {
        if surrogate_slope(lo_bound) + a >= 0.0 {
            return lo_bound;
        }
        return (1.0 - inner_solve(-a, gamma)).clamp(lo_bound, hi_bound);
    }
    // a <= 0 puts the root in [1/2, 1).
    if surrogate_slope(hi_bound) + a <= 0.0 {
        return hi_bound;
    }
    if a == 0.0 {
        return 0.5;
    }
    // f' is convex on [1/2, 1), so Newton started right of the root
    // decreases monotonically onto it. At 1 - 1/sqrt(4 - a) the derivative
    // already exceeds -a.
    let mut p = (1.0 - 1.0 / (4.0 - a).sqrt()).min(hi_bound);
    let lo = 0.5f64.max(lo_bound);
    for _ in 0..100 {
        let d = surrogate_slope(p) + a;
        if d <= 0.0 {
            break;
        }
        let next = p - d / surrogate_curvature(p);
        if next <= lo {
            p = lo;
            break;
        }
        if p - next <= 2.0 * f64::EPSILON * p {
            p = next;
            break;
        }
        p = next;
    }
    p.clamp(lo_bound, hi_bound)
}

/// Weights below this are raised to it in the inner solve. Individuals
/// outside a GATE subset carry zero weight, which would make their inner
/// problem linear and the dual nonsmooth.
pub const MIN_WEIGHT: f64 = 1e-4;

/// Minimizer of `max(w, MIN_WEIGHT) f(p) + a p` over the box.
pub fn inner_solve_weighted(a: f64, weight: f64, gamma: f64) -> f64 {
    inner_solve(a / weight.max(MIN_WEIGHT), gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop once the projected-gradient residual is at most this.
    pub tol: f64,
    pub max_iters: usize,
    /// Multipliers above this with a still-violated constraint are treated
    /// as divergence.
    pub lambda_ceiling: f64,
    pub step_init: f64,
    #[serde(skip)]
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50_000,
            lambda_ceiling: 1e6,
            step_init: 1.0,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    /// `max_j |min(lambda_j, c_j - g_j(lambda))|`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub lambda_inf_norm: f64,
    pub converged: bool,
    pub dual_value: f64,
    /// Sample surrogate objective `mean_i w_i f(p_i)` at the recovered policy.
    pub objective: f64,
    /// Sample means `mean_i g_j(p_i, X_i)`.
    pub constraint_values: Vec<f64>,
}

impl DualSolution {
    /// Complementary slackness gap `sum_j lambda_j max(0, c_j - g_j)`.
    pub fn complementary_slackness(&self, rhs: &[f64]) -> f64 {
        self.lambda
            .iter()
            .zip(self.constraint_values.iter().zip(rhs))
            .map(|(l, (g, c))| l * (c - g).max(0.0))
            .sum()
    }
}

/// Coefficients of the sample problem laid out for repeated evaluation.
struct Prepared {
    n: usize,
    j: usize,
    /// Row-major `n x j` slopes.
    slopes: Vec<f64>,
    weights: Vec<f64>,
    mean_offsets: Vec<f64>,
    rhs: Vec<f64>,
    gamma: f64,
}

#[derive(Debug, Clone)]
struct Evaluation {
    dual: f64,
    grad: Vec<f64>,
    objective: f64,
    constraint_values: Vec<f64>,
}

impl Prepared {
    fn new(problem: &DesignProblem) -> Result<Self> {
        let n = problem.cohort.len();
        let j = problem.constraints.len();
        let mut slopes = Vec::with_capacity(n * j);
        let mut weights = Vec::with_capacity(n);
        let mut mean_offsets = vec![0.0; j];
        for ind in problem.cohort.iter() {
            weights.push(problem.estimand.weight(ind));
            for (k, c) in problem.constraints.iter().enumerate() {
                let (offset, slope) = c.coefficients(ind)?;
                mean_offsets[k] += offset;
                slopes.push(slope);
            }
        }
        for m in &mut mean_offsets {
            *m /= n as f64;
        }
        Ok(Self {
            n,
            j,
            slopes,
            weights,
            mean_offsets,
            rhs: problem.constraints.iter().map(|c| c.rhs).collect(),
            gamma: problem.gamma,
        })
    }

    fn probability(&self, i: usize, lambda: &[f64]) -> f64 {
        let row = &self.slopes[i * self.j..(i + 1) * self.j];
        let a: f64 = row.iter().zip(lambda).map(|(s, l)| s * l).sum();
        inner_solve_weighted(a, self.weights[i], self.gamma)
    }

    fn evaluate(&self, lambda: &[f64]) -> Evaluation {
        let j = self.j;
        // Fixed-size chunks reduced in order keep the sums bitwise
        // reproducible regardless of the thread count.
        let partials: Vec<(f64, f64, Vec<f64>)> = (0..self.n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let start = chunk * CHUNK;
                let end = (start + CHUNK).min(self.n);
                let (mut obj, mut reg) = (0.0, 0.0);
                let mut cons = vec![0.0; j];
                for i in start..end {
                    let p = self.probability(i, lambda);
                    let w = self.weights[i];
                    let f = surrogate(p);
                    obj += w * f;
                    reg += w.max(MIN_WEIGHT) * f;
                    let row = &self.slopes[i * j..(i + 1) * j];
                    for (acc, s) in cons.iter_mut().zip(row) {
                        *acc += s * p;
                    }
                }
                (obj, reg, cons)
            })
            .collect();
        let (mut objective, mut regularized) = (0.0, 0.0);
        let mut constraint_values = self.mean_offsets.clone();
        let n = self.n as f64;
        for (obj, reg, cons) in partials {
            objective += obj;
            regularized += reg;
            for (acc, c) in constraint_values.iter_mut().zip(cons) {
                *acc += c / n;
            }
        }
        objective /= n;
        regularized /= n;
        let grad: Vec<f64> = constraint_values
            .iter()
            .zip(&self.rhs)
            .map(|(g, c)| g - c)
            .collect();
        let dual = regularized + lambda.iter().zip(&grad).map(|(l, g)| l * g).sum::<f64>();
        Evaluation {
            dual,
            grad,
            objective,
            constraint_values,
        }
    }
}

fn kkt_residual(lambda: &[f64], grad: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(grad)
        .map(|(l, g)| l.min(-g).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes the sample dual over `lambda >= 0`.
///
/// Steps follow the Barzilai-Borwein rule, safeguarded by Armijo
/// backtracking on the dual value. Terminates when the projected-gradient
/// residual drops to `options.tol`, when no ascent step can be found at
/// machine precision, or after `options.max_iters` iterations; `converged`
/// records which.
pub fn solve_dual(problem: &DesignProblem, options: &SolverOptions) -> Result<DualSolution> {
    let prep = Prepared::new(problem)?;
    let j = prep.j;
    let mut lambda = match &options.warm_start {
        Some(w) if w.len() == j => w.iter().map(|l| l.max(0.0)).collect(),
        _ => vec![0.0; j],
    };
    let mut eval = prep.evaluate(&lambda);
    let mut step = options.step_init.max(1e-12);
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let residual = kkt_residual(&lambda, &eval.grad);
        log::debug!(
            "iter={} dual={:.12} residual={:.3e}",
            iterations,
            eval.dual,
            residual
        );
        if residual <= options.tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        for (k, (&l, &g)) in lambda.iter().zip(&eval.grad).enumerate() {
            if l > options.lambda_ceiling && g > 0.0 {
                return Err(Error::Divergence {
                    label: problem.constraints[k].label.clone(),
                    lambda: l,
                });
            }
        }
        iterations += 1;

        let mut accepted = None;
        let mut trial = step;
        for _ in 0..80 {
            let cand: Vec<f64> = lambda
                .iter()
                .zip(&eval.grad)
                .map(|(l, g)| (l + trial * g).max(0.0))
                .collect();
            let delta: Vec<f64> = cand.iter().zip(&lambda).map(|(c, l)| c - l).collect();
            let next = prep.evaluate(&cand);
            let noise = 1e-14 * (1.0 + eval.dual.abs());
            if next.dual >= eval.dual + 1e-4 * dot(&eval.grad, &delta) - noise {
                accepted = Some((cand, delta, next));
                break;
            }
            trial *= 0.5;
        }
        let Some((cand, delta, next)) = accepted else {
            log::debug!("line search stalled at iteration {iterations}");
            break;
        };
        let y: Vec<f64> = next.grad.iter().zip(&eval.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&delta, &y);
        let ss = dot(&delta, &delta);
        step = if sy < 0.0 && ss > 0.0 {
            ss / -sy
        } else {
            trial * 4.0
        }
        .clamp(1e-12, 1e12);
        lambda = cand;
        eval = next;
    }

    let kkt = kkt_residual(&lambda, &eval.grad);
    let lambda_inf_norm = lambda.iter().copied().fold(0.0, f64::max);
    Ok(DualSolution {
        lambda,
        kkt_residual: kkt,
        iterations,
        lambda_inf_norm,
        converged,
        dual_value: eval.dual,
        objective: eval.objective,
        constraint_values: eval.constraint_values,
    })
}

/// Assignment probabilities of every individual in the design sample at
/// the given multipliers.
pub fn sample_probabilities(problem: &DesignProblem, lambda: &[f64]) -> Result<Vec<f64>> {
    let prep = Prepared::new(problem)?;
    if lambda.len() != prep.j {
        return Err(Error::Config(format!(
            "{} multipliers for {} constraints",
            lambda.len(),
            prep.j
        )));
    }
    Ok((0..prep.n).map(|i| prep.probability(i, lambda)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualNormDiagnostic {
    pub bound: f64,
    pub satisfied: bool,
}

/// Compares `||lambda||_inf` against `sqrt(2) / (alpha sqrt(beta) gamma^2)`,
/// the bound implied by a small-ball condition with parameters
/// `(alpha, beta)` on the constraint coefficients. Advisory only.
pub fn dual_norm_diagnostic(
    solution: &DualSolution,
    alpha: f64,
    beta_sb: f64,
    gamma: f64,
) -> Result<DualNormDiagnostic> {
    if !(alpha > 0.0) || !(beta_sb > 0.0 && beta_sb <= 1.0) || !(gamma > 0.0) {
        return Err(Error::Config(
            "small-ball diagnostic needs alpha > 0, beta in (0, 1], gamma > 0".into(),
        ));
    }
    let bound = 2f64.sqrt() / (alpha * beta_sb.sqrt() * gamma * gamma);
    Ok(DualNormDiagnostic {
        bound,
        satisfied: solution.lambda_inf_norm <= bound,
    })
}
