//! Independent oracles for the design problem.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optalloc::cohort::{Cohort, Individual};
use optalloc::constraints::{
    make_budget_cap, make_utility_floor, AffineInU, ConstraintKind, ConstraintSpec, Estimand, Term,
};

pub fn surrogate(p: f64) -> f64 {
    1.0 / p + 1.0 / (1.0 - p)
}

fn slope1(p: f64) -> f64 {
    -1.0 / (p * p) + 1.0 / ((1.0 - p) * (1.0 - p))
}

fn slope2(p: f64) -> f64 {
    2.0 / p.powi(3) + 2.0 / (1.0 - p).powi(3)
}

/// A design instance in plain arrays: `g_j(p) = mean_i offset[j][i] + slope[j][i] p_i`.
#[derive(Debug, Clone)]
pub struct Flat {
    pub weight: Vec<f64>,
    pub offset: Vec<Vec<f64>>,
    pub slope: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub gamma: f64,
}

impl Flat {
    pub fn new(cohort: &Cohort, constraints: &[ConstraintSpec], estimand: &Estimand, gamma: f64) -> Self {
        let mut offset = Vec::new();
        let mut slope = Vec::new();
        for c in constraints {
            let (o, s): (Vec<f64>, Vec<f64>) = cohort.iter().map(|i| c.coefficients(i).unwrap()).unzip();
            offset.push(o);
            slope.push(s);
        }
        Self {
            weight: cohort.iter().map(|i| estimand.weight(i)).collect(),
            offset,
            slope,
            rhs: constraints.iter().map(|c| c.rhs).collect(),
            gamma,
        }
    }

    pub fn n(&self) -> usize {
        self.weight.len()
    }

    pub fn objective(&self, p: &[f64]) -> f64 {
        self.weight.iter().zip(p).map(|(w, p)| w * surrogate(*p)).sum::<f64>() / self.n() as f64
    }

    pub fn values(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.rhs.len())
            .map(|j| (0..self.n()).map(|i| self.offset[j][i] + self.slope[j][i] * p[i]).sum::<f64>() / n)
            .collect()
    }

    /// Largest `mean g_j - rhs_j`, floored at zero.
    pub fn violation(&self, p: &[f64]) -> f64 {
        self.values(p).iter().zip(&self.rhs).map(|(g, r)| g - r).fold(0.0, f64::max)
    }
}

/// Exhaustive search over the `step` lattice of `[gamma, 1 - gamma]^n`; `n <= 2`.
pub fn grid_oracle(flat: &Flat, step: f64) -> Option<(f64, Vec<f64>)> {
    assert!(flat.n() <= 2, "grid oracle is exhaustive");
    let k = ((1.0 - 2.0 * flat.gamma) / step).round() as usize;
    let axis: Vec<f64> = (0..=k).map(|i| flat.gamma + step * i as f64).collect();
    let points: Vec<Vec<f64>> = if flat.n() == 1 {
        axis.iter().map(|a| vec![*a]).collect()
    } else {
        axis.iter().flat_map(|a| axis.iter().map(move |b| vec![*a, *b])).collect()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for p in points {
        if flat.violation(&p) > 1e-12 {
            continue;
        }
        let v = flat.objective(&p);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, p));
        }
    }
    best
}

/// Log-barrier interior-point method with damped Newton steps, started at a
/// strictly feasible point.
pub fn barrier_oracle(flat: &Flat, start: &[f64]) -> (f64, Vec<f64>) {
    let n = flat.n();
    let nf = n as f64;
    let g = flat.gamma;
    let margin = |p: &[f64]| -> Option<Vec<f64>> {
        if p.iter().any(|x| *x <= g || *x >= 1.0 - g) {
            return None;
        }
        let r: Vec<f64> = flat.values(p).iter().zip(&flat.rhs).map(|(v, r)| r - v).collect();
        r.iter().all(|x| *x > 0.0).then_some(r)
    };
    let phi = |p: &[f64], mu: f64| -> f64 {
        match margin(p) {
            None => f64::INFINITY,
            Some(r) => {
                let bar: f64 = r.iter().map(|x| -x.ln()).sum::<f64>()
                    - p.iter().map(|x| (x - g).ln() + (1.0 - g - x).ln()).sum::<f64>();
                flat.objective(p) + mu * bar
            }
        }
    };
    let mut p = start.to_vec();
    assert!(margin(&p).is_some(), "start must be strictly feasible");
    let mut mu = 1.0;
    while mu > 1e-11 {
        for _ in 0..100 {
            let r = margin(&p).unwrap();
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);
            for i in 0..n {
                let (lo, hi) = (p[i] - g, 1.0 - g - p[i]);
                grad[i] = flat.weight[i] * slope1(p[i]) / nf - mu / lo + mu / hi;
                hess[(i, i)] = flat.weight[i] * slope2(p[i]) / nf + mu / (lo * lo) + mu / (hi * hi);
            }
            for (j, rj) in r.iter().enumerate() {
                let a: Vec<f64> = flat.slope[j].iter().map(|s| s / nf).collect();
                for i in 0..n {
                    grad[i] += mu * a[i] / rj;
                    for k in 0..n {
                        hess[(i, k)] += mu * a[i] * a[k] / (rj * rj);
                    }
                }
            }
            let step = hess.cholesky().expect("barrier Hessian is positive definite").solve(&grad);
            let decrement = grad.dot(&step);
            if decrement < 1e-18 {
                break;
            }
            let f0 = phi(&p, mu);
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x - t * d).collect();
                if phi(&cand, mu) <= f0 - 0.25 * t * decrement {
                    p = cand;
                    break;
                }
                t *= 0.5;
                if t < 1e-16 {
                    break;
                }
            }
            if t < 1e-16 {
                break;
            }
        }
        mu *= 0.2;
    }
    (flat.objective(&p), p)
}

/// A random feasible instance: `n <= 6` individuals, `1..=3` constraints
/// drawn from utility floors, budget caps and generic normalized rows, each
/// with right-hand side set so that a random interior point is feasible
/// with slack in `[0.002, 0.05]`.
#[derive(Debug, Clone)]
pub struct RandomProblem {
    pub cohort: Cohort,
    pub constraints: Vec<ConstraintSpec>,
    pub gamma: f64,
    /// Strictly feasible point.
    pub interior: Vec<f64>,
}

pub fn random_problem(seed: u64, max_n: usize) -> RandomProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    let gamma = if rng.random::<bool>() { 0.01 } else { 0.05 };
    let individuals = (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            Individual::new(format!("i{i}"), u, u)
        })
        .collect();
    let cohort = Cohort::new(individuals).unwrap();
    let interior: Vec<f64> = (0..n).map(|_| rng.random_range(gamma + 0.02..1.0 - gamma - 0.02)).collect();
    let j = rng.random_range(1..=3);
    let mut constraints = Vec::new();
    let u = cohort.u_values();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    for _ in 0..j {
        let slack = rng.random_range(0.002..0.05);
        let spec = match rng.random_range(0..3) {
            0 => {
                let pu: Vec<f64> = interior.iter().zip(&u).map(|(p, u)| p * u).collect();
                make_utility_floor((mean(&pu) - slack).max(0.0))
            }
            1 => make_budget_cap((mean(&interior) + slack).min(1.0)),
            _ => {
                let s0: f64 = rng.random_range(-1.0..1.0);
                let s1: f64 = rng.random_range(-1.0..1.0) * (1.0 - s0.abs());
                let slope = AffineInU { constant: s0, per_u: s1 };
                let offset = AffineInU { constant: 0.5 - 0.5 * s0, per_u: -0.5 * s1 };
                let g: Vec<f64> = interior.iter().zip(&u).map(|(p, u)| offset.at(*u) + slope.at(*u) * p).collect();
                ConstraintSpec {
                    kind: ConstraintKind::GenericLinear,
                    label: "random row".into(),
                    terms: vec![Term { group: None, offset, slope }],
                    rhs: mean(&g) + slack,
                }
            }
        };
        constraints.push(spec);
    }
    RandomProblem { cohort, constraints, gamma, interior }
}

/// Barrier optimum with the estimand's weights.
pub fn oracle(problem: &RandomProblem, estimand: &Estimand) -> (f64, Vec<f64>) {
    let flat = Flat::new(&problem.cohort, &problem.constraints, estimand, problem.gamma);
    barrier_oracle(&flat, &problem.interior)
}
