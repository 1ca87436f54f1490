//! Sample sizes from variances, and the RCT and regression-discontinuity
//! benchmarks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{draw_potential_outcomes, Cohort, Individual, OutcomeModel};
use crate::constraints::Estimand;
use crate::error::{Error, Result};
use crate::evaluator::{efficiency_variance_from_probs, evaluation_split, VarianceSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    /// Two-sided type-1 error.
    pub alpha: f64,
    pub power: f64,
    pub tau_detect: f64,
}

impl PowerSpec {
    pub fn new(alpha: f64, power: f64, tau_detect: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
        }
        if !(power > alpha && power < 1.0) {
            return Err(Error::Config(format!("power {power} outside (alpha, 1)")));
        }
        if !(tau_detect > 0.0 && tau_detect.is_finite()) {
            return Err(Error::Config(format!("effect size {tau_detect} must be positive")));
        }
        Ok(Self {
            alpha,
            power,
            tau_detect,
        })
    }

    /// 5% two-sided level and 80% power.
    pub fn standard(tau_detect: f64) -> Result<Self> {
        Self::new(0.05, 0.8, tau_detect)
    }

    /// `(z_{1-alpha/2} + z_power)^2`.
    pub fn z_factor(&self) -> f64 {
        let z = Normal::standard();
        let s = z.inverse_cdf(1.0 - self.alpha / 2.0) + z.inverse_cdf(self.power);
        s * s
    }
}

/// Sample size before rounding.
pub fn wald_sample_size_real(v: f64, spec: &PowerSpec) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("per-unit variance {v} must be positive")));
    }
    Ok(spec.z_factor() * v / (spec.tau_detect * spec.tau_detect))
}

pub fn wald_sample_size(v: f64, spec: &PowerSpec) -> Result<u64> {
    Ok(wald_sample_size_real(v, spec)?.ceil() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctBenchmark {
    pub b: f64,
    pub v_ate: f64,
    pub n_required: u64,
    pub recall: f64,
}

/// Uniform randomization at the budget, evaluated on the eval split.
pub fn rct_benchmark(cohort: &Cohort, model: &OutcomeModel, b: f64, spec: &PowerSpec) -> Result<RctBenchmark> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Config(format!("budget {b} outside (0, 1)")));
    }
    let eval = evaluation_split(cohort)?;
    let probs = vec![b; eval.len()];
    let v = efficiency_variance_from_probs(&eval, &probs, &Estimand::Ate, VarianceSource::model(model))?;
    Ok(RctBenchmark {
        b,
        v_ate: v.v_ate,
        n_required: wald_sample_size(v.v_ate, spec)?,
        recall: b,
    })
}

const IK_MIN_SIDE: usize = 50;
/// Edge-kernel constant of the final bandwidth.
const IK_EDGE_CONSTANT: f64 = 3.4375;
/// Silverman-style pilot constant.
const IK_PILOT_CONSTANT: f64 = 1.84;
/// Constant of the pilot bandwidth for second derivatives.
const IK_CURVATURE_CONSTANT: f64 = 3.56;
/// Floor on the squared third derivative in the pilot for second derivatives.
const IK_THIRD_DERIVATIVE_FLOOR: f64 = 0.01;

fn sample_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn polyfit(d: &[f64], y: &[f64], degree: usize, jump: Option<&[f64]>) -> Result<DVector<f64>> {
    let cols = degree + 1 + usize::from(jump.is_some());
    if d.len() < cols {
        return Err(Error::InsufficientData(format!(
            "{} points for a {cols}-parameter fit",
            d.len()
        )));
    }
    let x = DMatrix::from_fn(d.len(), cols, |i, j| match (j, jump) {
        (0, _) => 1.0,
        (1, Some(t)) => t[i],
        (k, Some(_)) => d[i].powi(k as i32 - 1),
        (k, None) => d[i].powi(k as i32),
    });
    let yv = DVector::from_column_slice(y);
    x.svd(true, true)
        .solve(&yv, 1e-12)
        .map_err(|e| Error::Degenerate(e.to_string()))
}

/// Bandwidth for local linear RD estimation with an edge kernel, following
/// the Imbens-Kalyanaraman plug-in procedure. When every outcome on a side
/// is identical the variance there is replaced by the pooled variance, or by
/// one if all outcomes are constant, so that the regularization terms set a
/// finite bandwidth.
pub fn ik_bandwidth(running: &[f64], outcomes: &[f64], cutoff: f64) -> Result<f64> {
    if running.len() != outcomes.len() {
        return Err(Error::Config("running variable and outcomes differ in length".into()));
    }
    let n_plus = running.iter().filter(|x| **x >= cutoff).count();
    let n_minus = running.len() - n_plus;
    if n_plus < IK_MIN_SIDE || n_minus < IK_MIN_SIDE {
        return Err(Error::InsufficientData(format!(
            "{n_minus} observations below and {n_plus} above the cutoff; need {IK_MIN_SIDE} each"
        )));
    }
    let n = running.len() as f64;
    let sx = sample_variance(running.iter().copied()).sqrt();
    let h1 = IK_PILOT_CONSTANT * sx * n.powf(-0.2);

    let side = |plus: bool, h: f64| {
        running
            .iter()
            .zip(outcomes)
            .filter(move |(x, _)| if plus { **x >= cutoff && **x <= cutoff + h } else { **x < cutoff && **x >= cutoff - h })
            .map(|(x, y)| (*x - cutoff, *y))
    };
    let pilot_minus: Vec<f64> = side(false, h1).map(|r| r.1).collect();
    let pilot_plus: Vec<f64> = side(true, h1).map(|r| r.1).collect();
    let density = (pilot_minus.len() + pilot_plus.len()) as f64 / (2.0 * n * h1);
    if density <= 0.0 {
        return Err(Error::InsufficientData("no observations near the cutoff".into()));
    }
    let pooled = sample_variance(outcomes.iter().copied());
    let fallback = if pooled > 0.0 { pooled } else { 1.0 };
    let side_var = |ys: &[f64]| {
        let v = if ys.len() >= 2 {
            sample_variance(ys.iter().copied())
        } else {
            0.0
        };
        if v > 0.0 {
            v
        } else {
            fallback
        }
    };
    let var_minus = side_var(&pilot_minus);
    let var_plus = side_var(&pilot_plus);

    let d: Vec<f64> = running.iter().map(|x| x - cutoff).collect();
    let t: Vec<f64> = running.iter().map(|x| if *x >= cutoff { 1.0 } else { 0.0 }).collect();
    let cubic = polyfit(&d, outcomes, 3, Some(&t))?;
    let m3 = 6.0 * cubic[4];
    let m3_sq = (m3 * m3).max(IK_THIRD_DERIVATIVE_FLOOR);
    let h2_plus = IK_CURVATURE_CONSTANT * (var_plus / (density * m3_sq)).powf(1.0 / 7.0) * (n_plus as f64).powf(-1.0 / 7.0);
    let h2_minus =
        IK_CURVATURE_CONSTANT * (var_minus / (density * m3_sq)).powf(1.0 / 7.0) * (n_minus as f64).powf(-1.0 / 7.0);

    let curvature = |plus: bool, h: f64| -> Result<(f64, usize)> {
        let (dd, yy): (Vec<f64>, Vec<f64>) = side(plus, h).unzip();
        let fit = polyfit(&dd, &yy, 2, None)?;
        Ok((2.0 * fit[2], dd.len()))
    };
    let (m2_plus, n2_plus) = curvature(true, h2_plus)?;
    let (m2_minus, n2_minus) = curvature(false, h2_minus)?;
    let r_plus = 720.0 * var_plus / (n2_plus as f64 * h2_plus.powi(4));
    let r_minus = 720.0 * var_minus / (n2_minus as f64 * h2_minus.powi(4));

    let gap = m2_plus - m2_minus;
    let h = IK_EDGE_CONSTANT
        * ((var_plus + var_minus) / (density * (gap * gap + r_plus + r_minus))).powf(0.2)
        * n.powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Degenerate(format!("bandwidth evaluated to {h}")));
    }
    Ok(h)
}

/// Design effect of the OLS RD estimator over the observations within `h`
/// of the cutoff: `1 / (1 - corr(T, u)^2)`, returned with the correlation.
pub fn rd_design_effect(running: &[f64], cutoff: f64, h: f64) -> Result<(f64, f64)> {
    let window: Vec<(f64, f64)> = running
        .iter()
        .filter(|x| (**x - cutoff).abs() <= h)
        .map(|x| (if *x >= cutoff { 1.0 } else { 0.0 }, *x))
        .collect();
    if window.len() < 3 {
        return Err(Error::InsufficientData("fewer than three observations in the bandwidth".into()));
    }
    let k = window.len() as f64;
    let (mt, mx) = window.iter().fold((0.0, 0.0), |a, w| (a.0 + w.0, a.1 + w.1));
    let (mt, mx) = (mt / k, mx / k);
    let (mut stt, mut sxx, mut stx) = (0.0, 0.0, 0.0);
    for (t, x) in &window {
        stt += (t - mt) * (t - mt);
        sxx += (x - mx) * (x - mx);
        stx += (t - mt) * (x - mx);
    }
    if stt == 0.0 || sxx == 0.0 {
        return Err(Error::Degenerate("treatment or running variable constant in the bandwidth".into()));
    }
    let rho = stx / (stt * sxx).sqrt();
    if rho * rho >= 1.0 - 1e-9 {
        return Err(Error::Degenerate(format!("correlation {rho} between treatment and running variable")));
    }
    Ok((1.0 / (1.0 - rho * rho), rho))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdBenchmark {
    pub cutoff: f64,
    pub bandwidth: f64,
    pub rho: f64,
    pub deff: f64,
    pub fraction_in_bandwidth: f64,
    pub n_balanced: u64,
    pub n_required: u64,
    /// Recall of the need-based rule that defines the discontinuity.
    pub recall: f64,
}

/// Score threshold treating the top `b` share: the `ceil(b n)`-th largest
/// score.
pub fn need_based_cutoff(u: &[f64], b: f64) -> Result<f64> {
    if u.is_empty() || !(b > 0.0 && b < 1.0) {
        return Err(Error::Config(format!("budget {b} or empty scores")));
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((b * u.len() as f64).ceil() as usize).clamp(1, u.len());
    Ok(sorted[k - 1])
}

/// Power of the RD design at the need-based cutoff: IK bandwidth on
/// outcomes simulated under the need-based assignment, design effect of
/// the OLS estimator within it, and the share of the cohort the bandwidth
/// retains.
pub fn rd_benchmark(
    cohort: &Cohort,
    model: &OutcomeModel,
    b: f64,
    spec: &PowerSpec,
    seed: u64,
) -> Result<RdBenchmark> {
    let eval = evaluation_split(cohort)?;
    let u = eval.u_values();
    let cutoff = need_based_cutoff(&u, b)?;
    if !u.iter().any(|x| *x < cutoff) {
        return Err(Error::Degenerate("no scores below the need-based cutoff".into()));
    }
    let outcomes: Vec<f64> = draw_potential_outcomes(&eval, model, seed)
        .iter()
        .zip(&u)
        .map(|(po, x)| {
            let y = if *x >= cutoff { po.y1 } else { po.y0 };
            if y {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let bandwidth = ik_bandwidth(&u, &outcomes, cutoff)?;
    let (deff, rho) = rd_design_effect(&u, cutoff, bandwidth)?;
    let window: Vec<Individual> = eval
        .iter()
        .filter(|i| (i.u - cutoff).abs() <= bandwidth)
        .cloned()
        .collect();
    let fraction = window.len() as f64 / eval.len() as f64;
    let window = Cohort::new(window)?;
    let v = efficiency_variance_from_probs(
        &window,
        &vec![0.5; window.len()],
        &Estimand::Ate,
        VarianceSource::model(model),
    )?;
    let n_balanced = wald_sample_size(v.v_ate, spec)?;
    let n_required = (deff * n_balanced as f64 / fraction).ceil() as u64;
    let (treated_need, total_need) = eval.iter().fold((0.0, 0.0), |acc, i| {
        (acc.0 + if i.u >= cutoff { i.mu0 } else { 0.0 }, acc.1 + i.mu0)
    });
    Ok(RdBenchmark {
        cutoff,
        bandwidth,
        rho,
        deff,
        fraction_in_bandwidth: fraction,
        n_balanced,
        n_required,
        recall: if total_need > 0.0 { treated_need / total_need } else { 0.0 },
    })
}
