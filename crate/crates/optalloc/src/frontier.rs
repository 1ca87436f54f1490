//! Utility-variance frontier traced by sweeping the utility floor.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, OutcomeModel, Split};
use crate::constraints::{
    check_feasibility, make_budget_cap, make_utility_floor, max_achievable_utility, ConstraintSpec,
    DesignProblem, Estimand, Feasibility,
};
use crate::dual::{solve_dual, SolverOptions};
use crate::error::{Error, Result};
use crate::evaluator::{efficiency_variance_from_probs, evaluation_split, utility_report_from_probs, VarianceSource};
use crate::policy::Policy;
use crate::power::{need_based_cutoff, rd_benchmark, wald_sample_size, wald_sample_size_real, PowerSpec, RdBenchmark};

pub const DEFAULT_GRID_POINTS: usize = 25;
pub const DEFAULT_REPLICATES: usize = 10_000;

/// The design sample: the train split when present, otherwise everything.
pub fn design_split(cohort: &Cohort) -> Result<Cohort> {
    if cohort.has_split(Split::Train) {
        cohort.train()
    } else {
        Ok(cohort.clone())
    }
}

/// Everything a frontier level shares except the utility floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierTemplate {
    pub budget: f64,
    pub gamma: f64,
    pub estimand: Estimand,
    /// Further constraints (fairness pairs, generic rows), normalized
    /// against the design sample.
    pub extra: Vec<ConstraintSpec>,
    pub solver: SolverOptions,
}

impl FrontierTemplate {
    pub fn new(budget: f64, gamma: f64) -> Self {
        Self {
            budget,
            gamma,
            estimand: Estimand::Ate,
            extra: Vec::new(),
            solver: SolverOptions::default(),
        }
    }

    pub fn constraints_at(&self, c: f64) -> Vec<ConstraintSpec> {
        let mut out = vec![make_utility_floor(c), make_budget_cap(self.budget)];
        out.extend(self.extra.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Explicit utility-floor levels; the default grid when absent.
    pub grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub warm_start: bool,
    /// Compute the RD anchor.
    pub benchmarks: bool,
    pub alpha: f64,
    pub power: f64,
    /// Effect size for sample sizes; the model's effect over the evaluated
    /// population when absent.
    pub tau_detect: Option<f64>,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            grid: None,
            grid_points: DEFAULT_GRID_POINTS,
            warm_start: true,
            benchmarks: true,
            alpha: 0.05,
            power: 0.8,
            tau_detect: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub c: f64,
    pub recall: f64,
    pub expected_utility: f64,
    pub budget_use: f64,
    /// Surrogate objective on the design sample.
    pub objective: f64,
    /// Efficiency bound on the eval split.
    pub v_ate: f64,
    pub n_required: u64,
    pub n_required_real: f64,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub c: f64,
    pub reason: String,
    pub witness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub design: String,
    pub recall: f64,
    pub expected_utility: f64,
    pub v_ate: Option<f64>,
    pub n_required: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointBands {
    pub recall: Band,
    pub v_ate: Band,
    pub n_lo: u64,
    pub n_hi: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub budget: f64,
    pub power: PowerSpec,
    pub points: Vec<DesignPoint>,
    pub failures: Vec<GridFailure>,
    pub rct: Anchor,
    pub need_based: Anchor,
    pub rd: Option<RdBenchmark>,
    pub bands: Option<Vec<PointBands>>,
}

/// `count` evenly spaced levels from `b * mean(u)` to `0.999 * U*(b, gamma)`
/// on the design sample.
pub fn default_grid(design: &Cohort, budget: f64, gamma: f64, count: usize) -> Result<Vec<f64>> {
    let u = design.u_values();
    let top = max_achievable_utility(&u, budget, gamma)
        .ok_or_else(|| Error::Config(format!("budget {budget} below the box floor {gamma}")))?;
    let lo = budget * design.mean_u();
    let hi = 0.999 * top;
    if count < 2 || hi <= lo {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect())
}

/// Mean of `tau(X)` over the estimand's population.
pub fn population_tau(eval: &Cohort, model: &OutcomeModel, estimand: &Estimand) -> f64 {
    let (sum, k) = eval
        .iter()
        .filter(|i| estimand.contains(i))
        .fold((0.0, 0usize), |a, i| (a.0 + model.tau_x(i.mu0), a.1 + 1));
    sum / k.max(1) as f64
}

struct Evaluated {
    recall: f64,
    expected_utility: f64,
    budget_use: f64,
    v_ate: f64,
}

fn evaluate(eval: &Cohort, probs: &[f64], model: &OutcomeModel, estimand: &Estimand) -> Result<Evaluated> {
    let util = utility_report_from_probs(eval, probs)?;
    let var = efficiency_variance_from_probs(eval, probs, estimand, VarianceSource::model(model))?;
    Ok(Evaluated {
        recall: util.recall,
        expected_utility: util.expected_utility,
        budget_use: util.budget_use,
        v_ate: var.v_ate,
    })
}

enum Level {
    Solved(DesignPoint),
    Failed(GridFailure),
}

fn solve_level(
    design: &Cohort,
    eval: &Cohort,
    model: &OutcomeModel,
    template: &FrontierTemplate,
    spec: &PowerSpec,
    c: f64,
    warm: Option<Vec<f64>>,
) -> Result<Level> {
    let problem = DesignProblem::new(design, template.constraints_at(c), template.gamma, template.estimand.clone())?;
    if let Feasibility::Infeasible { label, witness } = check_feasibility(&problem)? {
        return Ok(Level::Failed(GridFailure {
            c,
            reason: format!("infeasible: {label}"),
            witness: Some(witness),
        }));
    }
    let options = SolverOptions {
        warm_start: warm,
        ..template.solver.clone()
    };
    let solution = match solve_dual(&problem, &options) {
        Ok(s) => s,
        Err(e @ Error::Divergence { .. }) => {
            return Ok(Level::Failed(GridFailure {
                c,
                reason: e.to_string(),
                witness: None,
            }))
        }
        Err(e) => return Err(e),
    };
    if !solution.converged {
        log::warn!("level c={c}: solver stopped with residual {:.3e}", solution.kkt_residual);
    }
    let policy = Policy::from_solution(&problem, &solution)?;
    let probs = policy.probabilities(eval)?;
    let ev = evaluate(eval, &probs, model, &template.estimand)?;
    Ok(Level::Solved(DesignPoint {
        c,
        recall: ev.recall,
        expected_utility: ev.expected_utility,
        budget_use: ev.budget_use,
        objective: solution.objective,
        v_ate: ev.v_ate,
        n_required: wald_sample_size(ev.v_ate, spec)?,
        n_required_real: wald_sample_size_real(ev.v_ate, spec)?,
        policy,
    }))
}

/// Solves the design at every utility level (on the train split) and
/// evaluates each policy on the eval split, together with the RCT,
/// need-based and RD anchors. Infeasible levels are recorded in
/// `failures` rather than aborting the sweep.
pub fn sweep(
    cohort: &Cohort,
    model: &OutcomeModel,
    template: &FrontierTemplate,
    options: &SweepOptions,
) -> Result<Frontier> {
    let design = design_split(cohort)?;
    let eval = evaluation_split(cohort)?;
    let tau = options
        .tau_detect
        .unwrap_or_else(|| population_tau(&eval, model, &template.estimand));
    let spec = PowerSpec::new(options.alpha, options.power, tau)?;
    let mut grid = match &options.grid {
        Some(g) => g.clone(),
        None => default_grid(&design, template.budget, template.gamma, options.grid_points)?,
    };
    grid.sort_by(f64::total_cmp);

    let levels: Vec<Level> = if options.warm_start {
        let mut out = Vec::with_capacity(grid.len());
        let mut warm: Option<Vec<f64>> = None;
        for &c in &grid {
            let level = solve_level(&design, &eval, model, template, &spec, c, warm.clone())?;
            if let Level::Solved(p) = &level {
                warm = Some(p.policy.lambda.clone());
            }
            out.push(level);
        }
        out
    } else {
        grid.par_iter()
            .map(|&c| solve_level(&design, &eval, model, template, &spec, c, None))
            .collect::<Result<_>>()?
    };
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for level in levels {
        match level {
            Level::Solved(p) => points.push(p),
            Level::Failed(f) => failures.push(f),
        }
    }

    let b = template.budget;
    let uniform = vec![b; eval.len()];
    let rct_eval = evaluate(&eval, &uniform, model, &template.estimand)?;
    let rct = Anchor {
        design: "rct".into(),
        recall: rct_eval.recall,
        expected_utility: rct_eval.expected_utility,
        v_ate: Some(rct_eval.v_ate),
        n_required: Some(wald_sample_size(rct_eval.v_ate, &spec)?),
    };
    let cutoff = need_based_cutoff(&eval.u_values(), b)?;
    let need: Vec<f64> = eval.iter().map(|i| if i.u >= cutoff { 1.0 } else { 0.0 }).collect();
    let need_util = utility_report_from_probs(&eval, &need)?;
    let need_based = Anchor {
        design: "need_based".into(),
        recall: need_util.recall,
        expected_utility: need_util.expected_utility,
        v_ate: None,
        n_required: None,
    };
    let rd = if options.benchmarks {
        match rd_benchmark(cohort, model, b, &spec, options.seed) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("RD anchor unavailable: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(Frontier {
        budget: b,
        power: spec,
        points,
        failures,
        rct,
        need_based,
        rd,
        bands: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub target_recall: f64,
    /// Interpolated design at the target; `None` when the frontier does not
    /// reach it.
    pub point: Option<DesignPoint>,
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// First crossing of `fraction * R*` along the frontier, where `R*` is the
/// need-based recall, interpolated linearly between the adjacent levels.
/// The interpolated point carries the upper level's policy.
pub fn target_recall_point(frontier: &Frontier, fraction: f64) -> Result<TargetPoint> {
    if frontier.points.is_empty() {
        return Err(Error::InsufficientData("empty frontier".into()));
    }
    let target = fraction * frontier.need_based.recall;
    let pts = &frontier.points;
    let Some(i) = pts.iter().position(|p| p.recall >= target) else {
        return Ok(TargetPoint {
            target_recall: target,
            point: None,
        });
    };
    if i == 0 {
        return Ok(TargetPoint {
            target_recall: target,
            point: Some(pts[0].clone()),
        });
    }
    let (a, b) = (&pts[i - 1], &pts[i]);
    let t = if b.recall > a.recall {
        (target - a.recall) / (b.recall - a.recall)
    } else {
        1.0
    };
    let n_real = lerp(a.n_required_real, b.n_required_real, t);
    Ok(TargetPoint {
        target_recall: target,
        point: Some(DesignPoint {
            c: lerp(a.c, b.c, t),
            recall: lerp(a.recall, b.recall, t),
            expected_utility: lerp(a.expected_utility, b.expected_utility, t),
            budget_use: lerp(a.budget_use, b.budget_use, t),
            objective: lerp(a.objective, b.objective, t),
            v_ate: lerp(a.v_ate, b.v_ate, t),
            n_required: n_real.ceil() as u64,
            n_required_real: n_real,
            policy: b.policy.clone(),
        }),
    })
}

pub fn ninety_percent_point(frontier: &Frontier) -> Result<TargetPoint> {
    target_recall_point(frontier, 0.9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierLaw {
    #[default]
    Gaussian,
    Rademacher,
}

/// Percentile bands for sample-mean functionals. Row `k` of `influence`
/// holds the per-observation values `f_k(X_i)` with estimate
/// `mean_i f_k(X_i)`; every replicate perturbs all functionals with the
/// same multipliers.
pub fn multiplier_bootstrap(
    influence: &[Vec<f64>],
    replicates: usize,
    law: MultiplierLaw,
    level: f64,
    seed: u64,
) -> Result<Vec<Band>> {
    if replicates < 2 {
        return Err(Error::Config("at least two bootstrap replicates are required".into()));
    }
    let n = influence.first().map_or(0, Vec::len);
    if n == 0 || influence.iter().any(|f| f.len() != n) {
        return Err(Error::Config("influence rows must be nonempty and of equal length".into()));
    }
    let centered: Vec<(f64, Vec<f64>)> = influence
        .iter()
        .map(|f| {
            if f.iter().all(|x| *x == f[0]) {
                return (f[0], vec![0.0; n]);
            }
            let m = f.iter().sum::<f64>() / n as f64;
            (m, f.iter().map(|x| x - m).collect())
        })
        .collect();
    let draws: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let xi: Vec<f64> = (0..n)
                .map(|_| match law {
                    MultiplierLaw::Gaussian => rng.sample(StandardNormal),
                    MultiplierLaw::Rademacher => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                })
                .collect();
            centered
                .iter()
                .map(|(m, f)| m + f.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>() / n as f64)
                .collect()
        })
        .collect();
    let tail = (1.0 - level) / 2.0;
    Ok((0..centered.len())
        .map(|k| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            col.sort_by(f64::total_cmp);
            let est = centered[k].0;
            Band {
                lo: percentile(&col, tail).min(est),
                hi: percentile(&col, 1.0 - tail).max(est),
            }
        })
        .collect())
}

/// Linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    lerp(sorted[lo], sorted[hi], pos - lo as f64)
}

/// Per-observation terms whose means are the recall and the efficiency
/// bound of a policy on the eval split. Recall is a ratio of means and
/// enters through its linearization.
pub fn frontier_influence(
    eval: &Cohort,
    probs: &[f64],
    model: &OutcomeModel,
    estimand: &Estimand,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let util = utility_report_from_probs(eval, probs)?;
    let var = efficiency_variance_from_probs(eval, probs, estimand, VarianceSource::model(model))?;
    let mean_mu0 = eval.mean_mu0();
    let recall = eval
        .iter()
        .zip(probs)
        .map(|(i, p)| if mean_mu0 > 0.0 { util.recall + i.mu0 * (p - util.recall) / mean_mu0 } else { 0.0 })
        .collect();
    let scale = eval.len() as f64 / var.support as f64;
    let v = var.pointwise.iter().map(|x| x * scale).collect();
    Ok((recall, v))
}

/// 95% multiplier-bootstrap bands for recall, `v_ate` and the required
/// sample size at every frontier point, holding each policy fixed.
pub fn bootstrap_bands(
    frontier: &Frontier,
    cohort: &Cohort,
    model: &OutcomeModel,
    replicates: usize,
    law: MultiplierLaw,
    seed: u64,
) -> Result<Vec<PointBands>> {
    let eval = evaluation_split(cohort)?;
    let mut influence = Vec::with_capacity(2 * frontier.points.len());
    for p in &frontier.points {
        let probs = p.policy.probabilities(&eval)?;
        let (r, v) = frontier_influence(&eval, &probs, model, &p.policy.estimand)?;
        influence.push(r);
        influence.push(v);
    }
    if influence.is_empty() {
        return Ok(Vec::new());
    }
    let bands = multiplier_bootstrap(&influence, replicates, law, 0.95, seed)?;
    bands
        .chunks(2)
        .zip(&frontier.points)
        .map(|(pair, p)| {
            // the influence means equal the point estimates up to rounding
            let recall = Band {
                lo: pair[0].lo.min(p.recall),
                hi: pair[0].hi.max(p.recall),
            };
            let v = Band {
                lo: pair[1].lo.min(p.v_ate),
                hi: pair[1].hi.max(p.v_ate),
            };
            Ok(PointBands {
                recall,
                v_ate: v,
                n_lo: wald_sample_size(v.lo.max(f64::MIN_POSITIVE), &frontier.power)?,
                n_hi: wald_sample_size(v.hi.max(f64::MIN_POSITIVE), &frontier.power)?,
            })
        })
        .collect()
}

/// `c,recall,recall_lo,recall_hi,v_ate,n_required,n_lo,n_hi`; band columns
/// are omitted when the frontier has no bands.
pub fn write_frontier_table<W: Write>(frontier: &Frontier, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    match &frontier.bands {
        Some(bands) => {
            w.write_record(["c", "recall", "recall_lo", "recall_hi", "v_ate", "n_required", "n_lo", "n_hi"])?;
            for (p, b) in frontier.points.iter().zip(bands) {
                w.write_record([
                    p.c.to_string(),
                    p.recall.to_string(),
                    b.recall.lo.to_string(),
                    b.recall.hi.to_string(),
                    p.v_ate.to_string(),
                    p.n_required.to_string(),
                    b.n_lo.to_string(),
                    b.n_hi.to_string(),
                ])?;
            }
        }
        None => {
            w.write_record(["c", "recall", "v_ate", "n_required"])?;
            for p in &frontier.points {
                w.write_record([p.c.to_string(), p.recall.to_string(), p.v_ate.to_string(), p.n_required.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `design,n_required,recall,deff,bandwidth,f_h`, with the RCT, need-based,
/// RD and 90%-utility rows.
pub fn write_anchor_table<W: Write>(frontier: &Frontier, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["design", "n_required", "recall", "deff", "bandwidth", "f_h"])?;
    let opt = |x: Option<u64>| x.map_or(String::new(), |v| v.to_string());
    for a in [&frontier.rct, &frontier.need_based] {
        w.write_record([a.design.clone(), opt(a.n_required), a.recall.to_string(), String::new(), String::new(), String::new()])?;
    }
    if let Some(rd) = &frontier.rd {
        w.write_record([
            "rd".to_string(),
            rd.n_required.to_string(),
            rd.recall.to_string(),
            rd.deff.to_string(),
            rd.bandwidth.to_string(),
            rd.fraction_in_bandwidth.to_string(),
        ])?;
    }
    if let Ok(TargetPoint { point: Some(p), .. }) = ninety_percent_point(frontier) {
        w.write_record([
            "optimized_90".to_string(),
            p.n_required.to_string(),
            p.recall.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Recall against required sample size, with anchors as markers. The
/// plotted data are repeated in a comment at the top of the file.
pub fn frontier_svg(frontier: &Frontier) -> String {
    let (width, height, margin) = (640.0, 420.0, 60.0);
    let mut xs: Vec<f64> = frontier.points.iter().map(|p| p.n_required as f64).collect();
    xs.extend(frontier.rct.n_required.map(|n| n as f64));
    xs.extend(frontier.rd.as_ref().map(|r| r.n_required as f64));
    let x_max = xs.iter().copied().fold(1.0, f64::max) * 1.05;
    let sx = |x: f64| margin + x / x_max * (width - 2.0 * margin);
    let sy = |y: f64| height - margin - y * (height - 2.0 * margin);

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!--\nn_required,recall\n");
    for p in &frontier.points {
        s.push_str(&format!("{},{}\n", p.n_required, p.recall));
    }
    s.push_str("-->\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = margin,
        b = height - margin,
        r = width - margin,
        t = margin
    ));
    for k in 0..=4 {
        let y = k as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.2}</text>\n",
            margin - 6.0,
            sy(y) + 4.0,
            y
        ));
        let x = x_max * k as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(x),
            height - margin + 16.0,
            x
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">required sample size</text>\n",
        width / 2.0,
        height - 15.0
    ));
    s.push_str(&format!(
        "<text x=\"15\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">recall</text>\n",
        height / 2.0,
        height / 2.0
    ));
    if let Some(bands) = &frontier.bands {
        let mut upper: Vec<String> = Vec::new();
        let mut lower: Vec<String> = Vec::new();
        for (p, b) in frontier.points.iter().zip(bands) {
            upper.push(format!("{:.2},{:.2}", sx(p.n_required as f64), sy(b.recall.hi)));
            lower.push(format!("{:.2},{:.2}", sx(p.n_required as f64), sy(b.recall.lo)));
        }
        lower.reverse();
        upper.extend(lower);
        s.push_str(&format!(
            "<polygon points=\"{}\" fill=\"steelblue\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
            upper.join(" ")
        ));
    }
    let line: Vec<String> = frontier
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.n_required as f64), sy(p.recall)))
        .collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
        line.join(" ")
    ));
    let mut marker = |label: &str, n: Option<u64>, recall: f64, color: &str| {
        if let Some(n) = n {
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"{color}\"><title>{label}</title></circle>\n",
                sx(n as f64),
                sy(recall)
            ));
            s.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{label}</text>\n",
                sx(n as f64) + 8.0,
                sy(recall) - 6.0
            ));
        }
    };
    marker("RCT", frontier.rct.n_required, frontier.rct.recall, "black");
    if let Some(rd) = &frontier.rd {
        marker("RD", Some(rd.n_required), rd.recall, "firebrick");
    }
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{y:.2}\" x2=\"{r}\" y2=\"{y:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"><title>need-based recall</title></line>\n",
        m = margin,
        r = width - margin,
        y = sy(frontier.need_based.recall)
    ));
    s.push_str("</svg>\n");
    s
}
