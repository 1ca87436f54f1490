//! Acceptance gate. Runs every criterion at its pinned tolerance, prints one
//! PASS/FAIL line per criterion followed by its individual checks, and exits
//! nonzero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=5,6` restricts the run to the listed criteria.

mod support;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optalloc::cohort::{synthesize_cohort, Cohort, Individual, OutcomeModel, Preset, ScoreGenerator};
use optalloc::constraints::{
    make_budget_cap, make_utility_floor, max_achievable_utility, DesignProblem, Estimand, EstimandSpec,
    FairnessMetric,
};
use optalloc::dual::{inner_solve, sample_probabilities, solve_dual, SolverOptions};
use optalloc::evaluator::{efficiency_variance_from_probs, simulate_trial_from_probs, Estimator, VarianceSource};
use optalloc::fairness::{fairness_comparison, FairnessSpec};
use optalloc::frontier::{
    default_grid, design_split, frontier_influence, multiplier_bootstrap, ninety_percent_point, sweep, Frontier,
    FrontierTemplate, MultiplierLaw, SweepOptions, DEFAULT_GRID_POINTS,
};
use optalloc::policy::Policy;
use optalloc::power::{rd_benchmark, rd_design_effect, wald_sample_size, wald_sample_size_real, PowerSpec};

use support::{barrier_oracle, grid_oracle, random_problem, surrogate, Flat};

const FULL_N: usize = 20_000;
const GAMMA: f64 = 0.01;

type Criterion = (usize, &'static str, fn(&mut Checks));

struct Checks {
    items: Vec<(bool, String)>,
}

impl Checks {
    fn check(&mut self, pass: bool, detail: impl Into<String>) {
        self.items.push((pass, detail.into()));
    }

    fn runtime(&mut self, start: Instant, limit: Duration) {
        let took = start.elapsed();
        self.check(took < limit, format!("runtime {:.1}s < {}s", took.as_secs_f64(), limit.as_secs()));
    }
}

fn seed_for(preset: Preset) -> u64 {
    match preset {
        Preset::Housing => 17,
        Preset::Reentry => 18,
    }
}

fn cohort_for(preset: Preset) -> &'static Cohort {
    static COHORTS: OnceLock<HashMap<&'static str, Cohort>> = OnceLock::new();
    let all = COHORTS.get_or_init(|| {
        [("housing", Preset::Housing), ("reentry", Preset::Reentry)]
            .into_iter()
            .map(|(k, p)| (k, p.synthesize(FULL_N, seed_for(p)).unwrap()))
            .collect()
    });
    &all[match preset {
        Preset::Housing => "housing",
        Preset::Reentry => "reentry",
    }]
}

fn full_sweep(preset: Preset, b: f64, beta: f64) -> Frontier {
    let cohort = cohort_for(preset);
    let model = OutcomeModel::new(beta).unwrap();
    let options = SweepOptions {
        seed: seed_for(preset),
        ..SweepOptions::default()
    };
    sweep(cohort, &model, &FrontierTemplate::new(b, GAMMA), &options).unwrap()
}

/// The six full-size frontiers at `beta = 0.1`, shared by criteria 5 and 6.
fn full_frontiers() -> &'static Vec<(String, Frontier)> {
    static FRONTIERS: OnceLock<Vec<(String, Frontier)>> = OnceLock::new();
    FRONTIERS.get_or_init(|| {
        let mut out = Vec::new();
        for preset in [Preset::Housing, Preset::Reentry] {
            for b in [0.15, 0.3, 0.45] {
                out.push((format!("{preset:?} b={b}"), full_sweep(preset, b, 0.1)));
            }
        }
        out
    })
}

struct Shape {
    max_dip: f64,
    endpoint_gap: f64,
    ratio90: Option<f64>,
}

fn shape(f: &Frontier) -> Shape {
    let max_dip = f
        .points
        .windows(2)
        .map(|w| w[0].v_ate - w[1].v_ate)
        .fold(0.0, f64::max);
    let rct_v = f.rct.v_ate.unwrap();
    let endpoint_gap = (f.points[0].v_ate - rct_v).abs();
    let ratio90 = ninety_percent_point(f)
        .unwrap()
        .point
        .map(|p| p.n_required as f64 / f.rct.n_required.unwrap() as f64);
    Shape {
        max_dip,
        endpoint_gap,
        ratio90,
    }
}

fn criterion_1(c: &mut Checks) {
    let start = Instant::now();
    let (mut grid_total, mut grid_miss, mut grid_worst) = (0, 0, 0.0f64);
    let (mut bar_total, mut bar_miss, mut bar_worst) = (0, 0, 0.0f64);
    let mut worst_violation = 0.0f64;
    let mut worst_vs_barrier_small = 0.0f64;
    for seed in 0..200 {
        let rp = random_problem(seed, 6);
        let flat = Flat::new(&rp.cohort, &rp.constraints, &Estimand::Ate, rp.gamma);
        let problem = DesignProblem::ate(&rp.cohort, rp.constraints.clone(), rp.gamma).unwrap();
        let sol = solve_dual(&problem, &SolverOptions::default()).unwrap();
        let p = sample_probabilities(&problem, &sol.lambda).unwrap();
        let (obj, viol) = (flat.objective(&p), flat.violation(&p));
        worst_violation = worst_violation.max(viol);
        if flat.n() <= 2 {
            let (g, _) = grid_oracle(&flat, 0.001).unwrap();
            let (b, _) = barrier_oracle(&flat, &rp.interior);
            grid_total += 1;
            grid_worst = grid_worst.max((obj - g).abs());
            worst_vs_barrier_small = worst_vs_barrier_small.max((obj - b).abs());
            if (obj - g).abs() > 1e-2 || viol > 5e-3 {
                grid_miss += 1;
            }
        } else {
            // A 0.001 lattice has 10^(3n) points here; the barrier method
            // stands in for it.
            let (b, _) = barrier_oracle(&flat, &rp.interior);
            bar_total += 1;
            bar_worst = bar_worst.max((obj - b).abs());
            if (obj - b).abs() > 1e-2 || viol > 5e-3 {
                bar_miss += 1;
            }
        }
    }
    c.check(
        grid_miss == 0,
        format!(
            "n <= 2 against the 0.001 grid: {grid_miss}/{grid_total} outside 1e-2 (max |diff| {grid_worst:.3e}; \
             same instances against the barrier optimum: max |diff| {worst_vs_barrier_small:.3e})"
        ),
    );
    c.check(
        bar_miss == 0,
        format!("n >= 3 against the barrier optimum: {bar_miss}/{bar_total} outside 1e-2 (max |diff| {bar_worst:.3e})"),
    );
    c.check(worst_violation <= 5e-3, format!("max constraint violation {worst_violation:.3e} <= 5e-3"));
    c.runtime(start, Duration::from_secs(60));
}

fn criterion_2(c: &mut Checks) {
    let start = Instant::now();
    let p = inner_solve(-6.75, 0.1);
    c.check((p - 2.0 / 3.0).abs() <= 1e-8, format!("inner_solve(-6.75, 0.1) = {p:.12}"));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-3.0..4.0));
        let gamma = [0.001, 0.01, 0.05, 0.1][rng.random_range(0..4)];
        worst = worst.max((inner_solve(a, gamma) - (1.0 - inner_solve(-a, gamma))).abs());
    }
    c.check(worst <= 1e-12, format!("max |p(a) - (1 - p(-a))| over 1000 draws = {worst:.2e}"));
    c.runtime(start, Duration::from_secs(10));
}

fn criterion_3(c: &mut Checks) {
    let start = Instant::now();
    let n = 5000;
    let cohort = Cohort::new((0..n).map(|i| Individual::new(format!("i{i}"), 0.5, 0.5)).collect()).unwrap();
    let probs = vec![0.5; n];
    let model = OutcomeModel::new(0.1).unwrap();
    let v = efficiency_variance_from_probs(&cohort, &probs, &Estimand::Ate, VarianceSource::model(&model))
        .unwrap()
        .v_ate;
    let aipw = simulate_trial_from_probs(&cohort, &probs, &model, Estimator::Aipw, 2000, 3).unwrap();
    let ipw = simulate_trial_from_probs(&cohort, &probs, &model, Estimator::Ipw, 2000, 3).unwrap();
    let scaled = n as f64 * aipw.empirical_var;
    c.check(
        (scaled / v - 1.0).abs() <= 0.1,
        format!("n * Var(AIPW) = {scaled:.4} vs bound {v:.4} (ratio {:.4})", scaled / v),
    );
    let scaled_ipw = n as f64 * ipw.empirical_var;
    c.check(scaled_ipw >= scaled, format!("n * Var(IPW) = {scaled_ipw:.4} >= n * Var(AIPW)"));
    c.runtime(start, Duration::from_secs(120));
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn criterion_4(c: &mut Checks) {
    let start = Instant::now();
    let generator = ScoreGenerator::default();
    let population = Cohort::new(
        synthesize_cohort(200_000, 0.54, &generator, 900)
            .unwrap()
            .individuals()
            .to_vec(),
    )
    .unwrap();
    let b = 0.3;
    let lo = b * population.mean_u();
    let hi = max_achievable_utility(&population.u_values(), b, GAMMA).unwrap();
    let constraints = vec![make_utility_floor(lo + 0.6 * (hi - lo)), make_budget_cap(b)];
    let pop_problem = DesignProblem::ate(&population, constraints.clone(), GAMMA).unwrap();
    let truth = solve_dual(&pop_problem, &SolverOptions::default()).unwrap();

    let sizes = [500, 2000, 8000];
    let seeds = 50;
    let mut violation = Vec::new();
    let mut gap = Vec::new();
    for &n in &sizes {
        let (mut v_n, mut g_n) = (Vec::new(), Vec::new());
        for s in 0..seeds {
            let sample = Cohort::new(
                synthesize_cohort(n, 0.54, &generator, 10_000 + 100 * n as u64 + s)
                    .unwrap()
                    .individuals()
                    .to_vec(),
            )
            .unwrap();
            let problem = DesignProblem::ate(&sample, constraints.clone(), GAMMA).unwrap();
            let sol = solve_dual(&problem, &SolverOptions::default()).unwrap();
            let policy = Policy::from_solution(&problem, &sol).unwrap();
            let probs = policy.probabilities(&population).unwrap();
            let worst = constraints
                .iter()
                .map(|k| k.excess(&population, &probs).unwrap())
                .fold(0.0, f64::max);
            let objective = probs.iter().map(|p| surrogate(*p)).sum::<f64>() / population.len() as f64;
            v_n.push(worst);
            g_n.push((objective - truth.objective).abs());
        }
        violation.push(median(v_n));
        gap.push(median(g_n));
    }
    for (name, series) in [("constraint violation", &violation), ("objective gap", &gap)] {
        let ratios: Vec<f64> = series.windows(2).map(|w| w[1] / w[0]).collect();
        let ok = ratios.iter().all(|r| (0.3..=0.8).contains(r));
        c.check(
            ok,
            format!(
                "median held-out {name} {:?} over n = {sizes:?}; ratios {:?} in [0.3, 0.8]",
                series.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
                ratios.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
            ),
        );
    }
    c.runtime(start, Duration::from_secs(300));
}

fn criterion_5(c: &mut Checks) {
    let start = Instant::now();
    let frontiers = full_frontiers();
    let mut in_range = 0;
    let mut below_two = 0;
    for (name, f) in frontiers {
        let s = shape(f);
        c.check(s.max_dip <= 1e-6, format!("{name}: v_ate nondecreasing in c (largest decrease {:.3e})", s.max_dip));
        c.check(
            s.endpoint_gap <= 1e-4,
            format!("{name}: min-c point v_ate within {:.2e} of the RCT anchor", s.endpoint_gap),
        );
        let r = s.ratio90.unwrap_or(f64::NAN);
        in_range += usize::from((1.5..=3.0).contains(&r));
        below_two += usize::from(r < 2.0);
        c.items.push((true, format!("{name}: n_90 / n_RCT = {r:.3}")));
    }
    c.check(in_range >= 4, format!("{in_range}/6 configurations with n_90 / n_RCT in [1.5, 3] (need 4)"));
    c.check(below_two >= 1, format!("{below_two}/6 configurations with n_90 / n_RCT < 2 (need 1)"));
    c.runtime(start, Duration::from_secs(600));
}

fn criterion_6(c: &mut Checks) {
    let start = Instant::now();
    let running: Vec<f64> = (0..FULL_N).map(|i| (i as f64 + 0.5) / FULL_N as f64).collect();
    let (deff, _) = rd_design_effect(&running, 0.5, 0.25).unwrap();
    c.check((deff - 4.0).abs() <= 0.1, format!("uniform running variable, symmetric window: deff = {deff:.4}"));
    let uniform = Cohort::new(running.iter().enumerate().map(|(i, u)| Individual::new(format!("i{i}"), *u, *u)).collect())
        .unwrap();
    let model = OutcomeModel::new(0.1).unwrap();
    let spec = PowerSpec::standard(0.05).unwrap();
    let rd = rd_benchmark(&uniform, &model, 0.5, &spec, 1).unwrap();
    c.check(
        (rd.deff - 4.0).abs() <= 0.1,
        format!("uniform scores, IK bandwidth {:.3}: deff = {:.4}", rd.bandwidth, rd.deff),
    );
    let mut in_range = 0;
    for (name, f) in full_frontiers() {
        let ratio = f.rd.as_ref().unwrap().n_required as f64 / f.rct.n_required.unwrap() as f64;
        in_range += usize::from((4.0..=10.0).contains(&ratio));
        c.items.push((true, format!("{name}: n_RD / n_RCT = {ratio:.3}")));
    }
    c.check(in_range >= 4, format!("{in_range}/6 configurations with n_RD / n_RCT in [4, 10] (need 4)"));
    c.runtime(start, Duration::from_secs(300));
}

fn criterion_7(c: &mut Checks) {
    let start = Instant::now();
    let spec = PowerSpec::new(0.05, 0.8, 0.1).unwrap();
    let n = wald_sample_size(1.0, &spec).unwrap();
    c.check(n == 785, format!("n(v=1, tau=0.1) = {n}"));
    let base = wald_sample_size_real(1.3, &spec).unwrap();
    let doubled = wald_sample_size_real(2.6, &spec).unwrap();
    let half_tau = wald_sample_size_real(1.3, &PowerSpec::new(0.05, 0.8, 0.05).unwrap()).unwrap();
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    c.check(rel(doubled, 2.0 * base) <= 1e-14, format!("n(2v) / n(v) = {}", doubled / base));
    c.check(rel(half_tau, 4.0 * base) <= 1e-14, format!("n(tau/2) / n(tau) = {}", half_tau / base));
    c.runtime(start, Duration::from_secs(10));
}

fn criterion_8(c: &mut Checks) {
    let start = Instant::now();
    let constant = vec![vec![0.37; 500], vec![-2.0; 500]];
    let bands = multiplier_bootstrap(&constant, 500, MultiplierLaw::Gaussian, 0.95, 1).unwrap();
    c.check(
        bands.iter().zip([0.37, -2.0]).all(|(b, x)| b.lo == x && b.hi == x),
        "constant functionals give zero-width bands at their value",
    );

    let generator = ScoreGenerator::default();
    let model = OutcomeModel::new(0.1).unwrap();
    let design = Cohort::new(synthesize_cohort(4000, 0.54, &generator, 80).unwrap().individuals().to_vec()).unwrap();
    let lo = 0.3 * design.mean_u();
    let hi = max_achievable_utility(&design.u_values(), 0.3, GAMMA).unwrap();
    let problem = DesignProblem::ate(
        &design,
        vec![make_utility_floor(lo + 0.5 * (hi - lo)), make_budget_cap(0.3)],
        GAMMA,
    )
    .unwrap();
    let policy = Policy::from_solution(&problem, &solve_dual(&problem, &SolverOptions::default()).unwrap()).unwrap();

    let population =
        Cohort::new(synthesize_cohort(1_000_000, 0.54, &generator, 81).unwrap().individuals().to_vec()).unwrap();
    let probs = policy.probabilities(&population).unwrap();
    let (r_pop, v_pop) = frontier_influence(&population, &probs, &model, &Estimand::Ate).unwrap();
    let truth = [r_pop.iter().sum::<f64>() / r_pop.len() as f64, v_pop.iter().sum::<f64>() / v_pop.len() as f64];

    let draws = 200;
    let mut covered = [0usize; 2];
    for d in 0..draws {
        let sample =
            Cohort::new(synthesize_cohort(2000, 0.54, &generator, 1000 + d).unwrap().individuals().to_vec()).unwrap();
        let probs = policy.probabilities(&sample).unwrap();
        let (r, v) = frontier_influence(&sample, &probs, &model, &Estimand::Ate).unwrap();
        let bands = multiplier_bootstrap(&[r, v], 2000, MultiplierLaw::Gaussian, 0.95, 5000 + d).unwrap();
        for k in 0..2 {
            covered[k] += usize::from(bands[k].contains(truth[k]));
        }
    }
    for (k, name) in ["recall", "v_ate"].iter().enumerate() {
        let rate = covered[k] as f64 / draws as f64;
        c.check(rate >= 0.9, format!("{name}: coverage {rate:.3} at 95% nominal over {draws} draws"));
    }
    c.runtime(start, Duration::from_secs(300));
}

fn criterion_9(c: &mut Checks) {
    let start = Instant::now();
    for (preset, seed) in [(Preset::Housing, 91), (Preset::Reentry, 92)] {
        let mut cohort = preset.synthesize(FULL_N, seed).unwrap();
        cohort.assign_random_groups(&["A", "B"], &[0.5, 0.5], seed + 1).unwrap();
        let template = FrontierTemplate::new(0.3, GAMMA);
        let grid = default_grid(&design_split(&cohort).unwrap(), 0.3, GAMMA, DEFAULT_GRID_POINTS).unwrap();
        for metric in [FairnessMetric::Utility, FairnessMetric::Rate] {
            let spec = FairnessSpec {
                metric,
                groups: ("A".into(), "B".into()),
                eps: 0.02,
            };
            let rows = fairness_comparison(&cohort, &template, &grid, &spec).unwrap();
            let solved: Vec<_> = rows.iter().filter_map(|r| Some((r.base.as_ref()?, r.fair.as_ref()?, r.pct_variance_increase?))).collect();
            let worst = solved.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
            let nested = solved.iter().all(|(b, f, _)| f.objective >= b.objective - 1e-9 * b.objective);
            let gap = solved.iter().map(|(_, f, _)| f.gap.abs()).fold(0.0, f64::max);
            let name = format!("{preset:?} {metric:?}");
            c.check(
                solved.len() == rows.len() && worst <= 5.0,
                format!("{name}: {}/{} levels solved, largest variance increase {worst:.3}% <= 5%", solved.len(), rows.len()),
            );
            c.check(nested, format!("{name}: constrained objective >= unconstrained at every level"));
            c.check(gap <= 0.02 + 1e-3, format!("{name}: largest realized gap {gap:.4} <= eps + 1e-3"));
        }
    }
    c.runtime(start, Duration::from_secs(300));
}

/// Largest recall reachable with variance at most `v` along a piecewise
/// linear frontier of `(variance, recall)` points ordered by utility level.
fn recall_at(points: &[(f64, f64)], v: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut push = |r: f64| best = Some(best.map_or(r, |b: f64| b.max(r)));
    for &(pv, pr) in points {
        if pv <= v {
            push(pr);
        }
    }
    for w in points.windows(2) {
        let ((v0, r0), (v1, r1)) = (w[0], w[1]);
        if (v0 - v) * (v1 - v) < 0.0 {
            push(r0 + (r1 - r0) * (v - v0) / (v1 - v0));
        }
    }
    best
}

fn criterion_10(c: &mut Checks) {
    let start = Instant::now();
    let cohort = cohort_for(Preset::Housing);
    let design = design_split(cohort).unwrap();
    let model = OutcomeModel::new(0.1).unwrap();
    let options = SweepOptions {
        seed: 10,
        benchmarks: false,
        ..SweepOptions::default()
    };
    let ate_template = FrontierTemplate::new(0.3, GAMMA);
    let ate = sweep(cohort, &model, &ate_template, &options).unwrap();

    let mut all_template = ate_template.clone();
    all_template.estimand = EstimandSpec::top_fraction(1.0).resolve(&design).unwrap();
    let all = sweep(cohort, &model, &all_template, &options).unwrap();
    let identical = ate.points.len() == all.points.len()
        && ate.points.iter().zip(&all.points).all(|(a, g)| {
            a.c == g.c && a.recall == g.recall && a.v_ate == g.v_ate && a.objective == g.objective && a.policy.lambda == g.policy.lambda
        });
    c.check(identical, format!("S = population: {} frontier points identical to the ATE frontier", ate.points.len()));

    let gate = EstimandSpec::top_fraction(0.3).resolve(&design).unwrap();
    let mut gate_template = ate_template.clone();
    gate_template.estimand = gate.clone();
    let gate_frontier = sweep(cohort, &model, &gate_template, &options).unwrap();
    let eval = optalloc::evaluator::evaluation_split(cohort).unwrap();
    let gate_v = |policy: &Policy| {
        let probs = policy.probabilities(&eval).unwrap();
        efficiency_variance_from_probs(&eval, &probs, &gate, VarianceSource::model(&model)).unwrap().v_ate
    };
    let ate_curve: Vec<(f64, f64)> = ate.points.iter().map(|p| (gate_v(&p.policy), p.recall)).collect();
    let gate_curve: Vec<(f64, f64)> = gate_frontier.points.iter().map(|p| (p.v_ate, p.recall)).collect();
    let gate_max_v = gate_curve.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut compared, mut worse, mut worst) = (0, 0, 0.0f64);
    for &(v, _) in &ate_curve {
        if v > gate_max_v {
            continue;
        }
        if let (Some(rg), Some(ra)) = (recall_at(&gate_curve, v), recall_at(&ate_curve, v)) {
            compared += 1;
            worst = worst.max(ra - rg);
            worse += usize::from(rg < ra);
        }
    }
    c.check(
        compared > 0 && worse == 0,
        format!(
            "top-30% GATE design: recall >= ATE design at {}/{} GATE-variance targets (largest shortfall {:.3e})",
            compared - worse,
            compared,
            worst.max(0.0)
        ),
    );
    c.runtime(start, Duration::from_secs(300));
}

fn criterion_11(c: &mut Checks) {
    let start = Instant::now();
    let mut ratios = Vec::new();
    let mut n_by_beta: HashMap<(String, u64), (u64, u64)> = HashMap::new();
    for preset in [Preset::Housing, Preset::Reentry] {
        for beta in [0.05, 0.15] {
            let f = full_sweep(preset, 0.3, beta);
            let s = shape(&f);
            let name = format!("{preset:?} beta={beta}");
            c.check(s.max_dip <= 1e-6, format!("{name}: v_ate nondecreasing in c (largest decrease {:.3e})", s.max_dip));
            c.check(s.endpoint_gap <= 1e-4, format!("{name}: min-c point within {:.2e} of the RCT anchor", s.endpoint_gap));
            let r = s.ratio90.unwrap_or(f64::NAN);
            c.items.push((true, format!("{name}: n_90 / n_RCT = {r:.3}")));
            ratios.push(r);
            let n90 = ninety_percent_point(&f).unwrap().point.map_or(0, |p| p.n_required);
            n_by_beta.insert((format!("{preset:?}"), (beta * 100.0) as u64), (f.rct.n_required.unwrap(), n90));
        }
    }
    let in_range = ratios.iter().filter(|r| (1.5..=3.0).contains(*r)).count();
    c.items.push((true, format!("{in_range}/{} configurations with n_90 / n_RCT in [1.5, 3]", ratios.len())));
    for preset in ["Housing", "Reentry"] {
        let lo = n_by_beta[&(preset.to_string(), 5)];
        let hi = n_by_beta[&(preset.to_string(), 15)];
        for (name, a, b) in [("RCT", lo.0, hi.0), ("90% point", lo.1, hi.1)] {
            let scaled = a as f64 / b as f64 / 9.0;
            c.check(
                (scaled - 1.0).abs() <= 0.2,
                format!("{preset} {name}: n(beta=0.05) / n(beta=0.15) / 9 = {scaled:.3}"),
            );
        }
    }
    c.runtime(start, Duration::from_secs(600));
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 11] = [
        (1, "oracle equivalence", criterion_1),
        (2, "inner solve", criterion_2),
        (3, "efficiency-bound attainment", criterion_3),
        (4, "sample-size rate", criterion_4),
        (5, "frontier shape and ratios", criterion_5),
        (6, "RD benchmark", criterion_6),
        (7, "Wald calculator", criterion_7),
        (8, "bootstrap", criterion_8),
        (9, "fairness cost", criterion_9),
        (10, "GATE", criterion_10),
        (11, "sensitivity to beta", criterion_11),
    ];
    let mut failed = Vec::new();
    for (k, title, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let mut checks = Checks { items: Vec::new() };
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut checks)));
        let pass = outcome.is_ok() && checks.items.iter().all(|(ok, _)| *ok);
        println!("criterion {k:>2} {} {title}", if pass { "PASS" } else { "FAIL" });
        for (ok, detail) in &checks.items {
            println!("      [{}] {detail}", if *ok { "ok" } else { "x" });
        }
        if let Err(e) = outcome {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("      [x] panicked: {msg}");
        }
        if !pass {
            failed.push(k);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
