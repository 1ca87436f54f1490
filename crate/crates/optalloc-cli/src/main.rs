//! `optalloc` command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 infeasible design, 3 data error.

mod fmt;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use optalloc::cohort::{
    load_cohort, save_cohort, synthesize_cohort, IndividualStream, OutcomeModel, Schema, ScoreGenerator,
    DEFAULT_TRAIN_FRACTION,
};
use optalloc::config::DesignConfig;
use optalloc::constraints::{check_feasibility, ConstraintKind, DesignProblem, Feasibility};
use optalloc::dual::solve_dual;
use optalloc::evaluator::{efficiency_variance, evaluation_split, utility_report, VarianceSource};
use optalloc::fairness::{fairness_comparison, write_fairness_table, FairnessSpec};
use optalloc::frontier::{
    bootstrap_bands, default_grid, design_split, frontier_svg, ninety_percent_point, population_tau, sweep,
    write_anchor_table, write_frontier_table, MultiplierLaw, SweepOptions, DEFAULT_GRID_POINTS,
};
use optalloc::policy::{assignment_log_writer, export_policy, import_policy, write_assignment, Arm, Policy};
use optalloc::power::{rct_benchmark, rd_benchmark, wald_sample_size, wald_sample_size_real, PowerSpec};
use optalloc::Error;

use fmt::sig6;

#[derive(Parser)]
#[command(name = "optalloc", version, about = "Variance-optimal randomized allocation designs")]
struct Cli {
    /// Worker threads for parallel sweeps; all cores when unset.
    #[arg(long, global = true, env = "OPTALLOC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a cohort file.
    Generate(GenerateArgs),
    /// Solve one design and write the policy.
    Solve(SolveArgs),
    /// Sweep the utility floor and benchmark against RCT and RD designs.
    Frontier(FrontierArgs),
    /// Compare designs with and without the configured fairness constraint.
    Fairness(FairnessArgs),
    /// Assign arrivals from a cohort file under a saved policy.
    Assign(AssignArgs),
    /// Required sample size for a policy or a benchmark design.
    Power(PowerArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dgp {
    Beta,
    Logistic,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0.54)]
    base_rate: f64,
    #[arg(long, value_enum, default_value = "beta")]
    dgp: Dgp,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Comma-separated labels assigned uniformly at random.
    #[arg(long, value_delimiter = ',')]
    groups: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_policy: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated utility-floor levels; an even grid when absent.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

#[derive(Args)]
struct EffectArgs {
    /// Relative effect: `tau(X) = beta * mu0(X)`.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    power: f64,
    /// Effect to detect; the model's mean effect over the evaluated population when unset.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct FrontierArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Bootstrap replicates for the bands; 0 disables them.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    law: Law,
    /// Include the regression-discontinuity anchor.
    #[arg(long)]
    benchmarks: bool,
    /// Solve every level from zero instead of warm-starting.
    #[arg(long)]
    cold: bool,
    #[command(flatten)]
    effect: EffectArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Gaussian,
    Rademacher,
}

#[derive(Args)]
struct FairnessArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Must contain a budget cap and one fairness constraint.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Design {
    Rct,
    Rd,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, required_unless_present = "variance")]
    cohort: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["design", "variance"])]
    policy: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "variance")]
    design: Option<Design>,
    /// Treatment budget for the benchmark designs.
    #[arg(long, default_value_t = 0.3)]
    budget: f64,
    /// Skip the cohort and size a trial for this asymptotic variance.
    #[arg(long, requires = "tau")]
    variance: Option<f64>,
    #[command(flatten)]
    effect: EffectArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible { .. } | Error::Divergence { .. } => 2,
            Error::Config(_) | Error::UnknownGenerator(_) => 1,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Frontier(a) => frontier(a),
        Command::Fairness(a) => fairness(a),
        Command::Assign(a) => assign(a),
        Command::Power(a) => power(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn generate(a: GenerateArgs) -> Outcome {
    let generator = match a.dgp {
        Dgp::Beta => ScoreGenerator::default(),
        Dgp::Logistic => ScoreGenerator::from_name("logistic")?,
    };
    let mut cohort = synthesize_cohort(a.n as usize, a.base_rate, &generator, a.seed)?;
    cohort.assign_random_split(a.train_fraction, a.seed)?;
    if !a.groups.is_empty() {
        let labels: Vec<&str> = a.groups.iter().map(String::as_str).collect();
        let probs = vec![1.0 / labels.len() as f64; labels.len()];
        cohort.assign_random_groups(&labels, &probs, a.seed.wrapping_add(1))?;
    }
    save_cohort(&cohort, &a.out)?;
    println!("wrote {} individuals to {}", cohort.len(), a.out.display());
    println!("mean mu0 {}", sig6(cohort.mean_mu0()));
    Ok(())
}

fn load(cohort: &Path, config: &Path) -> Result<(optalloc::cohort::Cohort, DesignConfig), Failure> {
    let cohort = load_cohort(cohort, &Schema::default())?;
    let config = DesignConfig::load(config).map_err(|e| match e {
        Error::Io(e) => Failure::data(format!("config: {e}")),
        other => other.into(),
    })?;
    Ok((cohort, config))
}

fn check(problem: &DesignProblem) -> Outcome {
    match check_feasibility(problem)? {
        Feasibility::Feasible => Ok(()),
        Feasibility::Infeasible { label, witness } => Err(Failure::infeasible(format!(
            "infeasible design: constraint `{label}` cannot be met (best achievable {})",
            sig6(witness)
        ))),
    }
}

fn solve(a: SolveArgs) -> Outcome {
    let (cohort, config) = load(&a.cohort, &a.config)?;
    let design = design_split(&cohort)?;
    let constraints = config.build_constraints(&design)?;
    let estimand = config.build_estimand(&design)?;
    let problem = DesignProblem::new(&design, constraints, config.gamma, estimand)?;
    check(&problem)?;
    let solution = solve_dual(&problem, &config.solver)?;
    if !solution.converged {
        log::warn!("stopped after {} iterations without meeting the tolerance", solution.iterations);
    }
    let policy = Policy::from_solution(&problem, &solution)?;
    export_policy(&policy, &a.out_policy)?;

    println!("design sample   {}", design.len());
    println!("objective       {}", sig6(solution.objective));
    println!("kkt residual    {}", sig6(solution.kkt_residual));
    println!("iterations      {}", solution.iterations);
    println!("converged       {}", solution.converged);
    println!("lambda          {}", fmt::list(&solution.lambda));
    for ((c, l), g) in problem.constraints.iter().zip(&solution.lambda).zip(&solution.constraint_values) {
        println!("  {:<28} lambda {:<12} mean g {:<12} rhs {}", c.label, sig6(*l), sig6(*g), sig6(c.rhs));
    }
    println!("policy written to {}", a.out_policy.display());
    Ok(())
}

fn model(beta: f64) -> Result<OutcomeModel, Failure> {
    Ok(OutcomeModel::new(beta)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn frontier(a: FrontierArgs) -> Outcome {
    let (cohort, config) = load(&a.cohort, &a.config)?;
    let design = design_split(&cohort)?;
    let template = config.frontier_template(&design)?;
    let model = model(a.effect.beta)?;
    let options = SweepOptions {
        grid: (!a.grid.grid.is_empty()).then(|| a.grid.grid.clone()),
        grid_points: a.grid.grid_points,
        warm_start: !a.cold,
        benchmarks: a.benchmarks,
        alpha: a.effect.alpha,
        power: a.effect.power,
        tau_detect: a.effect.tau,
        seed: a.seed,
    };
    let mut frontier = sweep(&cohort, &model, &template, &options)?;
    if a.bootstrap > 0 && !frontier.points.is_empty() {
        let law = match a.law {
            Law::Gaussian => MultiplierLaw::Gaussian,
            Law::Rademacher => MultiplierLaw::Rademacher,
        };
        frontier.bands = Some(bootstrap_bands(&frontier, &cohort, &model, a.bootstrap, law, a.seed)?);
    }

    std::fs::create_dir_all(&a.out)?;
    write_frontier_table(&frontier, create(&a.out.join("frontier.csv"))?)?;
    write_anchor_table(&frontier, create(&a.out.join("anchors.csv"))?)?;
    std::fs::write(a.out.join("frontier.svg"), frontier_svg(&frontier))?;
    let json = serde_json::to_string_pretty(&frontier).map_err(|e| Failure::data(e.to_string()))?;
    std::fs::write(a.out.join("frontier.json"), json)?;

    println!("levels solved   {} ({} infeasible)", frontier.points.len(), frontier.failures.len());
    for f in &frontier.failures {
        println!("  c = {}: {}", sig6(f.c), f.reason);
    }
    let rct_n = frontier.rct.n_required;
    println!(
        "rct             n {}  recall {}",
        rct_n.map_or("-".into(), |n| n.to_string()),
        sig6(frontier.rct.recall)
    );
    println!("need-based      recall {}", sig6(frontier.need_based.recall));
    if let Some(rd) = &frontier.rd {
        println!(
            "rd              n {}  deff {}  bandwidth {}",
            rd.n_required,
            sig6(rd.deff),
            sig6(rd.bandwidth)
        );
    }
    match ninety_percent_point(&frontier)?.point {
        Some(p) => {
            let ratio = rct_n.map(|n| p.n_required_real / n as f64);
            println!(
                "90% utility     n {}  recall {}  n/n_rct {}",
                p.n_required,
                sig6(p.recall),
                ratio.map_or("-".into(), sig6)
            );
        }
        None => println!("90% utility     not reached on this grid"),
    }
    println!("tables written to {}", a.out.display());
    Ok(())
}

fn fairness(a: FairnessArgs) -> Outcome {
    let (cohort, config) = load(&a.cohort, &a.config)?;
    let design = design_split(&cohort)?;
    let spec = config
        .constraints
        .iter()
        .find_map(|c| match c {
            optalloc::config::ConstraintConfig::Fairness { metric, eps, groups } => Some(FairnessSpec {
                metric: *metric,
                groups: (groups[0].clone(), groups[1].clone()),
                eps: *eps,
            }),
            _ => None,
        })
        .ok_or_else(|| Failure::usage("config has no fairness constraint"))?;
    let mut template = config.frontier_template(&design)?;
    template
        .extra
        .retain(|c| !matches!(c.kind, ConstraintKind::FairnessUtilityGap | ConstraintKind::FairnessRateGap));
    let grid = if a.grid.grid.is_empty() {
        default_grid(&design, template.budget, template.gamma, a.grid.grid_points)?
    } else {
        a.grid.grid.clone()
    };
    let rows = fairness_comparison(&cohort, &template, &grid, &spec)?;
    write_fairness_table(&rows, create(&a.out)?)?;
    for r in &rows {
        match (r.pct_variance_increase, &r.note) {
            (Some(p), _) => println!("c = {:<10} variance increase {}%", sig6(r.c), sig6(p)),
            (None, note) => println!("c = {:<10} {}", sig6(r.c), note.as_deref().unwrap_or("")),
        }
    }
    println!("table written to {}", a.out.display());
    Ok(())
}

fn assign(a: AssignArgs) -> Outcome {
    let policy = import_policy(&a.policy)?;
    let input = BufReader::new(File::open(&a.input)?);
    let rows = IndividualStream::new(input, &Schema::default())?;
    let needs_groups = policy.constraints.iter().any(|c| c.uses_groups());
    if needs_groups && !rows.has_groups() {
        return Err(Failure::data("policy has group constraints but the input has no `group` column"));
    }
    let mut log = assignment_log_writer(create(&a.out)?)?;
    let (mut count, mut treated, mut p_sum) = (0u64, 0u64, 0.0);
    for row in rows {
        let (ind, _) = row?;
        let assignment = policy.draw_assignment(&ind, a.seed)?;
        write_assignment(&mut log, &assignment, a.seed)?;
        count += 1;
        treated += u64::from(assignment.arm == Arm::Treated);
        p_sum += assignment.p;
    }
    log.flush()?;
    println!("assigned        {count}");
    if count > 0 {
        println!("treated share   {}", sig6(treated as f64 / count as f64));
        println!("mean p          {}", sig6(p_sum / count as f64));
    }
    println!("log written to {}", a.out.display());
    Ok(())
}

struct PowerRow {
    design: String,
    v_ate: Option<f64>,
    tau: f64,
    n_required: u64,
    recall: Option<f64>,
    deff: Option<f64>,
    bandwidth: Option<f64>,
    fraction_in_bandwidth: Option<f64>,
}

fn power(a: PowerArgs) -> Outcome {
    let row = if let Some(v) = a.variance {
        let tau = a.effect.tau.unwrap_or_default();
        let spec = PowerSpec::new(a.effect.alpha, a.effect.power, tau)?;
        println!("n (real)        {}", sig6(wald_sample_size_real(v, &spec)?));
        PowerRow {
            design: "wald".into(),
            v_ate: Some(v),
            tau,
            n_required: wald_sample_size(v, &spec)?,
            recall: None,
            deff: None,
            bandwidth: None,
            fraction_in_bandwidth: None,
        }
    } else {
        let path = a.cohort.as_ref().ok_or_else(|| Failure::usage("--cohort is required"))?;
        let cohort = load_cohort(path, &Schema::default())?;
        let model = model(a.effect.beta)?;
        let eval = evaluation_split(&cohort)?;
        match (&a.policy, a.design) {
            (Some(path), _) => {
                let policy = import_policy(path)?;
                let tau = a.effect.tau.unwrap_or_else(|| population_tau(&eval, &model, &policy.estimand));
                let spec = PowerSpec::new(a.effect.alpha, a.effect.power, tau)?;
                let v = efficiency_variance(&policy, &cohort, VarianceSource::model(&model))?;
                let util = utility_report(&policy, &eval)?;
                PowerRow {
                    design: "policy".into(),
                    v_ate: Some(v.v_ate),
                    tau,
                    n_required: wald_sample_size(v.v_ate, &spec)?,
                    recall: Some(util.recall),
                    deff: None,
                    bandwidth: None,
                    fraction_in_bandwidth: None,
                }
            }
            (None, design) => {
                let tau = a
                    .effect
                    .tau
                    .unwrap_or_else(|| population_tau(&eval, &model, &optalloc::constraints::Estimand::Ate));
                let spec = PowerSpec::new(a.effect.alpha, a.effect.power, tau)?;
                match design.unwrap_or(Design::Rct) {
                    Design::Rct => {
                        let r = rct_benchmark(&cohort, &model, a.budget, &spec)?;
                        PowerRow {
                            design: "rct".into(),
                            v_ate: Some(r.v_ate),
                            tau,
                            n_required: r.n_required,
                            recall: Some(r.recall),
                            deff: None,
                            bandwidth: None,
                            fraction_in_bandwidth: None,
                        }
                    }
                    Design::Rd => {
                        let r = rd_benchmark(&cohort, &model, a.budget, &spec, a.seed)?;
                        PowerRow {
                            design: "rd".into(),
                            v_ate: None,
                            tau,
                            n_required: r.n_required,
                            recall: Some(r.recall),
                            deff: Some(r.deff),
                            bandwidth: Some(r.bandwidth),
                            fraction_in_bandwidth: Some(r.fraction_in_bandwidth),
                        }
                    }
                }
            }
        }
    };

    println!("design          {}", row.design);
    let show = |name: &str, x: Option<f64>| {
        if let Some(x) = x {
            println!("{name:<16}{}", sig6(x));
        }
    };
    show("v_ate", row.v_ate);
    show("tau", Some(row.tau));
    println!("n_required      {}", row.n_required);
    show("recall", row.recall);
    show("deff", row.deff);
    show("bandwidth", row.bandwidth);
    show("f_h", row.fraction_in_bandwidth);

    if let Some(out) = &a.out {
        let mut w = create(out)?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        writeln!(w, "design,v_ate,tau,n_required,recall,deff,bandwidth,f_h")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.design,
            opt(row.v_ate),
            row.tau,
            row.n_required,
            opt(row.recall),
            opt(row.deff),
            opt(row.bandwidth),
            opt(row.fraction_in_bandwidth)
        )?;
        w.flush()?;
    }
    Ok(())
}
