//! The `ramsa` command line.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the command itself
//! fails. Every random draw derives from `--seed`.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::blackbox::{builtin_problem, reference_solution, Problem, BUILTIN_NAMES};
use crate::config::{preset, preset_names, problem_for_kernel, RunConfigFile};
use crate::error::{Error, Result};
use crate::rng;
use crate::smoothing::KernelKind;
use crate::solver::{self, EstimatorKind};
use crate::tuning::{self, TuneOptions};
use crate::validation::{self, EpistemicGrid, FeasibilityReport};

#[derive(Debug, Parser)]
#[command(
    name = "ramsa",
    version,
    about = "CVaR-constrained blackbox optimization under uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List built-in problems and presets.
    List,
    /// Pick beta1 and the design step from gradient samples at x0.
    Tune(TuneArgs),
    /// Run the solver once.
    Solve(SolveArgs),
    /// Run the solver repeatedly and validate every final point.
    Trial(TrialArgs),
    /// Monte Carlo feasibility of a point.
    Validate(ValidateArgs),
    /// Worst-case feasibility of a point on the side impact problem with
    /// epistemic means.
    Epistemic(EpistemicArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Built-in problem name.
    #[arg(long)]
    problem: Option<String>,
    /// TOML run file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset, e.g. SCD or SRD-truncated.
    #[arg(long, alias = "paper-row")]
    preset: Option<String>,
    /// Blackbox calls per run.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian or truncated.
    #[arg(long)]
    kernel: Option<String>,
    /// one-sided, two-sided or central.
    #[arg(long)]
    estimator: Option<String>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long)]
    estimator: Option<String>,
    /// Gradient samples per grid value.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solver budget written into the emitted config.
    #[arg(long)]
    budget: Option<u64>,
    /// Where to write the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Per-iteration CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Validate the final point with this many Monte Carlo samples.
    #[arg(long)]
    mc: Option<usize>,
    /// Final point as a one-row CSV in original units.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrialArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    runs: Option<usize>,
    /// Monte Carlo samples per final point.
    #[arg(long)]
    mc: Option<usize>,
    /// Per-run CSV report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    problem: String,
    /// One-row CSV in original units.
    #[arg(long)]
    point: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Points,
    Interval,
}

#[derive(Debug, Args)]
struct EpistemicArgs {
    #[arg(long, value_enum)]
    variant: Variant,
    #[arg(long)]
    point: PathBuf,
    /// Grid points per epistemic axis (interval variant).
    #[arg(long, default_value_t = validation::DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = 10_000)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::List => list(out),
        Command::Tune(a) => tune(a, out),
        Command::Solve(a) => solve(a, out),
        Command::Trial(a) => trial(a, out),
        Command::Validate(a) => validate(a, out),
        Command::Epistemic(a) => epistemic(a, out),
    }
}

fn list(out: &mut dyn Write) -> Result<()> {
    writeln!(out, "problems:")?;
    for name in BUILTIN_NAMES {
        let p = builtin_problem(name)?;
        writeln!(out, "  {name:<24} n = {:<2} m = {}", p.n(), p.m())?;
    }
    writeln!(out, "presets:")?;
    for name in preset_names() {
        writeln!(out, "  {name}")?;
    }
    Ok(())
}

fn parse_estimator(s: Option<&str>) -> Result<Option<EstimatorKind>> {
    s.map(EstimatorKind::parse).transpose()
}

/// Run file from `--preset` / `--config` / defaults with the flags laid
/// over it.
fn resolve(run: &RunArgs) -> Result<(RunConfigFile, Problem)> {
    let mut cfg = match (&run.preset, &run.config) {
        (Some(row), _) => preset(row)?,
        (None, Some(path)) => RunConfigFile::load(path)?,
        (None, None) => RunConfigFile::default(),
    };
    if let Some(p) = &run.problem {
        cfg.problem = Some(p.clone());
    }
    if let Some(b) = run.budget {
        cfg.solver.budget = b;
    }
    if let Some(k) = &run.kernel {
        cfg.solver.kernel = KernelKind::parse(k)?;
    }
    if let Some(e) = parse_estimator(run.estimator.as_deref())? {
        cfg.solver.estimator = Some(e);
    }
    if cfg.problem.is_none() {
        return Err(Error::Input(
            "a problem is required (--problem, --config or --preset)".into(),
        ));
    }
    cfg.solver.validate()?;
    let problem = cfg.build_problem()?;
    Ok((cfg, problem))
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn tune(a: TuneArgs, out: &mut dyn Write) -> Result<()> {
    let kernel = KernelKind::parse(&a.kernel)?;
    let problem = problem_for_kernel(&a.problem, kernel)?;
    let opts = TuneOptions {
        samples: a.samples,
        kernel,
        estimator: parse_estimator(a.estimator.as_deref())?,
        seed: a.seed,
        ..TuneOptions::default()
    };
    let r = tuning::tune(&problem, &opts)?;
    writeln!(out, "problem {}", r.problem)?;
    writeln!(out, "kernel {}", kernel.as_str())?;
    writeln!(out, "estimator {}", opts.estimator_kind().as_str())?;
    writeln!(out, "samples {}", r.samples)?;
    writeln!(out, "grid {}", join(&r.grid))?;
    writeln!(out, "avg_variance {}", join(&r.avg_variance))?;
    writeln!(out, "argmin {}", r.argmin)?;
    writeln!(out, "beta1 {}", r.beta1)?;
    writeln!(out, "grad_norm_ratio {}", r.grad_norm_ratio)?;
    writeln!(out, "s2 {}", r.s2)?;
    writeln!(out, "tuning_evaluations {}", r.evaluations)?;

    let mut cfg = RunConfigFile {
        problem: Some(problem.name.clone()),
        ..RunConfigFile::default()
    };
    cfg.solver = r.to_config(&cfg.solver);
    cfg.solver.estimator = opts.estimator;
    if let Some(b) = a.budget {
        cfg.solver.budget = b;
    }
    let text = cfg.to_toml_string()?;
    match &a.out {
        Some(path) => {
            let mut f = create(path)?;
            f.write_all(text.as_bytes())?;
            f.flush()?;
            writeln!(out, "config written to {}", path.display())?;
        }
        None => {
            writeln!(out)?;
            write!(out, "{text}")?;
        }
    }
    Ok(())
}

fn write_report(out: &mut dyn Write, r: &FeasibilityReport) -> Result<()> {
    writeln!(out, "mean_objective {}", r.mean_objective)?;
    for (j, (p, se)) in r.constraint_probs.iter().zip(&r.std_errors).enumerate() {
        writeln!(out, "prob_{} {p} (se {se})", j + 1)?;
    }
    writeln!(out, "samples {} failures {}", r.n_samples, r.failures)?;
    writeln!(out, "success {}", r.success)?;
    Ok(())
}

fn solve(a: SolveArgs, out: &mut dyn Write) -> Result<()> {
    let (mut cfg, problem) = resolve(&a.run)?;
    if let Some(s) = a.run.seed {
        cfg.solver.seed = s;
    }
    cfg.solver.trace = a.trace.is_some();
    let r = solver::run(&problem, &cfg.solver)?;
    writeln!(
        out,
        "problem {} (n = {}, m = {})",
        problem.name,
        problem.n(),
        problem.m()
    )?;
    writeln!(out, "status {:?}", r.status)?;
    if let Some(msg) = &r.message {
        writeln!(out, "message {msg}")?;
    }
    writeln!(out, "iterations {}", r.iterations)?;
    writeln!(
        out,
        "evaluations {} (outside box {})",
        r.evaluations, r.outside_evaluations
    )?;
    writeln!(out, "x {}", join(&r.x))?;
    writeln!(out, "t {}", join(&r.t))?;
    writeln!(out, "lambda {}", join(&r.lambda))?;
    writeln!(out, "alpha {}", join(&r.alpha))?;
    if let Some(path) = &a.trace {
        let mut f = create(path)?;
        solver::write_trace_csv(&problem, &r, &mut f)?;
        f.flush()?;
    }
    if let Some(path) = &a.out {
        let mut f = create(path)?;
        write_point(&mut f, &r.x)?;
        f.flush()?;
    }
    if let Some(mc) = a.mc {
        let report = validation::verify(&problem, &r.x_unit, mc, rng::child_seed(cfg.solver.seed, 0))?;
        write_report(out, &report)?;
    }
    Ok(())
}

fn trial(a: TrialArgs, out: &mut dyn Write) -> Result<()> {
    let (mut cfg, problem) = resolve(&a.run)?;
    if let Some(s) = a.run.seed {
        cfg.trial.master_seed = s;
    }
    if let Some(r) = a.runs {
        cfg.trial.runs = r;
    }
    if let Some(mc) = a.mc {
        cfg.trial.mc_samples = mc;
    }
    let go = || {
        validation::run_trial(
            &problem,
            &cfg.solver,
            cfg.trial.runs,
            cfg.trial.mc_samples,
            cfg.trial.master_seed,
        )
    };
    let report = match a.jobs {
        Some(0) => return Err(Error::Input("--jobs must be positive".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Input(e.to_string()))?
            .install(go)?,
        None => go()?,
    };
    let s = &report.summary;
    writeln!(
        out,
        "problem {} (n = {}, m = {})",
        problem.name,
        problem.n(),
        problem.m()
    )?;
    writeln!(
        out,
        "runs {} budget {} mc {}",
        cfg.trial.runs, cfg.solver.budget, cfg.trial.mc_samples
    )?;
    writeln!(out, "master_seed {}", report.master_seed)?;
    writeln!(out, "successes {}/{}", s.success_count, report.runs.len())?;
    writeln!(out, "mean_objective {}", s.mean_objective)?;
    writeln!(out, "mean_point {}", join(&s.mean_point))?;
    writeln!(out, "std_point {}", join(&s.std_point))?;
    let aborted = report
        .runs
        .iter()
        .filter(|r| r.status == solver::RunStatus::Aborted)
        .count();
    if aborted > 0 {
        writeln!(out, "aborted {aborted}")?;
    }
    if let Some(x) = reference_solution(&problem.name) {
        writeln!(out, "reference_point {}", join(&x))?;
    }
    if let Some(path) = &a.out {
        let mut f = create(path)?;
        validation::write_trial_csv(&report, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let problem = builtin_problem(&a.problem)?;
    let x_unit = read_point(&a.point, &problem)?;
    let r = validation::verify(&problem, &x_unit, a.mc, rng::child_seed(a.seed, 0))?;
    writeln!(out, "problem {}", problem.name)?;
    write_report(out, &r)
}

fn epistemic(a: EpistemicArgs, out: &mut dyn Write) -> Result<()> {
    let name = match a.variant {
        Variant::Points => "VSI-epistemic-points",
        Variant::Interval => "VSI-epistemic-interval",
    };
    let problem = builtin_problem(name)?;
    let x_unit = read_point(&a.point, &problem)?;
    let seed = rng::child_seed(a.seed, 0);
    writeln!(out, "problem {name}")?;
    match a.variant {
        Variant::Points => {
            for scenario in validation::epistemic_scenarios(&problem) {
                let p = problem.with_uncertainty(problem.uncertainty.with_fixed_locations(&scenario)?);
                let r = validation::mc_feasibility(&p, &x_unit, a.mc, seed)?;
                let means: Vec<f64> = scenario.iter().map(|(_, v)| *v).collect();
                writeln!(
                    out,
                    "means {} probs {} success {}",
                    join(&means),
                    join(&r.constraint_probs),
                    r.success
                )?;
            }
        }
        Variant::Interval => {
            let grid = EpistemicGrid::for_problem(&problem, a.grid)?;
            for w in validation::worst_case_epistemic(&problem, &x_unit, &grid, a.mc, seed)? {
                writeln!(
                    out,
                    "constraint {} worst_means {} value {} prob {} feasible {}",
                    w.constraint,
                    join(&w.locations),
                    w.value,
                    w.probability,
                    w.feasible
                )?;
            }
        }
    }
    let overall = validation::verify_with_grid(&problem, &x_unit, a.mc, seed, a.grid)?;
    writeln!(out, "success {}", overall.success)?;
    Ok(())
}

/// Writes a point as a one-row CSV with an `x_1..x_n` header.
pub fn write_point<W: Write>(mut out: W, x: &[f64]) -> Result<()> {
    let header: Vec<String> = (1..=x.len()).map(|i| format!("x_{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    writeln!(out, "{}", x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))?;
    Ok(())
}

/// Parses a one-row point CSV in original units. A non-numeric first line
/// is taken as a header; blank lines and `#` comments are skipped.
pub fn parse_point(text: &str) -> Result<Vec<f64>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match fields {
            Ok(v) => rows.push(v),
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(e) => return Err(Error::Input(format!("line {}: {e}", i + 1))),
        }
    }
    match rows.len() {
        1 => Ok(rows.pop().unwrap_or_default()),
        n => Err(Error::Input(format!("expected one point row, found {n}"))),
    }
}

fn read_point(path: &Path, problem: &Problem) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let x = parse_point(&text)?;
    if !problem.bounds().contains(&x) {
        return Err(Error::Input(format!(
            "point {} lies outside the bounds of {}",
            join(&x),
            problem.name
        )));
    }
    problem.bounds().to_unit(&x)
}
