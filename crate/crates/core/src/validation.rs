//! Monte Carlo assessment of solutions and the multi-run trial protocol.
//!
//! A point is a success when every raw constraint `C_j <= 0` holds with
//! empirical probability at least 0.99. Problems with epistemic locations
//! are checked per scenario: every combination for point-valued locations,
//! the per-constraint worst case over a grid for interval-valued ones.

use std::io::Write;

use rayon::prelude::*;

use crate::blackbox::{Distribution, EpistemicKind, Problem};
use crate::error::{Error, Result};
use crate::rng;
use crate::solver::{self, RunStatus, SolverConfig};

/// Required probability of each constraint.
pub const SUCCESS_PROBABILITY: f64 = 0.99;

/// Monte Carlo samples drawn per parallel chunk.
const CHUNK: usize = 1000;

/// Share of failed evaluations above which a report is marked invalid.
const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Mean raw objective.
    pub mean_objective: f64,
    /// Empirical `P(C_j <= 0)`, `j = 1..m`.
    pub constraint_probs: Vec<f64>,
    /// `sqrt(p (1 - p) / n)` for each probability.
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
    /// Samples whose evaluation produced a non-finite output.
    pub failures: usize,
    pub valid: bool,
    pub success: bool,
}

impl FeasibilityReport {
    fn from_sums(obj_sum: f64, feasible: &[usize], n_samples: usize, failures: usize) -> Self {
        let ok = (n_samples - failures).max(1) as f64;
        let constraint_probs: Vec<f64> = feasible.iter().map(|&c| c as f64 / ok).collect();
        let std_errors = constraint_probs.iter().map(|p| (p * (1.0 - p) / ok).sqrt()).collect();
        let valid = (failures as f64) <= MAX_FAILURE_RATE * n_samples as f64;
        let success = valid && constraint_probs.iter().all(|&p| p >= SUCCESS_PROBABILITY);
        Self {
            mean_objective: obj_sum / ok,
            constraint_probs,
            std_errors,
            n_samples,
            failures,
            valid,
            success,
        }
    }

    /// Lowest constraint probability (1 when unconstrained).
    pub fn worst_probability(&self) -> f64 {
        self.constraint_probs.iter().copied().fold(1.0, f64::min)
    }
}

/// Estimates the mean objective and constraint probabilities at `x_unit`
/// from `n_samples` fresh draws of `xi`.
pub fn mc_feasibility(problem: &Problem, x_unit: &[f64], n_samples: usize, seed: u64) -> Result<FeasibilityReport> {
    if n_samples == 0 {
        return Err(Error::Input("Monte Carlo sample count must be positive".into()));
    }
    let x = problem.bounds().scale_to_box(x_unit)?;
    let m = problem.m();
    let chunks = n_samples.div_ceil(CHUNK);
    let partial: Vec<(f64, Vec<usize>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng::child_stream(seed, c as u64);
            let count = CHUNK.min(n_samples - c * CHUNK);
            let mut obj = 0.0;
            let mut feasible = vec![0usize; m];
            let mut failures = 0;
            for _ in 0..count {
                let xi = problem.sample_xi(&x, &mut stream);
                match problem.evaluate_raw(&x, &xi) {
                    Ok(out) => {
                        obj += out[0];
                        for (f, c) in feasible.iter_mut().zip(&out[1..]) {
                            *f += usize::from(*c <= 0.0);
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            (obj, feasible, failures)
        })
        .collect();

    let mut obj = 0.0;
    let mut feasible = vec![0usize; m];
    let mut failures = 0;
    for (o, f, e) in partial {
        obj += o;
        for (a, b) in feasible.iter_mut().zip(f) {
            *a += b;
        }
        failures += e;
    }
    Ok(FeasibilityReport::from_sums(obj, &feasible, n_samples, failures))
}

/// Search box for interval-valued epistemic locations.
#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicGrid {
    /// Uncertainty components whose location is searched.
    pub indices: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
}

impl EpistemicGrid {
    pub fn new(indices: Vec<usize>, lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Input(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        if indices.len() != lower.len() || lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: indices.len(),
                actual: lower.len().min(upper.len()),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Input("epistemic grid needs lower <= upper".into()));
        }
        Ok(Self {
            indices,
            lower,
            upper,
            resolution,
        })
    }

    /// Grid spanning the support of each epistemic location of `problem`.
    pub fn for_problem(problem: &Problem, resolution: usize) -> Result<Self> {
        let indices = problem.uncertainty.epistemic_indices();
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for &i in &indices {
            let d = problem.uncertainty.components[i]
                .epistemic_mean
                .as_ref()
                .expect("index reported as epistemic");
            let (lo, hi) = match d {
                Distribution::BernoulliPair { first, second } => (first.min(*second), first.max(*second)),
                other => other.support(),
            };
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Input(format!("epistemic component {i} has unbounded support")));
            }
            lower.push(lo);
            upper.push(hi);
        }
        Self::new(indices, lower, upper, resolution)
    }

    /// All grid nodes, last axis fastest.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let d = self.indices.len();
        let r = self.resolution;
        let total = r.pow(d as u32);
        (0..total)
            .map(|mut flat| {
                let mut node = vec![0.0; d];
                for axis in (0..d).rev() {
                    let i = flat % r;
                    flat /= r;
                    let f = i as f64 / (r - 1) as f64;
                    node[axis] = self.lower[axis] + f * (self.upper[axis] - self.lower[axis]);
                }
                node
            })
            .collect()
    }
}

/// Worst-case location for one constraint and its Monte Carlo re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Constraint number `j` (1-based, as in `C_j`).
    pub constraint: usize,
    pub locations: Vec<f64>,
    /// `C_j(x, E[xi])` at the worst location.
    pub value: f64,
    pub probability: f64,
    pub feasible: bool,
}

fn pinned(problem: &Problem, indices: &[usize], values: &[f64]) -> Result<Problem> {
    let fixed: Vec<(usize, f64)> = indices.iter().copied().zip(values.iter().copied()).collect();
    Ok(problem.with_uncertainty(problem.uncertainty.with_fixed_locations(&fixed)?))
}

/// Maximizes each deterministic constraint `C_j(x, E[xi])` over the grid,
/// then estimates `P(C_j <= 0)` with the locations pinned at the maximizer.
pub fn worst_case_epistemic(
    problem: &Problem,
    x_unit: &[f64],
    grid: &EpistemicGrid,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<WorstCase>> {
    let x = problem.bounds().scale_to_box(x_unit)?;
    let m = problem.m();
    let mut best: Vec<Option<(f64, Vec<f64>)>> = vec![None; m];
    for node in grid.nodes() {
        let p = pinned(problem, &grid.indices, &node)?;
        let Ok(out) = p.evaluate_raw(&x, &p.uncertainty.mean()) else {
            continue;
        };
        for (j, slot) in best.iter_mut().enumerate() {
            let v = out[j + 1];
            if slot.as_ref().is_none_or(|(b, _)| v > *b) {
                *slot = Some((v, node.clone()));
            }
        }
    }

    let mut checked: Vec<(Vec<f64>, FeasibilityReport)> = Vec::new();
    let mut out = Vec::with_capacity(m);
    for (j, slot) in best.into_iter().enumerate() {
        let (value, locations) =
            slot.ok_or_else(|| Error::Input("every epistemic grid node failed to evaluate".into()))?;
        let report = match checked.iter().find(|(l, _)| *l == locations) {
            Some((_, r)) => r.clone(),
            None => {
                let r = mc_feasibility(&pinned(problem, &grid.indices, &locations)?, x_unit, mc_samples, seed)?;
                checked.push((locations.clone(), r.clone()));
                r
            }
        };
        let probability = report.constraint_probs[j];
        out.push(WorstCase {
            constraint: j + 1,
            locations,
            value,
            probability,
            feasible: report.valid && probability >= SUCCESS_PROBABILITY,
        });
    }
    Ok(out)
}

/// Every combination of point-valued epistemic locations.
pub fn epistemic_scenarios(problem: &Problem) -> Vec<Vec<(usize, f64)>> {
    let mut scenarios = vec![Vec::new()];
    for i in problem.uncertainty.epistemic_indices() {
        let values = match problem.uncertainty.components[i].epistemic_mean {
            Some(Distribution::BernoulliPair { first, second }) => vec![first, second],
            _ => continue,
        };
        scenarios = scenarios
            .into_iter()
            .flat_map(|s| {
                values.iter().map(move |&v| {
                    let mut s = s.clone();
                    s.push((i, v));
                    s
                })
            })
            .collect();
    }
    scenarios
}

/// Resolution per axis of the default worst-case grid.
pub const DEFAULT_GRID: usize = 15;

/// Feasibility check matched to the problem's epistemic structure.
///
/// The objective mean always comes from the problem as given. Constraint
/// probabilities are the nominal ones, the minimum over all point
/// scenarios, or the per-constraint worst-case ones.
pub fn verify(problem: &Problem, x_unit: &[f64], mc_samples: usize, seed: u64) -> Result<FeasibilityReport> {
    verify_with_grid(problem, x_unit, mc_samples, seed, DEFAULT_GRID)
}

/// [`verify`] with a chosen grid resolution for interval-valued locations.
pub fn verify_with_grid(
    problem: &Problem,
    x_unit: &[f64],
    mc_samples: usize,
    seed: u64,
    grid_resolution: usize,
) -> Result<FeasibilityReport> {
    let nominal = mc_feasibility(problem, x_unit, mc_samples, seed)?;
    match problem.uncertainty.epistemic_kind() {
        EpistemicKind::None => Ok(nominal),
        EpistemicKind::Points => {
            let mut combined = nominal;
            for scenario in epistemic_scenarios(problem) {
                let p = problem.with_uncertainty(problem.uncertainty.with_fixed_locations(&scenario)?);
                let r = mc_feasibility(&p, x_unit, mc_samples, seed)?;
                for (j, (c, p)) in combined
                    .constraint_probs
                    .iter_mut()
                    .zip(&r.constraint_probs)
                    .enumerate()
                {
                    if *p < *c {
                        *c = *p;
                        combined.std_errors[j] = r.std_errors[j];
                    }
                }
                combined.valid &= r.valid;
                combined.failures = combined.failures.max(r.failures);
                combined.success &= r.success;
            }
            combined.success &= combined.constraint_probs.iter().all(|&p| p >= SUCCESS_PROBABILITY);
            Ok(combined)
        }
        EpistemicKind::Interval => {
            let grid = EpistemicGrid::for_problem(problem, grid_resolution)?;
            let worst = worst_case_epistemic(problem, x_unit, &grid, mc_samples, seed)?;
            let mut combined = nominal;
            for w in &worst {
                let j = w.constraint - 1;
                combined.constraint_probs[j] = w.probability;
                let n = (combined.n_samples - combined.failures).max(1) as f64;
                combined.std_errors[j] = (w.probability * (1.0 - w.probability) / n).sqrt();
            }
            combined.success = combined.valid && worst.iter().all(|w| w.feasible);
            Ok(combined)
        }
    }
}

/// One solver run of a trial and its assessment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub message: Option<String>,
    pub x_unit: Vec<f64>,
    /// Final point in original units.
    pub x: Vec<f64>,
    pub evaluations: u64,
    pub outside_evaluations: u64,
    pub report: FeasibilityReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub success_count: usize,
    /// Average of the per-run mean objectives.
    pub mean_objective: f64,
    pub mean_point: Vec<f64>,
    /// Sample standard deviation per coordinate (zero for one run).
    pub std_point: Vec<f64>,
}

impl TrialSummary {
    pub fn from_runs(runs: &[RunRecord]) -> Self {
        let k = runs.len() as f64;
        let n = runs.first().map_or(0, |r| r.x.len());
        let mean_point: Vec<f64> = (0..n).map(|i| runs.iter().map(|r| r.x[i]).sum::<f64>() / k).collect();
        let std_point = (0..n)
            .map(|i| {
                if runs.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = runs.iter().map(|r| (r.x[i] - mean_point[i]).powi(2)).sum();
                (ss / (k - 1.0)).sqrt()
            })
            .collect();
        Self {
            success_count: runs.iter().filter(|r| r.report.success).count(),
            mean_objective: runs.iter().map(|r| r.report.mean_objective).sum::<f64>() / k,
            mean_point,
            std_point,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub problem: String,
    pub master_seed: u64,
    pub runs: Vec<RunRecord>,
    pub summary: TrialSummary,
}

/// Runs the solver `runs` times with seeds derived from `master_seed` and
/// verifies each final point with `mc_samples` draws.
pub fn run_trial(
    problem: &Problem,
    config: &SolverConfig,
    runs: usize,
    mc_samples: usize,
    master_seed: u64,
) -> Result<TrialReport> {
    if runs == 0 {
        return Err(Error::Input("a trial needs at least one run".into()));
    }
    config.validate()?;
    let records = (0..runs)
        .into_par_iter()
        .map(|run_id| {
            let seed = rng::child_seed(master_seed, run_id as u64);
            let cfg = SolverConfig {
                seed,
                trace: false,
                ..config.clone()
            };
            let result = solver::run(problem, &cfg)?;
            let report = verify(problem, &result.x_unit, mc_samples, rng::child_seed(seed, 0))?;
            Ok(RunRecord {
                run_id,
                seed,
                status: result.status,
                message: result.message,
                x_unit: result.x_unit,
                x: result.x,
                evaluations: result.evaluations,
                outside_evaluations: result.outside_evaluations,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialReport {
        problem: problem.name.clone(),
        master_seed,
        summary: TrialSummary::from_runs(&records),
        runs: records,
    })
}

/// Paired trials with the Gaussian and truncated kernels. The truncated
/// trial uses box-truncated uncertainty and must never query outside the
/// unit cube.
pub fn compare_estimators(
    problem: &Problem,
    gaussian: &SolverConfig,
    truncated: &SolverConfig,
    runs: usize,
    mc_samples: usize,
    master_seed: u64,
) -> Result<(TrialReport, TrialReport)> {
    let g = run_trial(problem, gaussian, runs, mc_samples, master_seed)?;
    let tp = problem.with_truncated_uncertainty();
    let t = run_trial(&tp, truncated, runs, mc_samples, master_seed)?;
    if let Some(r) = t.runs.iter().find(|r| r.outside_evaluations > 0) {
        return Err(Error::Input(format!(
            "run {} evaluated {} points outside the bounds",
            r.run_id, r.outside_evaluations
        )));
    }
    Ok((g, t))
}

/// Writes one CSV row per run:
/// `run_id,seed,success,mean_obj,prob_1..prob_m,x_1..x_n,evals`.
pub fn write_trial_csv<W: Write>(report: &TrialReport, mut out: W) -> Result<()> {
    let first = report
        .runs
        .first()
        .ok_or_else(|| Error::Input("empty trial report".into()))?;
    let (n, m) = (first.x.len(), first.report.constraint_probs.len());
    let mut header = vec!["run_id".to_string(), "seed".into(), "success".into(), "mean_obj".into()];
    header.extend((1..=m).map(|j| format!("prob_{j}")));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("evals".into());
    writeln!(out, "{}", header.join(","))?;
    for r in &report.runs {
        let mut row = vec![
            r.run_id.to_string(),
            r.seed.to_string(),
            r.report.success.to_string(),
            r.report.mean_objective.to_string(),
        ];
        row.extend(r.report.constraint_probs.iter().map(|p| format!("{p}")));
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.push(r.evaluations.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
