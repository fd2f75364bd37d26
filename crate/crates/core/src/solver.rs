//! The four-timescale projected update loop.
//!
//! Each iteration draws one stacked gradient sample, folds it into the
//! running moments `M` and `V`, then moves `t` and `x` down and `lambda` up
//! along `M / (sqrt(V) + eps)`, each with its own decaying step and each
//! projected onto its box. Reliability levels start at zero and are pulled
//! geometrically toward their targets.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::blackbox::{EvaluationBudget, Problem};
use crate::cvar::RiskLevel;
use crate::error::{Error, Result};
use crate::lagrangian::{
    central_stacked_gradient, stacked_gradient, two_sided_stacked_gradient, GradientSettings, LagrangeState, Oracle,
    StackedGradient,
};
use crate::rng;
use crate::smoothing::{KernelKind, SmoothingKernel};

/// `s0 / (k + 1)^tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub s0: f64,
    pub tau: f64,
}

impl StepSchedule {
    pub fn new(s0: f64, tau: f64) -> Result<Self> {
        let s = Self { s0, tau };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(Error::Config(format!("initial step must be positive, got {}", self.s0)));
        }
        if !(self.tau > 0.5 && self.tau < 1.0) {
            return Err(Error::Config(format!(
                "decay exponent must lie in (0.5, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

pub fn step_size(sched: StepSchedule, k: u64) -> f64 {
    sched.s0 / ((k + 1) as f64).powf(sched.tau)
}

/// Steps for `lambda` (slowest), `x`, `t` and the moments (fastest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedules {
    pub lambda: StepSchedule,
    pub x: StepSchedule,
    pub t: StepSchedule,
    pub moments: StepSchedule,
}

impl Schedules {
    pub fn from_initial(s1: f64, s2: f64, s3: f64, s4: f64) -> Self {
        Self {
            lambda: StepSchedule { s0: s1, tau: 0.8 },
            x: StepSchedule { s0: s2, tau: 0.7 },
            t: StepSchedule { s0: s3, tau: 0.6 },
            moments: StepSchedule { s0: s4, tau: 0.501 },
        }
    }

    pub fn at(&self, k: u64) -> [f64; 4] {
        [
            step_size(self.lambda, k),
            step_size(self.x, k),
            step_size(self.t, k),
            step_size(self.moments, k),
        ]
    }
}

impl Default for Schedules {
    fn default() -> Self {
        Self::from_initial(0.01, 0.05, 0.001, 0.3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Forward difference against a base call at `x`.
    OneSided,
    /// Forward and reflected differences around a base call.
    TwoSided,
    /// `x + beta u` against `x - beta u`; Gaussian kernel only.
    Central,
}

impl EstimatorKind {
    /// Central for the Gaussian kernel, one-sided for the truncated one.
    pub fn default_for(kernel: KernelKind) -> Self {
        match kernel {
            KernelKind::Gaussian => EstimatorKind::Central,
            KernelKind::TruncatedGaussian => EstimatorKind::OneSided,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one-sided" | "onesided" => Ok(EstimatorKind::OneSided),
            "two-sided" | "twosided" => Ok(EstimatorKind::TwoSided),
            "central" => Ok(EstimatorKind::Central),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::OneSided => "one-sided",
            EstimatorKind::TwoSided => "two-sided",
            EstimatorKind::Central => "central",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub schedules: Schedules,
    pub beta1: f64,
    pub beta2: f64,
    /// Target level for the objective.
    pub alpha_objective: f64,
    /// Target level shared by all constraints.
    pub alpha_constraint: f64,
    /// Contraction of the level schedule; `None` uses `1 - 5 / (2 K)`.
    pub gamma: Option<f64>,
    pub epsilon: f64,
    pub budget: u64,
    /// Caps the iteration count below what the budget allows.
    pub max_iterations: Option<u64>,
    pub t_max: f64,
    pub lambda_max: f64,
    pub kernel: KernelKind,
    /// `None` picks the kernel's default.
    pub estimator: Option<EstimatorKind>,
    pub strict_two_eval: bool,
    pub seed: u64,
    /// Keep a per-iteration snapshot in the result.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedules: Schedules::default(),
            beta1: 0.05,
            beta2: 1e-4,
            alpha_objective: 0.0,
            alpha_constraint: 0.99,
            gamma: None,
            epsilon: 1e-8,
            budget: 5000,
            max_iterations: None,
            t_max: 2.0,
            lambda_max: 20.0,
            kernel: KernelKind::Gaussian,
            estimator: None,
            strict_two_eval: true,
            seed: 0,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedules;
        for sched in [s.lambda, s.x, s.t, s.moments] {
            sched.validate()?;
        }
        if s.moments.s0 > 1.0 {
            return Err(Error::Config("moment step must not exceed 1".into()));
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("t_max", self.t_max),
            ("lambda_max", self.lambda_max),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        RiskLevel::new(self.alpha_objective).map_err(|e| Error::Config(e.to_string()))?;
        RiskLevel::new(self.alpha_constraint).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("gamma must lie in [0, 1), got {g}")));
            }
        }
        if self.estimator_kind() == EstimatorKind::Central && self.kernel != KernelKind::Gaussian {
            return Err(Error::Config("the central estimator needs the Gaussian kernel".into()));
        }
        if self.budget < self.calls_per_iteration() {
            return Err(Error::Config(format!(
                "budget {} is below one iteration ({} calls)",
                self.budget,
                self.calls_per_iteration()
            )));
        }
        Ok(())
    }

    pub fn estimator_kind(&self) -> EstimatorKind {
        self.estimator
            .unwrap_or_else(|| EstimatorKind::default_for(self.kernel))
    }

    pub fn calls_per_iteration(&self) -> u64 {
        let base = match self.estimator_kind() {
            EstimatorKind::OneSided | EstimatorKind::Central => 2,
            EstimatorKind::TwoSided => 3,
        };
        base + u64::from(!self.strict_two_eval)
    }

    /// `K_max`: every iteration, including the one that seeds the moments,
    /// draws one gradient sample.
    pub fn iterations(&self) -> u64 {
        let k = self.budget / self.calls_per_iteration();
        self.max_iterations.map_or(k, |cap| k.min(cap))
    }

    pub fn gamma_value(&self) -> f64 {
        self.gamma
            .unwrap_or_else(|| (1.0 - 5.0 / (2.0 * self.iterations() as f64)).max(0.0))
    }

    pub(crate) fn gradient_settings(&self) -> Result<GradientSettings> {
        Ok(GradientSettings {
            x_kernel: SmoothingKernel::new(self.kernel, self.beta1)?,
            t_kernel: SmoothingKernel::new(self.kernel, self.beta2)?,
            t_max: self.t_max,
            strict_two_eval: self.strict_two_eval,
        })
    }
}

/// `(s g + (1 - s) M, s g^2 + (1 - s) V)`, elementwise.
pub fn update_moments(m: &mut [f64], v: &mut [f64], g: &[f64], s4: f64) {
    for ((mi, vi), gi) in m.iter_mut().zip(v.iter_mut()).zip(g) {
        *mi = s4 * gi + (1.0 - s4) * *mi;
        *vi = s4 * gi * gi + (1.0 - s4) * *vi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// `clamp(z -/+ s M / (sqrt(V) + eps), lo, hi)`.
pub fn projected_update(z: &mut [f64], m: &[f64], v: &[f64], s: f64, eps: f64, lo: f64, hi: f64, dir: Direction) {
    let sign = match dir {
        Direction::Descent => -1.0,
        Direction::Ascent => 1.0,
    };
    for ((zi, mi), vi) in z.iter_mut().zip(m).zip(v) {
        *zi = (*zi + sign * s * mi / (vi.sqrt() + eps)).clamp(lo, hi);
    }
}

/// `alpha* + gamma (alpha - alpha*)`.
pub fn alpha_step(alpha: f64, alpha_star: f64, gamma: f64) -> f64 {
    alpha_star + gamma * (alpha - alpha_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
    Aborted,
}

/// State after iteration `k` and the quantities that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Levels used by the gradient of this iteration.
    pub alpha: Vec<f64>,
    pub steps: [f64; 4],
    pub gradient: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x_unit: Vec<f64>,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub iterations: u64,
    pub evaluations: u64,
    /// Calls whose query point left the unit cube.
    pub outside_evaluations: u64,
    pub status: RunStatus,
    pub message: Option<String>,
    pub trace: Vec<TraceRow>,
}

pub(crate) fn draw_gradient(
    oracle: &mut Oracle<'_>,
    stream: &mut rng::Stream,
    state: &LagrangeState,
    settings: &GradientSettings,
    estimator: EstimatorKind,
    alpha: &[f64],
) -> Result<StackedGradient> {
    let levels = alpha.iter().map(|&a| RiskLevel::new(a)).collect::<Result<Vec<_>>>()?;
    match estimator {
        EstimatorKind::OneSided => {
            let pert = settings.draw(state, stream)?;
            stacked_gradient(oracle, stream, state, &pert, settings, &levels)
        }
        EstimatorKind::TwoSided => {
            let fwd = settings.draw(state, stream)?;
            let bwd = settings.draw_reflected(state, stream)?;
            two_sided_stacked_gradient(oracle, stream, state, &fwd, &bwd, settings, &levels)
        }
        EstimatorKind::Central => {
            let pert = settings.draw(state, stream)?;
            central_stacked_gradient(oracle, stream, state, &pert, settings, &levels)
        }
    }
}

/// Runs the solver from the problem's starting point.
pub fn run(problem: &Problem, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    let (n, m) = (problem.n(), problem.m());
    let settings = config.gradient_settings()?;
    let k_max = config.iterations();
    let gamma = config.gamma_value();
    let mut targets = vec![config.alpha_constraint; m + 1];
    targets[0] = config.alpha_objective;

    let mut stream = rng::stream(config.seed);
    let mut oracle = Oracle::new(problem, EvaluationBudget::new(config.budget));
    let mut state = LagrangeState::at(problem.x0_unit(), m);
    let mut alpha = vec![0.0; m + 1];
    let mut trace = Vec::new();
    let mut status = RunStatus::Completed;
    let mut message = None;
    let mut iterations = 0;

    let mut moments: Option<(Vec<f64>, Vec<f64>)> = None;
    for k in 0..k_max {
        let g = match draw_gradient(
            &mut oracle,
            &mut stream,
            &state,
            &settings,
            config.estimator_kind(),
            &alpha,
        ) {
            Ok(g) => g.flatten(),
            Err(e @ Error::BudgetExhausted { .. }) => {
                status = RunStatus::BudgetExhausted;
                message = Some(e.to_string());
                break;
            }
            Err(e) => {
                status = RunStatus::Aborted;
                message = Some(format!("iteration {k}: {e}"));
                break;
            }
        };
        let steps = config.schedules.at(k);
        let (mv, vv) = moments.get_or_insert_with(|| (g.clone(), g.iter().map(|v| v * v).collect()));
        if k > 0 {
            update_moments(mv, vv, &g, steps[3]);
        }

        let (xs, rest) = (0..n, n..n + m + 1);
        let ls = n + m + 1..n + 2 * m + 1;
        projected_update(
            &mut state.t,
            &mv[rest.clone()],
            &vv[rest],
            steps[2],
            config.epsilon,
            -config.t_max,
            config.t_max,
            Direction::Descent,
        );
        projected_update(
            &mut state.x,
            &mv[xs.clone()],
            &vv[xs],
            steps[1],
            config.epsilon,
            0.0,
            1.0,
            Direction::Descent,
        );
        projected_update(
            &mut state.lambda,
            &mv[ls.clone()],
            &vv[ls],
            steps[0],
            config.epsilon,
            0.0,
            config.lambda_max,
            Direction::Ascent,
        );
        debug_assert!(state.x.iter().all(|v| (0.0..=1.0).contains(v)));
        debug_assert!(state.t.iter().all(|v| v.abs() <= config.t_max));
        debug_assert!(state.lambda.iter().all(|v| (0.0..=config.lambda_max).contains(v)));

        if config.trace {
            trace.push(TraceRow {
                k,
                x: state.x.clone(),
                t: state.t.clone(),
                lambda: state.lambda.clone(),
                alpha: alpha.clone(),
                steps,
                gradient: g,
                m: mv.clone(),
                v: vv.clone(),
            });
        }
        for (a, &target) in alpha.iter_mut().zip(&targets) {
            *a = alpha_step(*a, target, gamma);
        }
        iterations = k + 1;
    }

    Ok(SolverResult {
        x: problem.bounds().scale_to_box(&state.x)?,
        x_unit: state.x,
        t: state.t,
        lambda: state.lambda,
        alpha,
        iterations,
        evaluations: oracle.budget.used(),
        outside_evaluations: oracle.budget.outside_unit_cube(),
        status,
        message,
        trace,
    })
}

/// Writes the trace as CSV, with `x` in original coordinates.
pub fn write_trace_csv<W: Write>(problem: &Problem, result: &SolverResult, mut out: W) -> Result<()> {
    let (n, m) = (problem.n(), problem.m());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((0..=m).map(|j| format!("t_{j}")));
    header.extend((1..=m).map(|j| format!("lambda_{j}")));
    header.extend((0..=m).map(|j| format!("alpha_{j}")));
    header.extend((1..=4).map(|i| format!("s{i}")));
    writeln!(out, "{}", header.join(","))?;
    for row in &result.trace {
        let x = problem.bounds().scale_to_box(&row.x)?;
        let fields: Vec<String> = std::iter::once(row.k.to_string())
            .chain(
                x.iter()
                    .chain(&row.t)
                    .chain(&row.lambda)
                    .chain(&row.alpha)
                    .chain(&row.steps)
                    .map(|v| v.to_string()),
            )
            .collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{Hyperbox, UncertaintyModel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_examples() {
        let s = StepSchedule::new(0.2, 0.8).unwrap();
        assert_eq!(step_size(s, 0), 0.2);
        assert_abs_diff_eq!(step_size(s, 1), 0.114_870, epsilon = 1e-6);
        assert_eq!(step_size(StepSchedule::new(0.01, 0.501).unwrap(), 0), 0.01);
        assert!(StepSchedule::new(0.1, 0.5).is_err());
        assert!(StepSchedule::new(0.0, 0.7).is_err());
    }

    #[test]
    fn moment_examples() {
        let (mut m, mut v) = (vec![2.0], vec![4.0]);
        update_moments(&mut m, &mut v, &[4.0], 0.5);
        assert_eq!((m[0], v[0]), (3.0, 10.0));
        update_moments(&mut m, &mut v, &[-1.5], 1.0);
        assert_eq!((m[0], v[0]), (-1.5, 2.25));
        update_moments(&mut m, &mut v, &[-1.5], 0.3);
        assert_abs_diff_eq!(m[0], -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 2.25, epsilon = 1e-15);
    }

    #[test]
    fn projection_examples() {
        let mut z = vec![0.5];
        projected_update(&mut z, &[1.0], &[1.0], 0.1, 0.0, 0.0, 1.0, Direction::Descent);
        assert_abs_diff_eq!(z[0], 0.4, epsilon = 1e-15);
        projected_update(&mut z, &[0.0], &[1.0], 0.1, 1e-8, 0.0, 1.0, Direction::Descent);
        assert_abs_diff_eq!(z[0], 0.4, epsilon = 1e-15);
        projected_update(&mut z, &[1.0], &[1.0], 5.0, 0.0, 0.0, 1.0, Direction::Descent);
        assert_eq!(z[0], 0.0);
        projected_update(&mut z, &[1.0], &[1.0], 0.25, 0.0, 0.0, 1.0, Direction::Ascent);
        assert_eq!(z[0], 0.25);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_step(0.99, 0.99, 0.5), 0.99);
        assert_abs_diff_eq!(alpha_step(0.0, 0.99, 0.999), 0.00099, epsilon = 1e-15);
        let gamma = 1.0 - 5.0 / (2.0 * 2500.0);
        let mut a = 0.0;
        for _ in 0..2500 {
            a = alpha_step(a, 0.99, gamma);
        }
        assert_abs_diff_eq!(a, 0.99 * (1.0 - gamma.powi(2500)), epsilon = 1e-12);
        assert!((a - 0.907).abs() < 2e-3);
    }

    #[test]
    fn budget_accounting() {
        let mut c = SolverConfig::default();
        assert_eq!(c.iterations(), 2500);
        c.strict_two_eval = false;
        assert_eq!(c.iterations(), 1666);
        c.estimator = Some(EstimatorKind::TwoSided);
        assert_eq!(c.calls_per_iteration(), 4);
        c.budget = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_timescales_are_ordered() {
        let s = Schedules::default();
        for k in 0..5000 {
            let [s1, s2, s3, s4] = s.at(k);
            assert!(s1 < s2, "k={k}");
            assert!(s3 < s4, "k={k}");
            assert!(s1 < s4);
        }
    }

    fn quadratic() -> Problem {
        Problem::from_fn(
            "quad",
            0,
            Hyperbox::unit(1),
            vec![0.1],
            UncertaintyModel::deterministic(),
            |x, _| vec![(x[0] - 0.6).powi(2)],
        )
        .unwrap()
    }

    #[test]
    fn noise_free_quadratic_converges() {
        let p = quadratic();
        for kernel in [KernelKind::Gaussian, KernelKind::TruncatedGaussian] {
            let cfg = SolverConfig {
                kernel,
                beta1: 0.05,
                seed: 11,
                ..SolverConfig::default()
            };
            let r = run(&p, &cfg).unwrap();
            assert_eq!(r.status, RunStatus::Completed);
            assert_eq!(r.iterations, 2500);
            assert_eq!(r.evaluations, 5000);
            assert!((r.x[0] - 0.6).abs() < 0.05, "{kernel:?}: {:?}", r.x);
        }
    }

    #[test]
    fn slack_constraint_keeps_lambda_at_zero() {
        let p = Problem::from_fn(
            "slack",
            1,
            Hyperbox::unit(1),
            vec![0.5],
            UncertaintyModel::deterministic(),
            |x, _| vec![(x[0] - 0.3).powi(2), -1.0],
        )
        .unwrap();
        let cfg = SolverConfig {
            budget: 2000,
            trace: true,
            ..SolverConfig::default()
        };
        let r = run(&p, &cfg).unwrap();
        assert_eq!(r.lambda, vec![0.0]);
        assert!(r.trace.iter().all(|row| row.lambda[0] == 0.0));
    }

    #[test]
    fn replay_is_identical_and_truncated_stays_inside() {
        let p = crate::builtin_problem("SRD").unwrap().with_truncated_uncertainty();
        let cfg = SolverConfig {
            kernel: KernelKind::TruncatedGaussian,
            beta1: 0.025,
            schedules: Schedules::from_initial(0.01, 0.01, 0.001, 0.2),
            budget: 600,
            seed: 5,
            trace: true,
            ..SolverConfig::default()
        };
        let a = run(&p, &cfg).unwrap();
        let b = run(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.outside_evaluations, 0);
        for w in a.trace.windows(2) {
            for (x, y) in w[0].alpha.iter().zip(&w[1].alpha) {
                assert!(y >= x && *y <= 0.99);
            }
        }
    }

    #[test]
    fn exhausted_budget_returns_partial_result() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        // one failure forces a retry, so the last iteration runs out of calls
        let p = Problem::from_fn(
            "flaky",
            0,
            Hyperbox::unit(1),
            vec![0.5],
            UncertaintyModel::deterministic(),
            move |x, _| {
                if calls.fetch_add(1, Ordering::SeqCst) == 3 {
                    vec![f64::NAN]
                } else {
                    vec![x[0]]
                }
            },
        )
        .unwrap();
        let cfg = SolverConfig {
            budget: 10,
            ..SolverConfig::default()
        };
        let r = run(&p, &cfg).unwrap();
        assert_eq!(r.status, RunStatus::BudgetExhausted);
        assert_eq!(r.iterations, 4);
        assert_eq!(r.evaluations, 10);
    }

    #[test]
    fn trace_csv_layout() {
        let p = quadratic();
        let cfg = SolverConfig {
            budget: 6,
            trace: true,
            ..SolverConfig::default()
        };
        let r = run(&p, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&p, &r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x_1,t_0,alpha_0,s1,s2,s3,s4");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 8);
    }
}
