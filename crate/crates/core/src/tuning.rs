//! Rules for the two problem-dependent hyperparameters.
//!
//! `beta1` is half the grid value whose gradient samples have the smallest
//! average per-coordinate variance. The initial design step is
//! `coeff / (||mean g_x|| / sqrt(n))`, the gradient being sampled with
//! `beta1 = 0.1`.

use rayon::prelude::*;

use crate::blackbox::{EvaluationBudget, Problem};
use crate::error::{Error, Result};
use crate::lagrangian::{LagrangeState, Oracle};
use crate::rng;
use crate::smoothing::KernelKind;
use crate::solver::{draw_gradient, EstimatorKind, Schedules, SolverConfig};

pub const DEFAULT_GRID: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2];

/// Smoothing width at which the gradient norm is measured.
pub const NORM_BETA: f64 = 0.1;

/// Step-to-gradient-norm coefficient for the Gaussian kernel.
pub const GAUSSIAN_COEFF: f64 = 1e-3;
/// Same for the truncated kernel.
pub const TRUNCATED_COEFF: f64 = 5e-4;

const CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub grid: Vec<f64>,
    pub samples: usize,
    pub kernel: KernelKind,
    /// `None` picks the kernel's default.
    pub estimator: Option<EstimatorKind>,
    pub seed: u64,
    /// Defaults to the kernel's coefficient.
    pub coeff: Option<f64>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID.to_vec(),
            samples: 1000,
            kernel: KernelKind::Gaussian,
            estimator: None,
            seed: 0,
            coeff: None,
        }
    }
}

impl TuneOptions {
    pub fn coefficient(&self) -> f64 {
        self.coeff.unwrap_or(match self.kernel {
            KernelKind::Gaussian => GAUSSIAN_COEFF,
            KernelKind::TruncatedGaussian => TRUNCATED_COEFF,
        })
    }

    pub fn estimator_kind(&self) -> EstimatorKind {
        self.estimator
            .unwrap_or_else(|| EstimatorKind::default_for(self.kernel))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub problem: String,
    pub kernel: KernelKind,
    pub grid: Vec<f64>,
    pub avg_variance: Vec<f64>,
    /// Grid value with the smallest average variance.
    pub argmin: f64,
    pub beta1: f64,
    pub grad_norm_ratio: f64,
    pub s2: f64,
    pub samples: usize,
    pub evaluations: u64,
}

impl TuneReport {
    /// Solver settings with the tuned `beta1` and `s2` and the defaults for
    /// everything else.
    pub fn to_config(&self, base: &SolverConfig) -> SolverConfig {
        let mut cfg = base.clone();
        cfg.kernel = self.kernel;
        cfg.beta1 = self.beta1;
        cfg.schedules.x.s0 = self.s2;
        cfg
    }
}

/// `N` samples of `g_x` at `(x0, t = 0, lambda = 0)` with all levels at 0.
pub fn sample_gradients(
    problem: &Problem,
    x_unit: &[f64],
    beta1: f64,
    kernel: KernelKind,
    estimator: EstimatorKind,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let m = problem.m();
    let cfg = SolverConfig {
        beta1,
        kernel,
        estimator: Some(estimator),
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let settings = cfg.gradient_settings()?;
    let alpha = vec![0.0; m + 1];
    let state = LagrangeState::at(x_unit.to_vec(), m);
    let chunks = samples.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng::child_stream(seed, c as u64);
            let mut oracle = Oracle::new(problem, EvaluationBudget::unlimited());
            let count = CHUNK.min(samples - c * CHUNK);
            (0..count)
                .map(|_| Ok(draw_gradient(&mut oracle, &mut stream, &state, &settings, estimator, &alpha)?.g_x))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn mean_vector(g: &[Vec<f64>]) -> Vec<f64> {
    let n = g[0].len();
    let k = g.len() as f64;
    (0..n).map(|i| g.iter().map(|s| s[i]).sum::<f64>() / k).collect()
}

/// Per-coordinate sample variance (two-pass), averaged over coordinates.
pub fn average_variance(g: &[Vec<f64>]) -> f64 {
    let mean = mean_vector(g);
    let k = g.len() as f64;
    let per_coord: Vec<f64> = mean
        .iter()
        .enumerate()
        .map(|(i, m)| g.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / (k - 1.0))
        .collect();
    per_coord.iter().sum::<f64>() / per_coord.len() as f64
}

/// `||mean g_x|| / sqrt(n)`.
pub fn grad_norm_ratio(g: &[Vec<f64>]) -> f64 {
    let mean = mean_vector(g);
    mean.iter().map(|v| v * v).sum::<f64>().sqrt() / (mean.len() as f64).sqrt()
}

/// Half the grid value of smallest variance; ties go to the larger value.
pub fn select_beta1(grid: &[f64], avg_variance: &[f64]) -> Result<(f64, f64)> {
    if grid.is_empty() || grid.len() != avg_variance.len() {
        return Err(Error::Tuning("grid and variances must be non-empty and aligned".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for (&b, &v) in grid.iter().zip(avg_variance) {
        if !v.is_finite() {
            continue;
        }
        best = match best {
            Some((bb, bv)) if v > bv || (v == bv && b < bb) => Some((bb, bv)),
            _ => Some((b, v)),
        };
    }
    let (argmin, _) = best.ok_or_else(|| Error::Tuning("no finite variance on the grid".into()))?;
    Ok((argmin, argmin / 2.0))
}

pub fn select_s2(grad_norm_ratio: f64, coeff: f64) -> Result<f64> {
    if !(grad_norm_ratio > 0.0) || !grad_norm_ratio.is_finite() {
        return Err(Error::Tuning(format!(
            "gradient norm ratio must be positive, got {grad_norm_ratio}"
        )));
    }
    Ok(coeff / grad_norm_ratio)
}

/// Runs both rules from the problem's starting point.
pub fn tune(problem: &Problem, opts: &TuneOptions) -> Result<TuneReport> {
    if opts.samples < 2 {
        return Err(Error::Tuning("at least two gradient samples are needed".into()));
    }
    let x0 = problem.x0_unit();
    let mut avg_variance = Vec::with_capacity(opts.grid.len());
    let mut norm_samples = None;
    for (c, &beta) in opts.grid.iter().enumerate() {
        let g = sample_gradients(
            problem,
            &x0,
            beta,
            opts.kernel,
            opts.estimator_kind(),
            opts.samples,
            rng::child_seed(opts.seed, c as u64),
        )?;
        avg_variance.push(average_variance(&g));
        if beta == NORM_BETA {
            norm_samples = Some(g);
        }
    }
    let calls = SolverConfig {
        kernel: opts.kernel,
        estimator: opts.estimator,
        ..SolverConfig::default()
    }
    .calls_per_iteration();
    let mut evaluations = calls * (opts.samples * opts.grid.len()) as u64;
    let norm_samples = match norm_samples {
        Some(g) => g,
        None => {
            evaluations += calls * opts.samples as u64;
            sample_gradients(
                problem,
                &x0,
                NORM_BETA,
                opts.kernel,
                opts.estimator_kind(),
                opts.samples,
                rng::child_seed(opts.seed, u64::MAX),
            )?
        }
    };
    let (argmin, beta1) = select_beta1(&opts.grid, &avg_variance)?;
    let ratio = grad_norm_ratio(&norm_samples);
    let s2 = select_s2(ratio, opts.coefficient())?;
    Ok(TuneReport {
        problem: problem.name.clone(),
        kernel: opts.kernel,
        grid: opts.grid.clone(),
        avg_variance,
        argmin,
        beta1,
        grad_norm_ratio: ratio,
        s2,
        samples: opts.samples,
        evaluations,
    })
}

/// Default schedules with a tuned design step.
pub fn schedules_with_s2(s2: f64) -> Schedules {
    let mut s = Schedules::default();
    s.x.s0 = s2;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{Hyperbox, UncertaintyModel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn s2_examples() {
        assert_abs_diff_eq!(select_s2(0.02, 1e-3).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(select_s2(1.4, 1e-3).unwrap(), 0.000_714_285_7, epsilon = 1e-10);
        assert_eq!(select_s2(1.0, 1e-3).unwrap(), 1e-3);
        assert!(select_s2(0.0, 1e-3).is_err());
    }

    #[test]
    fn beta1_rule_and_ties() {
        let grid = DEFAULT_GRID;
        let v = [4.2, 0.16, 0.04, 0.004, 0.003, 0.94];
        assert_eq!(select_beta1(&grid, &v).unwrap(), (0.1, 0.05));
        assert_eq!(select_beta1(&grid, &[0.0; 6]).unwrap(), (0.2, 0.1));
        assert!(select_beta1(&grid, &[f64::NAN; 6]).is_err());
    }

    #[test]
    fn constant_blackbox_picks_largest() {
        let p = Problem::from_fn(
            "const",
            0,
            Hyperbox::unit(2),
            vec![0.5, 0.5],
            UncertaintyModel::deterministic(),
            |_, _| vec![1.0],
        )
        .unwrap();
        let report = tune(
            &p,
            &TuneOptions {
                samples: 200,
                coeff: Some(1e-3),
                ..TuneOptions::default()
            },
        );
        // zero gradient everywhere: beta1 is still chosen, the step rule fails
        assert!(matches!(report, Err(Error::Tuning(_))));
        let g = sample_gradients(
            &p,
            &[0.5, 0.5],
            0.2,
            KernelKind::Gaussian,
            EstimatorKind::OneSided,
            50,
            1,
        )
        .unwrap();
        assert_eq!(average_variance(&g), 0.0);
    }

    #[test]
    fn linear_blackbox_ratio() {
        // C~ = arctan(cbrt(C)) is linear enough near C = 8 for a rough check
        let p = Problem::from_fn(
            "lin",
            0,
            Hyperbox::unit(1),
            vec![0.5],
            UncertaintyModel::deterministic(),
            |x, _| vec![8.0 + 0.01 * x[0]],
        )
        .unwrap();
        let report = tune(
            &p,
            &TuneOptions {
                samples: 4000,
                seed: 3,
                ..TuneOptions::default()
            },
        )
        .unwrap();
        let slope = 0.01 / (3.0 * 4.0) / (1.0 + 4.0);
        assert!((report.grad_norm_ratio - slope).abs() < 0.1 * slope);
        assert_eq!(report.evaluations, 2 * 4000 * 6);
        assert_eq!(report.to_config(&SolverConfig::default()).schedules.x.s0, report.s2);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = crate::builtin_problem("SCD").unwrap();
        let opts = TuneOptions {
            samples: 300,
            seed: 8,
            ..TuneOptions::default()
        };
        assert_eq!(tune(&p, &opts).unwrap(), tune(&p, &opts).unwrap());
    }
}
