//! Noisy smoothed Lagrangian and its stacked zeroth-order gradient.
//!
//! For outputs `C~` of one blackbox call the sample Lagrangian is
//! `V~_{a_0}(C~_0, t_0) + sum_j lambda_j V~_{a_j}(C~_j, t_j)`. One gradient
//! sample perturbs `x` and `t` jointly and differences the perturbed and
//! base Lagrangians; the `lambda` block is the constraint integrands
//! themselves.

use rand::Rng;

use crate::blackbox::{evaluate_transformed, EvaluationBudget, Problem};
use crate::cvar::{sample_v, RiskLevel};
use crate::error::{check_dim, Error, Result};
use crate::smoothing::{Direction, KernelKind, SmoothingKernel};

/// Query points within this distance of the unit cube are snapped onto it.
const SNAP_TOLERANCE: f64 = 1e-12;

/// Primal-dual iterate `(x, t, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeState {
    /// Design point in unit-cube coordinates.
    pub x: Vec<f64>,
    /// VaR estimates, objective first.
    pub t: Vec<f64>,
    /// Multipliers, one per constraint.
    pub lambda: Vec<f64>,
}

impl LagrangeState {
    pub fn new(x: Vec<f64>, t: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        check_dim(t.len(), lambda.len() + 1)?;
        Ok(Self { x, t, lambda })
    }

    /// `(x, 0, 0)`.
    pub fn at(x: Vec<f64>, m: usize) -> Self {
        Self {
            x,
            t: vec![0.0; m + 1],
            lambda: vec![0.0; m],
        }
    }
}

/// Gradient sample split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedGradient {
    pub g_x: Vec<f64>,
    pub g_t: Vec<f64>,
    pub g_lambda: Vec<f64>,
}

impl StackedGradient {
    /// `[g_x, g_t, g_lambda]` as one vector of length `n + 2m + 1`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.g_x.len() + self.g_t.len() + self.g_lambda.len());
        out.extend_from_slice(&self.g_x);
        out.extend_from_slice(&self.g_t);
        out.extend_from_slice(&self.g_lambda);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.g_x
            .iter()
            .chain(&self.g_t)
            .chain(&self.g_lambda)
            .all(|v| v.is_finite())
    }
}

/// Sample Lagrangian from one output vector.
pub fn lagrangian_value(outputs: &[f64], t: &[f64], lambda: &[f64], alpha: &[RiskLevel]) -> f64 {
    let mut value = sample_v(outputs[0], t[0], alpha[0]);
    for j in 0..lambda.len() {
        value += lambda[j] * sample_v(outputs[j + 1], t[j + 1], alpha[j + 1]);
    }
    value
}

/// Budgeted access to a problem's transformed outputs.
#[derive(Debug)]
pub struct Oracle<'p> {
    problem: &'p Problem,
    pub budget: EvaluationBudget,
}

impl<'p> Oracle<'p> {
    pub fn new(problem: &'p Problem, budget: EvaluationBudget) -> Self {
        Self { problem, budget }
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    /// Draws `xi` at `x_unit` and evaluates. A failed evaluation is retried
    /// once with a fresh `xi`; both attempts are charged.
    pub fn query<R: Rng + ?Sized>(&mut self, x_unit: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.problem.bounds().scale_to_box(x_unit)?;
        let xi = self.problem.sample_xi(&x, rng);
        match evaluate_transformed(self.problem, x_unit, &xi, &mut self.budget) {
            Ok(out) => Ok((out, xi)),
            Err(Error::Evaluation { .. }) => {
                let xi = self.problem.sample_xi(&x, rng);
                let out = evaluate_transformed(self.problem, x_unit, &xi, &mut self.budget)?;
                Ok((out, xi))
            }
            Err(e) => Err(e),
        }
    }

    /// Evaluates at a given realization.
    pub fn query_with(&mut self, x_unit: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        evaluate_transformed(self.problem, x_unit, xi, &mut self.budget)
    }
}

/// Directions for `x` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub u: Direction,
    pub v: Direction,
}

/// Smoothing widths and how the `lambda` block is sourced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSettings {
    pub x_kernel: SmoothingKernel,
    pub t_kernel: SmoothingKernel,
    /// `t` is confined to `[-t_max, t_max]^(m+1)`.
    pub t_max: f64,
    /// Reuse the base-point call for the `lambda` block (two calls per
    /// sample) instead of a third call at `x` with the perturbed `xi`.
    pub strict_two_eval: bool,
}

impl GradientSettings {
    /// Blackbox calls per one-sided gradient sample.
    pub fn calls_per_sample(&self) -> u64 {
        if self.strict_two_eval {
            2
        } else {
            3
        }
    }

    /// Draws directions for a forward perturbation of `state`.
    pub fn draw<R: Rng + ?Sized>(&self, state: &LagrangeState, rng: &mut R) -> Result<Perturbation> {
        let n = state.x.len();
        let k = state.t.len();
        let u = self.x_kernel.draw(&state.x, &vec![0.0; n], &vec![1.0; n], rng)?;
        let v = self
            .t_kernel
            .draw(&state.t, &vec![-self.t_max; k], &vec![self.t_max; k], rng)?;
        Ok(Perturbation { u, v })
    }

    /// Draws directions for a backward perturbation `x - beta u`.
    pub fn draw_reflected<R: Rng + ?Sized>(&self, state: &LagrangeState, rng: &mut R) -> Result<Perturbation> {
        let n = state.x.len();
        let k = state.t.len();
        let u = self
            .x_kernel
            .draw_reflected(&state.x, &vec![0.0; n], &vec![1.0; n], rng)?;
        let v = self
            .t_kernel
            .draw_reflected(&state.t, &vec![-self.t_max; k], &vec![self.t_max; k], rng)?;
        Ok(Perturbation { u, v })
    }
}

fn shifted(base: &[f64], dir: &[f64], step: f64, snap: bool) -> Vec<f64> {
    base.iter()
        .zip(dir)
        .map(|(b, d)| {
            let z = b + step * d;
            if snap && z < 0.0 && z > -SNAP_TOLERANCE {
                0.0
            } else if snap && z > 1.0 && z < 1.0 + SNAP_TOLERANCE {
                1.0
            } else {
                z
            }
        })
        .collect()
}

fn centred(dir: &Direction) -> impl Iterator<Item = f64> + '_ {
    dir.u.iter().zip(&dir.mean).map(|(u, m)| u - m)
}

/// Stacked gradient from already-evaluated outputs.
///
/// `perturbed` are the outputs at `(x + beta1 u)` with `xi_1`, `base` at `x`
/// with `xi_2`, and `lambda_outputs` the outputs used for the multiplier
/// block.
pub fn stacked_gradient_from_outputs(
    state: &LagrangeState,
    pert: &Perturbation,
    perturbed: &[f64],
    base: &[f64],
    lambda_outputs: &[f64],
    beta1: f64,
    beta2: f64,
    alpha: &[RiskLevel],
) -> StackedGradient {
    let t_pert = shifted(&state.t, &pert.v.u, beta2, false);
    let diff = lagrangian_value(perturbed, &t_pert, &state.lambda, alpha)
        - lagrangian_value(base, &state.t, &state.lambda, alpha);
    StackedGradient {
        g_x: centred(&pert.u).map(|c| diff * c / beta1).collect(),
        g_t: centred(&pert.v).map(|c| diff * c / beta2).collect(),
        g_lambda: (0..state.lambda.len())
            .map(|j| sample_v(lambda_outputs[j + 1], state.t[j + 1], alpha[j + 1]))
            .collect(),
    }
}

/// One-sided stacked gradient sample at `state`.
///
/// Consumes two blackbox calls (three when `strict_two_eval` is off).
pub fn stacked_gradient<R: Rng + ?Sized>(
    oracle: &mut Oracle<'_>,
    rng: &mut R,
    state: &LagrangeState,
    pert: &Perturbation,
    settings: &GradientSettings,
    alpha: &[RiskLevel],
) -> Result<StackedGradient> {
    check_dim(state.t.len(), alpha.len())?;
    let x_pert = shifted(&state.x, &pert.u.u, settings.x_kernel.beta, true);
    let (perturbed, xi1) = oracle.query(&x_pert, rng)?;
    let (base, _) = oracle.query(&state.x, rng)?;
    let lambda_outputs = if settings.strict_two_eval {
        base.clone()
    } else {
        oracle.query_with(&state.x, &xi1)?
    };
    Ok(stacked_gradient_from_outputs(
        state,
        pert,
        &perturbed,
        &base,
        &lambda_outputs,
        settings.x_kernel.beta,
        settings.t_kernel.beta,
        alpha,
    ))
}

/// Two-sided stacked gradient: forward and reflected perturbations around a
/// shared base call. Consumes three calls (four when `strict_two_eval` is
/// off).
pub fn two_sided_stacked_gradient<R: Rng + ?Sized>(
    oracle: &mut Oracle<'_>,
    rng: &mut R,
    state: &LagrangeState,
    forward: &Perturbation,
    backward: &Perturbation,
    settings: &GradientSettings,
    alpha: &[RiskLevel],
) -> Result<StackedGradient> {
    check_dim(state.t.len(), alpha.len())?;
    let (b1, b2) = (settings.x_kernel.beta, settings.t_kernel.beta);
    let x_fwd = shifted(&state.x, &forward.u.u, b1, true);
    let x_bwd = shifted(&state.x, &backward.u.u, -b1, true);
    let (out_fwd, xi1) = oracle.query(&x_fwd, rng)?;
    let (out_bwd, _) = oracle.query(&x_bwd, rng)?;
    let (base, _) = oracle.query(&state.x, rng)?;
    let lambda_outputs = if settings.strict_two_eval {
        base.clone()
    } else {
        oracle.query_with(&state.x, &xi1)?
    };
    let l_base = lagrangian_value(&base, &state.t, &state.lambda, alpha);
    let d_fwd = lagrangian_value(
        &out_fwd,
        &shifted(&state.t, &forward.v.u, b2, false),
        &state.lambda,
        alpha,
    ) - l_base;
    let d_bwd = lagrangian_value(
        &out_bwd,
        &shifted(&state.t, &backward.v.u, -b2, false),
        &state.lambda,
        alpha,
    ) - l_base;
    let combine = |f: &Direction, b: &Direction, beta: f64| -> Vec<f64> {
        centred(f)
            .zip(centred(b))
            .map(|(cf, cb)| (cf * d_fwd - cb * d_bwd) / (2.0 * beta))
            .collect()
    };
    Ok(StackedGradient {
        g_x: combine(&forward.u, &backward.u, b1),
        g_t: combine(&forward.v, &backward.v, b2),
        g_lambda: (0..state.lambda.len())
            .map(|j| sample_v(lambda_outputs[j + 1], state.t[j + 1], alpha[j + 1]))
            .collect(),
    })
}

/// Symmetric stacked gradient
/// `(L~(x + b1 u, t + b2 v) - L~(x - b1 u, t - b2 v)) (u, v) / (2 b)` for
/// the Gaussian kernel. Two calls; the multiplier block averages the
/// integrands of both calls unless `strict_two_eval` is off, in which case
/// a third call at `x` with the first realization is spent.
pub fn central_stacked_gradient<R: Rng + ?Sized>(
    oracle: &mut Oracle<'_>,
    rng: &mut R,
    state: &LagrangeState,
    pert: &Perturbation,
    settings: &GradientSettings,
    alpha: &[RiskLevel],
) -> Result<StackedGradient> {
    check_dim(state.t.len(), alpha.len())?;
    if settings.x_kernel.kind != KernelKind::Gaussian {
        return Err(Error::Input("the symmetric estimator needs the Gaussian kernel".into()));
    }
    let (b1, b2) = (settings.x_kernel.beta, settings.t_kernel.beta);
    let (out_p, xi1) = oracle.query(&shifted(&state.x, &pert.u.u, b1, false), rng)?;
    let (out_m, _) = oracle.query(&shifted(&state.x, &pert.u.u, -b1, false), rng)?;
    let diff = lagrangian_value(&out_p, &shifted(&state.t, &pert.v.u, b2, false), &state.lambda, alpha)
        - lagrangian_value(&out_m, &shifted(&state.t, &pert.v.u, -b2, false), &state.lambda, alpha);
    let g_lambda = if settings.strict_two_eval {
        (0..state.lambda.len())
            .map(|j| {
                let (tj, aj) = (state.t[j + 1], alpha[j + 1]);
                0.5 * (sample_v(out_p[j + 1], tj, aj) + sample_v(out_m[j + 1], tj, aj))
            })
            .collect()
    } else {
        let base = oracle.query_with(&state.x, &xi1)?;
        (0..state.lambda.len())
            .map(|j| sample_v(base[j + 1], state.t[j + 1], alpha[j + 1]))
            .collect()
    };
    Ok(StackedGradient {
        g_x: pert.u.u.iter().map(|u| diff * u / (2.0 * b1)).collect(),
        g_t: pert.v.u.iter().map(|v| diff * v / (2.0 * b2)).collect(),
        g_lambda,
    })
}
