//! Risk-averse multi-timescale stochastic approximation (RAMSA) for
//! CVaR-constrained blackbox optimization.
//!
//! The crate is organised bottom-up:
//!
//! * [`blackbox`]: noisy blackbox problems, uncertainty models, the unit-cube
//!   and `arctan(cbrt(.))` transforms, and the built-in RBDO benchmarks.
//! * [`smoothing`]: Gaussian and truncated-Gaussian smoothing kernels and
//!   their zeroth-order gradient estimators.
//! * [`cvar`]: sample-level `V_alpha` and empirical VaR / CVaR.
//! * [`lagrangian`]: the noisy smoothed Lagrangian and its stacked gradient.
//! * [`solver`]: the four-timescale projected update loop.
//! * [`tuning`]: hyperparameter rules for `beta1` and the design step size.
//! * [`validation`]: Monte Carlo feasibility checks, trials, and epistemic
//!   worst-case verification.
//! * [`config`] and [`cli`]: the `ramsa` command-line front end.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod blackbox;
pub mod cli;
pub mod config;
pub mod cvar;
pub mod error;
pub mod lagrangian;
pub mod rng;
pub mod smoothing;
pub mod solver;
pub mod tuning;
pub mod validation;

pub use blackbox::{builtin_problem, EvaluationBudget, Hyperbox, Problem, UncertaintyModel};
pub use error::{Error, Result};
pub use smoothing::KernelKind;
pub use solver::{run, SolverConfig, SolverResult};
