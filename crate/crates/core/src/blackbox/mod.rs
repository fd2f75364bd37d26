//! Noisy blackbox problems.
//!
//! A [`Problem`] maps a design point (original units) and an uncertainty
//! realization to `m + 1` outputs: the objective `C_0` followed by the
//! constraints `C_1..C_m`, with feasibility meaning `C_j <= 0`. The solver
//! never sees original units: it works on the unit cube and on outputs
//! squashed by [`output_transform`], see [`evaluate_transformed`].

mod benchmarks;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::smoothing::sample_trunc_normal_scalar;

pub use benchmarks::{builtin_problem, reference_solution, BUILTIN_NAMES, VSI_EPISTEMIC_MEANS};

/// Retries used when truncating a design perturbation to the box.
const TRUNCATION_RETRIES: usize = 100;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l >= u {
                return Err(Error::Input(format!(
                    "box component {i}: lower {l} must be below upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Componentwise clamp onto the box.
    pub fn project(&self, z: &mut [f64]) {
        for (v, (l, u)) in z.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(*l).min(*u);
        }
    }

    /// `lower + (upper - lower) * x_unit`. Points outside the unit cube are
    /// mapped affinely as well; Gaussian perturbations rely on that.
    pub fn scale_to_box(&self, x_unit: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x_unit.len())?;
        Ok(x_unit
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| l + (u - l) * x)
            .collect())
    }

    /// Inverse of [`Hyperbox::scale_to_box`].
    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (x - l) / (u - l))
            .collect())
    }
}

/// `arctan(cbrt(c))`, an odd, strictly increasing squashing of a blackbox
/// output into `(-pi/2, pi/2)`.
pub fn output_transform(c: f64) -> Result<f64> {
    if c.is_nan() {
        return Err(Error::Input("output_transform of NaN".into()));
    }
    Ok(c.cbrt().atan())
}

/// Scalar distribution of one uncertainty component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Normal {
        mean: f64,
        std: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    TruncatedNormal {
        mean: f64,
        std: f64,
        lo: f64,
        hi: f64,
    },
    /// One of two values with probability 1/2 each.
    BernoulliPair {
        first: f64,
        second: f64,
    },
    Fixed {
        value: f64,
    },
}

impl Distribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Normal { mean, std } => mean.is_finite() && std > 0.0,
            Distribution::Uniform { lo, hi } => lo < hi,
            Distribution::TruncatedNormal { mean, std, lo, hi } => mean.is_finite() && std > 0.0 && lo < hi,
            Distribution::BernoulliPair { first, second } => first.is_finite() && second.is_finite(),
            Distribution::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid distribution {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mean, .. } => mean,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::TruncatedNormal { mean, std, lo, hi } => {
                let a = (lo - mean) / std;
                let b = (hi - mean) / std;
                mean + std * crate::smoothing::trunc_normal_mean_scalar(a, b).unwrap_or(0.0)
            }
            Distribution::BernoulliPair { first, second } => 0.5 * (first + second),
            Distribution::Fixed { value } => value,
        }
    }

    /// Support of the distribution, `(-inf, inf)` for normals.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::Uniform { lo, hi } | Distribution::TruncatedNormal { lo, hi, .. } => (lo, hi),
            Distribution::BernoulliPair { first, second } => (first.min(second), first.max(second)),
            Distribution::Fixed { value } => (value, value),
        }
    }

    /// Draws one value. `scale` multiplies the spread around the location;
    /// `location` overrides the location when set.
    fn sample<R: Rng + ?Sized>(&self, scale: f64, location: Option<f64>, rng: &mut R) -> f64 {
        match *self {
            Distribution::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                location.unwrap_or(mean) + std * scale * z
            }
            Distribution::Uniform { lo, hi } => {
                let c = location.unwrap_or(0.5 * (lo + hi));
                let half = 0.5 * (hi - lo) * scale;
                c - half + 2.0 * half * rng.gen::<f64>()
            }
            Distribution::TruncatedNormal { mean, std, lo, hi } => {
                let a = (lo - mean) / std;
                let b = (hi - mean) / std;
                let z = sample_trunc_normal_scalar(a, b, rng).unwrap_or(0.5 * (a + b));
                location.unwrap_or(mean) + std * scale * z
            }
            Distribution::BernoulliPair { first, second } => {
                if rng.gen::<bool>() {
                    first
                } else {
                    second
                }
            }
            Distribution::Fixed { value } => location.unwrap_or(value),
        }
    }
}

/// One entry of the uncertainty vector `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainComponent {
    pub dist: Distribution,
    /// Spread is multiplied by `|x_i|` (original units) of this design
    /// variable, recomputed at every query point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_with: Option<usize>,
    /// Design variable this component is added to. Used to truncate the
    /// perturbation so `x_i + xi` stays in the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbs: Option<usize>,
    /// Epistemic location: when set, the mean of `dist` is itself drawn from
    /// this distribution at every sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epistemic_mean: Option<Distribution>,
}

impl UncertainComponent {
    pub fn new(dist: Distribution) -> Self {
        Self {
            dist,
            scale_with: None,
            perturbs: None,
            epistemic_mean: None,
        }
    }

    pub fn perturbing(mut self, i: usize) -> Self {
        self.perturbs = Some(i);
        self
    }

    pub fn scaled_by(mut self, i: usize) -> Self {
        self.scale_with = Some(i);
        self
    }

    pub fn with_epistemic_mean(mut self, d: Distribution) -> Self {
        self.epistemic_mean = Some(d);
        self
    }
}

/// How epistemic locations are represented, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpistemicKind {
    None,
    /// Locations take finitely many values (checked exhaustively).
    Points,
    /// Locations range over an interval (checked by worst-case search).
    Interval,
}

/// Joint model of the uncertainty vector `xi`, components independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub components: Vec<UncertainComponent>,
    /// Truncate perturbing components so `x + xi` stays inside the box.
    #[serde(default)]
    pub truncate_to_box: bool,
}

impl UncertaintyModel {
    pub fn new(components: Vec<UncertainComponent>) -> Result<Self> {
        for c in &components {
            c.dist.validate()?;
            if let Some(e) = &c.epistemic_mean {
                e.validate()?;
            }
        }
        Ok(Self {
            components,
            truncate_to_box: false,
        })
    }

    /// No uncertainty at all.
    pub fn deterministic() -> Self {
        Self {
            components: Vec::new(),
            truncate_to_box: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Same model with perturbations truncated to the design box.
    pub fn truncated(&self) -> Self {
        Self {
            truncate_to_box: true,
            ..self.clone()
        }
    }

    /// Draws a realization at design point `x` (original units).
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], bounds: &Hyperbox, rng: &mut R) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                let scale = c.scale_with.and_then(|i| x.get(i)).map_or(1.0, |v| v.abs());
                let location = c.epistemic_mean.as_ref().map(|e| e.sample(1.0, None, rng));
                match (self.truncate_to_box, c.perturbs) {
                    (true, Some(i)) if i < x.len() => {
                        let (lo, hi) = (bounds.lower()[i] - x[i], bounds.upper()[i] - x[i]);
                        let mut v = c.dist.sample(scale, location, rng);
                        for _ in 0..TRUNCATION_RETRIES {
                            if v >= lo && v <= hi {
                                break;
                            }
                            v = c.dist.sample(scale, location, rng);
                        }
                        v.max(lo).min(hi)
                    }
                    _ => c.dist.sample(scale, location, rng),
                }
            })
            .collect()
    }

    /// `E[xi]`, with epistemic locations at their own means. Design scaling
    /// only widens the spread, so it leaves the means untouched.
    pub fn mean(&self) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| match &c.epistemic_mean {
                Some(e) => e.mean(),
                None => c.dist.mean(),
            })
            .collect()
    }

    /// Indices of components with an epistemic location.
    pub fn epistemic_indices(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.epistemic_mean.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn epistemic_kind(&self) -> EpistemicKind {
        let mut kind = EpistemicKind::None;
        for c in &self.components {
            match c.epistemic_mean {
                Some(Distribution::BernoulliPair { .. }) if kind == EpistemicKind::None => kind = EpistemicKind::Points,
                Some(Distribution::BernoulliPair { .. }) => {}
                Some(_) => kind = EpistemicKind::Interval,
                None => {}
            }
        }
        kind
    }

    /// Copy with the given epistemic locations pinned to fixed values.
    pub fn with_fixed_locations(&self, fixed: &[(usize, f64)]) -> Result<Self> {
        let mut out = self.clone();
        for &(i, value) in fixed {
            let c = out
                .components
                .get_mut(i)
                .ok_or_else(|| Error::Input(format!("no uncertainty component {i}")))?;
            c.epistemic_mean = None;
            c.dist = match c.dist {
                Distribution::Normal { std, .. } => Distribution::Normal { mean: value, std },
                Distribution::Uniform { lo, hi } => {
                    let half = 0.5 * (hi - lo);
                    Distribution::Uniform {
                        lo: value - half,
                        hi: value + half,
                    }
                }
                Distribution::TruncatedNormal { mean, std, lo, hi } => {
                    let shift = value - mean;
                    Distribution::TruncatedNormal {
                        mean: value,
                        std,
                        lo: lo + shift,
                        hi: hi + shift,
                    }
                }
                Distribution::BernoulliPair { .. } | Distribution::Fixed { .. } => Distribution::Fixed { value },
            };
        }
        Ok(out)
    }
}

/// Raw blackbox: `(x original units, xi) -> [C_0, .., C_m]`.
pub type Evaluator = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A noisy blackbox optimization problem.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    n: usize,
    m: usize,
    bounds: Hyperbox,
    x0: Vec<f64>,
    pub uncertainty: UncertaintyModel,
    evaluator: Evaluator,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("bounds", &self.bounds)
            .field("x0", &self.x0)
            .field("uncertainty", &self.uncertainty)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        m: usize,
        bounds: Hyperbox,
        x0: Vec<f64>,
        uncertainty: UncertaintyModel,
        evaluator: Evaluator,
    ) -> Result<Self> {
        check_dim(bounds.dim(), x0.len())?;
        for c in &uncertainty.components {
            for i in c.scale_with.iter().chain(c.perturbs.iter()) {
                if *i >= x0.len() {
                    return Err(Error::Input(format!(
                        "uncertainty refers to design variable {i} but n = {}",
                        x0.len()
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            n: x0.len(),
            m,
            bounds,
            x0,
            uncertainty,
            evaluator,
        })
    }

    /// Problem with a plain closure evaluator.
    pub fn from_fn<F>(
        name: impl Into<String>,
        m: usize,
        bounds: Hyperbox,
        x0: Vec<f64>,
        uncertainty: UncertaintyModel,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::new(name, m, bounds, x0, uncertainty, Arc::new(f))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bounds(&self) -> &Hyperbox {
        &self.bounds
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn x0_unit(&self) -> Vec<f64> {
        self.bounds.to_unit(&self.x0).expect("x0 matches bounds")
    }

    /// Same problem with uncertainty truncated so `x + xi` stays in the box.
    pub fn with_truncated_uncertainty(&self) -> Self {
        Self {
            uncertainty: self.uncertainty.truncated(),
            ..self.clone()
        }
    }

    pub fn with_uncertainty(&self, uncertainty: UncertaintyModel) -> Self {
        Self {
            uncertainty,
            ..self.clone()
        }
    }

    /// Draws `xi` for a query at `x` (original units).
    pub fn sample_xi<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        self.uncertainty.sample(x, &self.bounds, rng)
    }

    /// Raw outputs at `x` (original units). Non-finite outputs are an
    /// evaluation error carrying the offending index.
    pub fn evaluate_raw(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        check_dim(self.uncertainty.dim(), xi.len())?;
        let out = (self.evaluator)(x, xi);
        check_dim(self.m + 1, out.len())?;
        if let Some((index, &value)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Evaluation { index, value });
        }
        Ok(out)
    }
}

/// Counter of blackbox calls against a fixed allowance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvaluationBudget {
    max_calls: u64,
    used: u64,
    outside_unit_cube: u64,
}

impl EvaluationBudget {
    pub fn new(max_calls: u64) -> Self {
        Self {
            max_calls,
            used: 0,
            outside_unit_cube: 0,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn max_calls(&self) -> u64 {
        self.max_calls
    }

    pub fn remaining(&self) -> u64 {
        self.max_calls - self.used
    }

    /// Queries whose unit-cube point fell outside `[0, 1]^n`.
    pub fn outside_unit_cube(&self) -> u64 {
        self.outside_unit_cube
    }

    fn charge(&mut self) -> Result<()> {
        if self.used >= self.max_calls {
            return Err(Error::BudgetExhausted { used: self.used });
        }
        self.used += 1;
        Ok(())
    }
}

/// Evaluates `C~_j = arctan(cbrt(C_j(b_l + (b_u - b_l) x_unit, xi)))` for all
/// `j`, charging one call to `budget`.
pub fn evaluate_transformed(
    problem: &Problem,
    x_unit: &[f64],
    xi: &[f64],
    budget: &mut EvaluationBudget,
) -> Result<Vec<f64>> {
    let x = problem.bounds.scale_to_box(x_unit)?;
    budget.charge()?;
    if x_unit.iter().any(|v| !(0.0..=1.0).contains(v)) {
        budget.outside_unit_cube += 1;
    }
    problem
        .evaluate_raw(&x, xi)?
        .into_iter()
        .map(output_transform)
        .collect()
}

/// Serializable description of a custom problem. The evaluator is supplied
/// separately through [`ProblemSpec::into_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub constraints: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub uncertainty: Vec<UncertainComponent>,
}

impl ProblemSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn into_problem(self, evaluator: Evaluator) -> Result<Problem> {
        let bounds = Hyperbox::new(self.lower, self.upper)?;
        let uncertainty = UncertaintyModel::new(self.uncertainty)?;
        Problem::new(self.name, self.constraints, bounds, self.x0, uncertainty, evaluator)
    }
}
