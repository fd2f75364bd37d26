//! Gaussian and truncated-Gaussian smoothing kernels.
//!
//! The smoothed function is `c^beta(x) = E_u[c(x + beta u)]`. With the
//! truncated kernel `u` is a standard normal vector conditioned on
//! `x + beta u` lying in the box, so the blackbox is never queried outside
//! its bounds. Its gradient admits the unbiased two-point estimator
//! `(u - mu) (c(x + beta u) - c(x)) / beta`, where `mu` is the mean of the
//! truncated normal.

use libm::erfc;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{check_dim, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Narrowest standardized interval still treated as non-degenerate.
pub const DEGENERATE_WIDTH: f64 = 1e-12;

/// Smallest normal-mass accepted in the truncated mean denominator.
const MIN_MASS: f64 = 1e-300;

pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `Phi(z)` through the complementary error function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(z)`, accurate for large `z`.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `Phi^{-1}(p)` for `p` in `(0, 1)`, polished with one Halley step.
pub fn std_normal_inv_cdf(p: f64) -> f64 {
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    let pdf = std_normal_pdf(z);
    if pdf < 1e-300 {
        return z;
    }
    let err = if z > 0.0 {
        (1.0 - p) - std_normal_sf(z)
    } else {
        std_normal_cdf(z) - p
    };
    let step = err / pdf;
    z - step / (1.0 + 0.5 * z * step)
}

/// Standardized truncation interval per coordinate. Infinite ends allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TruncBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if let Some((l, u)) = lower
            .iter()
            .zip(&upper)
            .find(|(l, u)| l.is_nan() || u.is_nan() || l >= u)
        {
            return Err(Error::Input(format!("truncation bounds [{l}, {u}] are empty")));
        }
        Ok(Self { lower, upper })
    }

    /// No truncation in `dim` coordinates.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// `((lo - x) / beta, (hi - x) / beta)`: directions keeping `x + beta u`
    /// inside `[lo, hi]`.
    pub fn forward(x: &[f64], lo: &[f64], hi: &[f64], beta: f64) -> Result<Self> {
        check_dim(x.len(), lo.len())?;
        check_dim(x.len(), hi.len())?;
        Self::new(
            x.iter().zip(lo).map(|(x, l)| (l - x) / beta).collect(),
            x.iter().zip(hi).map(|(x, h)| (h - x) / beta).collect(),
        )
    }

    /// `((x - hi) / beta, (x - lo) / beta)`: directions keeping `x - beta u`
    /// inside `[lo, hi]`.
    pub fn reflected(x: &[f64], lo: &[f64], hi: &[f64], beta: f64) -> Result<Self> {
        check_dim(x.len(), lo.len())?;
        check_dim(x.len(), hi.len())?;
        Self::new(
            x.iter().zip(hi).map(|(x, h)| (x - h) / beta).collect(),
            x.iter().zip(lo).map(|(x, l)| (x - l) / beta).collect(),
        )
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
}

/// Normal mass of `[a, b]`, computed on the side of zero that avoids
/// cancellation.
fn interval_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// Mean of a standard normal truncated to `[a, b]`.
pub fn trunc_normal_mean_scalar(a: f64, b: f64) -> Result<f64> {
    let mass = interval_mass(a, b);
    if !(mass > MIN_MASS) {
        return Err(Error::DegenerateInterval { lower: a, upper: b });
    }
    Ok((std_normal_pdf(a) - std_normal_pdf(b)) / mass)
}

/// Componentwise mean `(phi(a) - phi(b)) / (Phi(b) - Phi(a))`.
pub fn trunc_normal_mean(bounds: &TruncBounds) -> Result<Vec<f64>> {
    bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&a, &b)| trunc_normal_mean_scalar(a, b))
        .collect()
}

/// One draw of a standard normal truncated to `[a, b]` by inverse-CDF.
///
/// Intervals lying entirely above zero are sampled as the negated draw on
/// `[-b, -a]` so that the tail probabilities never cancel. A fully
/// unbounded interval consumes a plain `StandardNormal` draw.
pub fn sample_trunc_normal_scalar<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(b - a >= DEGENERATE_WIDTH) {
        return Err(Error::DegenerateInterval { lower: a, upper: b });
    }
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return Ok(rng.sample(StandardNormal));
    }
    let (lo, hi, sign) = if a > 0.0 { (-b, -a, -1.0) } else { (a, b, 1.0) };
    let p_lo = std_normal_cdf(lo);
    let p_hi = std_normal_cdf(hi);
    if !(p_hi > p_lo) {
        return Err(Error::DegenerateInterval { lower: a, upper: b });
    }
    let w: f64 = rng.sample(Open01);
    let z = std_normal_inv_cdf(p_lo + w * (p_hi - p_lo));
    let z = if z <= lo {
        lo.next_up()
    } else if z >= hi {
        hi.next_down()
    } else {
        z
    };
    Ok(sign * z)
}

/// Componentwise truncated draw.
pub fn sample_trunc_normal<R: Rng + ?Sized>(bounds: &TruncBounds, rng: &mut R) -> Result<Vec<f64>> {
    bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&a, &b)| sample_trunc_normal_scalar(a, b, rng))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    TruncatedGaussian,
    Gaussian,
}

impl KernelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "truncated" | "truncated-gaussian" => Ok(Self::TruncatedGaussian),
            other => Err(Error::Input(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::TruncatedGaussian => "truncated-gaussian",
        }
    }
}

/// A smoothing kernel of width `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    pub kind: KernelKind,
    pub beta: f64,
}

/// A sampled direction and the kernel mean it must be centred by.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub u: Vec<f64>,
    pub mean: Vec<f64>,
}

impl SmoothingKernel {
    pub fn new(kind: KernelKind, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Input(format!("smoothing width must be positive, got {beta}")));
        }
        Ok(Self { kind, beta })
    }

    /// Direction for a forward perturbation `x + beta u` within `[lo, hi]`.
    pub fn draw<R: Rng + ?Sized>(&self, x: &[f64], lo: &[f64], hi: &[f64], rng: &mut R) -> Result<Direction> {
        match self.kind {
            KernelKind::Gaussian => Ok(Direction {
                u: (0..x.len()).map(|_| rng.sample(StandardNormal)).collect(),
                mean: vec![0.0; x.len()],
            }),
            KernelKind::TruncatedGaussian => {
                let bounds = TruncBounds::forward(x, lo, hi, self.beta)?;
                Ok(Direction {
                    u: sample_trunc_normal(&bounds, rng)?,
                    mean: trunc_normal_mean(&bounds)?,
                })
            }
        }
    }

    /// Direction for a backward perturbation `x - beta u` within `[lo, hi]`.
    pub fn draw_reflected<R: Rng + ?Sized>(&self, x: &[f64], lo: &[f64], hi: &[f64], rng: &mut R) -> Result<Direction> {
        match self.kind {
            KernelKind::Gaussian => self.draw(x, lo, hi, rng),
            KernelKind::TruncatedGaussian => {
                let bounds = TruncBounds::reflected(x, lo, hi, self.beta)?;
                Ok(Direction {
                    u: sample_trunc_normal(&bounds, rng)?,
                    mean: trunc_normal_mean(&bounds)?,
                })
            }
        }
    }
}

/// Inputs of a two-point gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub direction: Vec<f64>,
    pub mean: Vec<f64>,
    /// `c(x + beta u)` (or `c(x - beta u)` for the reflected sample).
    pub forward: f64,
    /// `c(x)`.
    pub base: f64,
    pub beta: f64,
}

/// `(u - mu) (forward - base) / beta`.
pub fn one_sided_estimate(s: &GradientSample) -> Vec<f64> {
    let scale = (s.forward - s.base) / s.beta;
    s.direction
        .iter()
        .zip(&s.mean)
        .map(|(u, mu)| (u - mu) * scale)
        .collect()
}

/// Average of the forward estimate and the reflected (backward) one.
/// `backward.forward` holds `c(x - beta u_2)`.
pub fn two_sided_estimate(forward: &GradientSample, backward: &GradientSample) -> Vec<f64> {
    let d1 = (forward.forward - forward.base) / (2.0 * forward.beta);
    let d2 = (backward.forward - backward.base) / (2.0 * backward.beta);
    forward
        .direction
        .iter()
        .zip(&forward.mean)
        .zip(backward.direction.iter().zip(&backward.mean))
        .map(|((u1, m1), (u2, m2))| (u1 - m1) * d1 - (u2 - m2) * d2)
        .collect()
}

/// Classical Gaussian estimator `u (forward - base) / beta`.
pub fn gaussian_estimate(u: &[f64], forward: f64, base: f64, beta: f64) -> Vec<f64> {
    let scale = (forward - base) / beta;
    u.iter().map(|u| u * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Composite Simpson integral of the normal density on `[0, z]`.
    fn simpson_cdf(z: f64) -> f64 {
        let n = 20_000;
        let h = z / n as f64;
        let mut s = std_normal_pdf(0.0) + std_normal_pdf(z);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * std_normal_pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn normal_functions() {
        assert_abs_diff_eq!(std_normal_pdf(0.0), 0.398_942_280_4, epsilon = 1e-10);
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(1.96), simpson_cdf(1.96), epsilon = 1e-12);
        assert_abs_diff_eq!(std_normal_cdf(1.96), 0.975_002_1, epsilon = 1e-7);
        for z in [-3.0, -1.0, 0.3, 2.5] {
            assert_abs_diff_eq!(std_normal_cdf(z), simpson_cdf(z), epsilon = 1e-12);
            assert_abs_diff_eq!(std_normal_inv_cdf(std_normal_cdf(z)), z, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(std_normal_sf(8.0) / std_normal_cdf(-8.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trunc_mean_closed_forms() {
        let sym = TruncBounds::new(vec![-1.3, -5.0], vec![1.3, 5.0]).unwrap();
        for m in trunc_normal_mean(&sym).unwrap() {
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-15);
        }
        let half = TruncBounds::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_abs_diff_eq!(
            trunc_normal_mean(&half).unwrap()[0],
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(trunc_normal_mean(&TruncBounds::unbounded(2)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn trunc_mean_far_tail() {
        // mean of N(0,1) | z > a approaches a + 1/a for large a
        let a = 20.0;
        let m = trunc_normal_mean_scalar(a, f64::INFINITY).unwrap();
        assert!((m - (a + 1.0 / a)).abs() < 1e-3);
        assert!(matches!(
            trunc_normal_mean_scalar(40.0, 41.0),
            Err(Error::DegenerateInterval { .. })
        ));
    }

    #[test]
    fn unbounded_draw_matches_plain_normal() {
        let mut a = rng::stream(5);
        let mut b = a.clone();
        let z = sample_trunc_normal(&TruncBounds::unbounded(3), &mut a).unwrap();
        let plain: Vec<f64> = (0..3).map(|_| b.sample(StandardNormal)).collect();
        assert_eq!(z, plain);
    }

    #[test]
    fn degenerate_interval_rejected() {
        let mut r = rng::stream(1);
        assert!(matches!(
            sample_trunc_normal_scalar(0.5, 0.5 + 1e-13, &mut r),
            Err(Error::DegenerateInterval { .. })
        ));
    }

    fn clt_mean(a: f64, b: f64, seed: u64) -> (f64, f64) {
        let n = 100_000;
        let mut r = rng::stream(seed);
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_trunc_normal_scalar(a, b, &mut r).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var.sqrt() / (n as f64).sqrt())
    }

    #[test]
    fn sample_means_match_oracles() {
        let (m, se) = clt_mean(-1.0, 1.0, 2);
        assert!(m.abs() < 3.0 * se, "{m} {se}");
        let (m, se) = clt_mean(0.0, f64::INFINITY, 3);
        assert!((m - 0.797_884_6).abs() < 3.0 * se, "{m} {se}");
        // far upper tail, sampled through the reflected branch
        let (m, se) = clt_mean(7.0, 9.0, 4);
        let exact = trunc_normal_mean_scalar(7.0, 9.0).unwrap();
        assert!((m - exact).abs() < 4.0 * se, "{m} {exact} {se}");
    }

    #[test]
    fn one_sided_examples() {
        let s = GradientSample {
            direction: vec![1.0],
            mean: vec![0.0],
            forward: 1.0,
            base: 0.0,
            beta: 0.5,
        };
        assert_eq!(one_sided_estimate(&s), vec![2.0]);
        let flat = GradientSample {
            forward: 3.0,
            base: 3.0,
            ..s.clone()
        };
        assert_eq!(one_sided_estimate(&flat), vec![0.0]);
        let centred = GradientSample {
            direction: vec![0.4, -0.2],
            mean: vec![0.4, -0.2],
            forward: 9.0,
            base: 1.0,
            beta: 0.1,
        };
        assert_eq!(one_sided_estimate(&centred), vec![0.0, 0.0]);
    }

    #[test]
    fn two_sided_reduces_to_one_sided_for_linear_symmetric() {
        // c(z) = 3 z at x = 0, symmetric bounds so mu = 0 on both sides
        let (x, beta, u) = (0.0, 0.2, 0.7);
        let c = |z: f64| 3.0 * z;
        let fwd = GradientSample {
            direction: vec![u],
            mean: vec![0.0],
            forward: c(x + beta * u),
            base: c(x),
            beta,
        };
        let bwd = GradientSample {
            forward: c(x - beta * u),
            ..fwd.clone()
        };
        let two = two_sided_estimate(&fwd, &bwd);
        let one = one_sided_estimate(&fwd);
        assert_abs_diff_eq!(two[0], one[0], epsilon = 1e-12);
        let flat = GradientSample {
            forward: 1.0,
            base: 1.0,
            ..fwd
        };
        assert_eq!(two_sided_estimate(&flat, &flat), vec![0.0]);
    }

    #[test]
    fn gaussian_example() {
        let g = gaussian_estimate(&[0.7], 3.0 * 0.14, 0.0, 0.2);
        assert_abs_diff_eq!(g[0], 1.47, epsilon = 1e-12);
        assert_eq!(gaussian_estimate(&[0.3, 1.0], 2.0, 2.0, 0.1), vec![0.0, 0.0]);
    }

    #[test]
    fn gaussian_estimator_is_unbiased_on_linear() {
        let n = 100_000;
        let beta = 0.2;
        let mut r = rng::stream(9);
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = r.sample(StandardNormal);
                gaussian_estimate(&[u], 3.0 * (0.4 + beta * u), 3.0 * 0.4, beta)[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn truncated_kernel_keeps_queries_in_box() {
        let k = SmoothingKernel::new(KernelKind::TruncatedGaussian, 0.3).unwrap();
        let mut r = rng::stream(8);
        let (lo, hi) = ([0.0, 0.0], [1.0, 1.0]);
        for i in 0..5000 {
            let x = [(i % 11) as f64 / 10.0, 0.999];
            let d = k.draw(&x, &lo, &hi, &mut r).unwrap();
            for (xj, uj) in x.iter().zip(&d.u) {
                let q = xj + k.beta * uj;
                assert!((-1e-12..=1.0 + 1e-12).contains(&q), "{q}");
            }
            let back = k.draw_reflected(&x, &lo, &hi, &mut r).unwrap();
            for (xj, uj) in x.iter().zip(&back.u) {
                let q = xj - k.beta * uj;
                assert!((-1e-12..=1.0 + 1e-12).contains(&q), "{q}");
            }
        }
        assert!(SmoothingKernel::new(KernelKind::Gaussian, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn draws_strictly_inside(a in -8.0f64..8.0, w in 1e-6f64..10.0, seed in 0u64..1000) {
            let b = a + w;
            let mut r = rng::stream(seed);
            for _ in 0..50 {
                let z = sample_trunc_normal_scalar(a, b, &mut r).unwrap();
                prop_assert!(z > a && z < b, "{} not in ({}, {})", z, a, b);
            }
        }
    }
}
