//! Value-at-risk and conditional value-at-risk.
//!
//! `CVaR_alpha = min_t V_alpha(t)` with
//! `V_alpha(t) = t + E[(C - t)^+] / (1 - alpha)`. The empirical versions
//! below use the left quantile for VaR and plug it into `V_alpha`, which is
//! the exact minimizer of the empirical `V_alpha`.

use crate::error::{Error, Result};

/// Reliability level `alpha` in `[0, 1)`. `alpha = 0` is the expectation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(Error::Input(format!("risk level must lie in [0, 1), got {alpha}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Non-empty batch of finite samples of one output.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    pub source: usize,
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, source: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty sample batch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("sample batch contains non-finite values".into()));
        }
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Single-sample integrand `t + (c - t)^+ / (1 - alpha)`.
pub fn sample_v(c: f64, t: f64, alpha: RiskLevel) -> f64 {
    t + (c - t).max(0.0) / (1.0 - alpha.0)
}

/// Empirical `V_alpha(t)` over a batch.
pub fn empirical_v(batch: &SampleBatch, t: f64, alpha: RiskLevel) -> f64 {
    let excess: f64 = batch.values.iter().map(|c| (c - t).max(0.0)).sum();
    t + excess / (batch.len() as f64 * (1.0 - alpha.0))
}

/// Smallest sample `v` with empirical `P(C <= v) >= alpha`.
pub fn mc_var(batch: &SampleBatch, alpha: RiskLevel) -> f64 {
    let mut sorted = batch.values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut k = ((alpha.0 * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= alpha.0 {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < alpha.0 {
        k += 1;
    }
    sorted[k - 1]
}

/// Empirical CVaR: `V_alpha` evaluated at the empirical VaR.
pub fn mc_cvar(batch: &SampleBatch, alpha: RiskLevel) -> f64 {
    empirical_v(batch, mc_var(batch, alpha), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn a(x: f64) -> RiskLevel {
        RiskLevel::new(x).unwrap()
    }

    fn one_to_ten() -> SampleBatch {
        SampleBatch::new((1..=10).map(f64::from).collect(), 0).unwrap()
    }

    #[test]
    fn risk_level_range() {
        assert!(RiskLevel::new(0.0).is_ok());
        assert!(RiskLevel::new(1.0).is_err());
        assert!(RiskLevel::new(-0.1).is_err());
    }

    #[test]
    fn sample_v_examples() {
        assert_eq!(sample_v(0.5, 1.0, a(0.9)), 1.0);
        assert_eq!(sample_v(2.0, 1.0, a(0.0)), 2.0);
        assert_eq!(sample_v(2.0, 1.0, a(0.5)), 3.0);
    }

    #[test]
    fn var_examples() {
        let b = one_to_ten();
        assert_eq!(mc_var(&b, a(0.5)), 5.0);
        assert_eq!(mc_var(&b, a(0.0)), 1.0);
        assert_eq!(mc_var(&b, a(0.7)), 7.0);
        assert_eq!(mc_var(&b, a(0.71)), 8.0);
        let same = SampleBatch::new(vec![4.2; 7], 0).unwrap();
        for al in [0.0, 0.3, 0.99] {
            assert_eq!(mc_var(&same, a(al)), 4.2);
        }
    }

    #[test]
    fn cvar_examples() {
        let b = one_to_ten();
        assert_abs_diff_eq!(mc_cvar(&b, a(0.8)), 9.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mc_cvar(&b, a(0.0)), 5.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_or_nan_batch_rejected() {
        assert!(SampleBatch::new(vec![], 0).is_err());
        assert!(SampleBatch::new(vec![1.0, f64::NAN], 0).is_err());
    }

    #[test]
    fn monotone_and_ordered() {
        let values: Vec<f64> = (0..257).map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0).collect();
        let b = SampleBatch::new(values, 0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..10 {
            let al = a(k as f64 / 10.0);
            let c = mc_cvar(&b, al);
            assert!(c >= prev - 1e-12);
            assert!(mc_var(&b, al) <= c + 1e-12);
            assert!(b.mean() <= c + 1e-12);
            prev = c;
        }
    }
}
