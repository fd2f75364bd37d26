//! Statistical properties of the smoothing, CVaR and gradient machinery.

use ramsa::blackbox::{EvaluationBudget, Hyperbox, Problem, UncertaintyModel};
use ramsa::cvar::{mc_cvar, RiskLevel, SampleBatch};
use ramsa::lagrangian::{
    central_stacked_gradient, lagrangian_value, stacked_gradient, GradientSettings, LagrangeState, Oracle,
};
use ramsa::rng;
use ramsa::smoothing::{
    sample_trunc_normal, sample_trunc_normal_scalar, std_normal_inv_cdf, std_normal_pdf, trunc_normal_mean_scalar,
    KernelKind, SmoothingKernel, TruncBounds,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn truncated_draws_stay_inside_bounds() {
    let mut r = rng::stream(3);
    let mut draws = 0;
    while draws < 1_000_000 {
        let a: f64 = r.gen_range(-12.0..10.0);
        let b = match r.gen_range(0..4) {
            0 => f64::INFINITY,
            1 => a + 1e-9,
            _ => a + r.gen_range(1e-6..6.0),
        };
        let a = if r.gen_bool(0.1) { f64::NEG_INFINITY } else { a };
        for _ in 0..1000 {
            let z = sample_trunc_normal_scalar(a, b, &mut r).unwrap();
            assert!(z > a && z < b, "{z} outside ({a}, {b})");
        }
        draws += 1000;
    }
}

#[test]
fn mean_formula_matches_empirical_mean() {
    let intervals = [
        (-1.0, 1.0),
        (0.5, 2.0),
        (-3.0, -2.5),
        (4.0, f64::INFINITY),
        (f64::NEG_INFINITY, -0.3),
        (-0.2, 7.0),
    ];
    let mut r = rng::stream(4);
    for (a, b) in intervals {
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_trunc_normal_scalar(a, b, &mut r).unwrap())
            .collect();
        let (m, se) = mean_and_se(&xs);
        let want = trunc_normal_mean_scalar(a, b).unwrap();
        assert!((m - want).abs() <= 4.0 * se, "[{a}, {b}]: {m} vs {want} (se {se})");
    }
}

/// `sum_i |x_i - 0.3|` is `sqrt(n)`-Lipschitz in the Euclidean norm.
fn abs_sum(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - 0.3).abs()).sum()
}

#[test]
fn smoothing_error_within_lipschitz_bound() {
    let n = 3;
    let lip = (n as f64).sqrt();
    let beta = 0.05;
    let mut r = rng::stream(5);
    for kind in [KernelKind::Gaussian, KernelKind::TruncatedGaussian] {
        let kernel = SmoothingKernel::new(kind, beta).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
            let vals: Vec<f64> = (0..10_000)
                .map(|_| {
                    let d = kernel.draw(&x, &[0.0; 3], &[1.0; 3], &mut r).unwrap();
                    let y: Vec<f64> = x.iter().zip(&d.u).map(|(x, u)| x + beta * u).collect();
                    abs_sum(&y)
                })
                .collect();
            let (m, se) = mean_and_se(&vals);
            let gap = (m - abs_sum(&x)).abs();
            assert!(
                gap <= lip * beta * (n as f64).sqrt() + 3.0 * se,
                "{kind:?} at {x:?}: {gap}"
            );
        }
    }
}

/// Smoothing `x` and `t` moves CVaR by at most `(L b1 sqrt(n) + b2) / (1 - alpha)`.
#[test]
fn smoothed_cvar_within_smoothing_bound() {
    let n = 3;
    let lip = (n as f64).sqrt();
    let (b1, b2) = (0.05, 0.01);
    let samples = 1_000_000;
    let mut r = rng::stream(6);
    for alpha in [0.5, 0.9] {
        let level = RiskLevel::new(alpha).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
            // C(x, xi) = |x - 0.3|_1 + xi with xi standard normal
            let plain = abs_sum(&x) + std_normal_pdf(std_normal_inv_cdf(alpha)) / (1.0 - alpha);
            let mut d = Vec::with_capacity(samples);
            let mut vsum = 0.0;
            for _ in 0..samples {
                let y: Vec<f64> = x.iter().map(|x| x + b1 * r.sample::<f64, _>(StandardNormal)).collect();
                let xi: f64 = r.sample(StandardNormal);
                let v: f64 = r.sample(StandardNormal);
                vsum += v;
                d.push(abs_sum(&y) + xi - b2 * v);
            }
            // E[t + b2 v + (C - t - b2 v)^+ / (1 - a)] = V(D, t) + b2 E[v], D = C - b2 v
            let batch = SampleBatch::new(d, 0).unwrap();
            let smoothed = mc_cvar(&batch, level) + b2 * vsum / samples as f64;
            let var = ramsa::cvar::mc_var(&batch, level);
            let tail: Vec<f64> = batch
                .values()
                .iter()
                .map(|c| (c - var).max(0.0) / (1.0 - alpha))
                .collect();
            let (_, se) = mean_and_se(&tail);
            let bound = (lip * b1 * (n as f64).sqrt() + b2) / (1.0 - alpha);
            assert!(
                (smoothed - plain).abs() <= bound + 4.0 * se,
                "alpha {alpha}: {smoothed} vs {plain}"
            );
        }
    }
}

fn test_problem() -> Problem {
    Problem::from_fn(
        "bowl",
        1,
        Hyperbox::unit(2),
        vec![0.5, 0.5],
        UncertaintyModel::deterministic(),
        |x, _| vec![(x[0] - 0.3).powi(2) + 2.0 * (x[1] - 0.8).powi(2), x[0] + x[1] - 1.6],
    )
    .unwrap()
}

/// Monte-Carlo smoothed Lagrangian with common random numbers, so that
/// finite differences in the state are not drowned by sampling noise.
fn smoothed_lagrangian(
    oracle: &mut Oracle<'_>,
    settings: &GradientSettings,
    state: &LagrangeState,
    alpha: &[RiskLevel],
    samples: usize,
) -> f64 {
    let mut r = rng::stream(77);
    let (b1, b2) = (settings.x_kernel.beta, settings.t_kernel.beta);
    let mut acc = 0.0;
    for _ in 0..samples {
        let p = settings.draw(state, &mut r).unwrap();
        let x: Vec<f64> = state.x.iter().zip(&p.u.u).map(|(x, u)| x + b1 * u).collect();
        let t: Vec<f64> = state.t.iter().zip(&p.v.u).map(|(t, v)| t + b2 * v).collect();
        let out = oracle.query_with(&x, &[]).unwrap();
        acc += lagrangian_value(&out, &t, &state.lambda, alpha);
    }
    acc / samples as f64
}

fn check_stacked_unbiased(kind: KernelKind) {
    let p = test_problem();
    let mut oracle = Oracle::new(&p, EvaluationBudget::unlimited());
    let settings = GradientSettings {
        x_kernel: SmoothingKernel::new(kind, 0.1).unwrap(),
        t_kernel: SmoothingKernel::new(kind, 0.05).unwrap(),
        t_max: 2.0,
        strict_two_eval: true,
    };
    let alpha = [RiskLevel::new(0.0).unwrap(), RiskLevel::new(0.9).unwrap()];
    let state = LagrangeState::new(vec![0.15, 0.93], vec![0.3, -0.7], vec![1.5]).unwrap();

    let mut r = rng::stream(1);
    let draws: Vec<Vec<f64>> = (0..100_000)
        .map(|_| {
            let pert = settings.draw(&state, &mut r).unwrap();
            let g = match kind {
                KernelKind::Gaussian => central_stacked_gradient(&mut oracle, &mut r, &state, &pert, &settings, &alpha),
                KernelKind::TruncatedGaussian => {
                    stacked_gradient(&mut oracle, &mut r, &state, &pert, &settings, &alpha)
                }
            }
            .unwrap();
            g.g_x.iter().chain(&g.g_t).copied().collect()
        })
        .collect();

    let h = 1e-5;
    for coord in 0..4 {
        let shifted = |s: f64| {
            let mut st = state.clone();
            if coord < 2 {
                st.x[coord] += s;
            } else {
                st.t[coord - 2] += s;
            }
            st
        };
        let hi = smoothed_lagrangian(&mut oracle, &settings, &shifted(h), &alpha, 1_000_000);
        let lo = smoothed_lagrangian(&mut oracle, &settings, &shifted(-h), &alpha, 1_000_000);
        let fd = (hi - lo) / (2.0 * h);
        let col: Vec<f64> = draws.iter().map(|g| g[coord]).collect();
        let (m, se) = mean_and_se(&col);
        assert!(
            (m - fd).abs() <= 3.0 * se,
            "{kind:?} coordinate {coord}: {m} vs {fd} (se {se})"
        );
    }
}

#[test]
fn one_sided_truncated_stacked_gradient_is_unbiased() {
    check_stacked_unbiased(KernelKind::TruncatedGaussian);
}

#[test]
fn central_gaussian_stacked_gradient_is_unbiased() {
    check_stacked_unbiased(KernelKind::Gaussian);
}

#[test]
fn vector_sampler_respects_each_coordinate() {
    let bounds = TruncBounds::forward(&[0.0, 0.5, 1.0], &[0.0; 3], &[1.0; 3], 0.1).unwrap();
    let mut r = rng::stream(8);
    for _ in 0..10_000 {
        let u = sample_trunc_normal(&bounds, &mut r).unwrap();
        for (i, v) in u.iter().enumerate() {
            assert!(*v > bounds.lower()[i] && *v < bounds.upper()[i]);
        }
    }
}
