//! Analytic RBDO benchmarks: steel column (SCD), welded beam (WBD),
//! vehicle side impact (VSI) and speed reducer (SRD), plus two VSI variants
//! whose `xi_8`, `xi_9` means are epistemic.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use super::{Distribution, Hyperbox, Problem, UncertainComponent, UncertaintyModel};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 6] = [
    "SCD",
    "WBD",
    "VSI",
    "SRD",
    "VSI-epistemic-points",
    "VSI-epistemic-interval",
];

/// Epistemic range of the `xi_8`, `xi_9` means in the VSI variants.
pub const VSI_EPISTEMIC_MEANS: (f64, f64) = (0.192, 0.345);

/// Reference (SORA) solutions in original units, used as comparison rows.
pub fn reference_solution(name: &str) -> Option<Vec<f64>> {
    let x = match canonical(name)? {
        "SCD" => vec![257.7806, 13.5335, 100.0],
        "WBD" => vec![5.9188, 181.2849, 210.6114, 6.2253],
        "VSI" | "VSI-epistemic-points" | "VSI-epistemic-interval" => {
            vec![0.7872, 1.35, 0.6887, 1.5, 1.0706, 1.2, 0.7284]
        }
        "SRD" => vec![3.5765, 0.7, 17.0, 7.3, 7.7541, 3.3652, 5.3017],
        _ => return None,
    };
    Some(x)
}

fn canonical(name: &str) -> Option<&'static str> {
    BUILTIN_NAMES
        .iter()
        .copied()
        .find(|n| n.eq_ignore_ascii_case(name.trim()))
}

/// Looks up a built-in benchmark by name (case-insensitive).
pub fn builtin_problem(name: &str) -> Result<Problem> {
    match canonical(name) {
        Some("SCD") => steel_column(),
        Some("WBD") => welded_beam(),
        Some("VSI") => vehicle_side_impact("VSI", None),
        Some("SRD") => speed_reducer(),
        Some("VSI-epistemic-points") => vehicle_side_impact(
            "VSI-epistemic-points",
            Some(Distribution::BernoulliPair {
                first: VSI_EPISTEMIC_MEANS.0,
                second: VSI_EPISTEMIC_MEANS.1,
            }),
        ),
        Some("VSI-epistemic-interval") => vehicle_side_impact(
            "VSI-epistemic-interval",
            Some(Distribution::Uniform {
                lo: VSI_EPISTEMIC_MEANS.0,
                hi: VSI_EPISTEMIC_MEANS.1,
            }),
        ),
        _ => Err(Error::UnknownProblem(name.to_string())),
    }
}

fn normal(mean: f64, std: f64) -> UncertainComponent {
    UncertainComponent::new(Distribution::Normal { mean, std })
}

fn uniform(lo: f64, hi: f64) -> UncertainComponent {
    UncertainComponent::new(Distribution::Uniform { lo, hi })
}

fn steel_column() -> Result<Problem> {
    let bounds = Hyperbox::new(vec![200.0, 10.0, 100.0], vec![400.0, 30.0, 500.0])?;
    let uncertainty = UncertaintyModel::new(vec![
        normal(0.0, 0.1).scaled_by(0).perturbing(0),
        normal(0.0, 0.1).scaled_by(1).perturbing(1),
        normal(0.0, 0.1).scaled_by(2).perturbing(2),
        normal(400.0, 40.0),
        normal(5e5, 5e4),
        normal(6e5, 6e4),
        normal(6e5, 6e4),
        normal(30.0, 3.0),
        normal(21000.0, 2100.0),
    ])?;
    Problem::new(
        "SCD",
        1,
        bounds,
        vec![200.0, 10.5, 100.0],
        uncertainty,
        Arc::new(steel_column_outputs),
    )
}

fn steel_column_outputs(x: &[f64], xi: &[f64]) -> Vec<f64> {
    const LENGTH: f64 = 7500.0;
    let (b, d, h) = (x[0] + xi[0], x[1] + xi[1], x[2] + xi[2]);
    let area = 2.0 * b * d;
    let modulus = b * d * h;
    let inertia = 0.5 * b * d * h * h;
    let euler = PI * PI * xi[8] * inertia / (LENGTH * LENGTH);
    let load = xi[4] + xi[5] + xi[6];
    let stress = load * (1.0 / area + xi[7] * euler / (modulus * (euler - load)));
    vec![b * d + 5.0 * h, stress - xi[3]]
}

fn welded_beam() -> Result<Problem> {
    let bounds = Hyperbox::new(vec![3.175, 0.0, 0.0, 0.0], vec![50.8, 254.0, 254.0, 50.8])?;
    let uncertainty = UncertaintyModel::new(vec![
        uniform(-0.1693, 0.1693).perturbing(0),
        uniform(-0.1693, 0.1693).perturbing(1),
        uniform(-0.0107, 0.0107).perturbing(2),
        uniform(-0.0107, 0.0107).perturbing(3),
    ])?;
    Problem::new(
        "WBD",
        5,
        bounds,
        vec![6.208, 157.82, 210.62, 6.208],
        uncertainty,
        Arc::new(welded_beam_outputs),
    )
}

fn welded_beam_outputs(x: &[f64], xi: &[f64]) -> Vec<f64> {
    const K1: f64 = 6.74135e-5;
    const K2: f64 = 2.93585e-6;
    const K3: f64 = 3.556e2;
    const K4: f64 = 2.6688e4;
    const K5: f64 = 2.0685e5;
    const K6: f64 = 8.274e4;
    let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
    let (h, l, t, b) = (y[0], y[1], y[2], y[3]);

    let cost = K1 * h * h * l + K2 * t * b * (K3 + l);

    let tau1 = K4 / (SQRT_2 * h * l);
    let radius = (l * l + (h + t).powi(2)).sqrt() / 2.0;
    let moment = K4 * (K3 + l / 2.0);
    let polar = SQRT_2 * h * l * (l * l / 12.0 + (h + t).powi(2) / 4.0);
    let tau2 = moment * radius / polar;
    let tau = (tau1 * tau1 + 2.0 * tau1 * tau2 * l / (2.0 * radius) + tau2 * tau2).sqrt();

    let sigma = 6.0 * K4 * K3 / (t * t * b);
    let delta = 4.0 * K4 * K3.powi(3) / (2.0685e5 * t.powi(3) * b);
    let buckling =
        4.013 * t * b.powi(3) * (K5 * K6).sqrt() / (6.0 * K3 * K3) * (1.0 - t / (4.0 * K3) * (K5 / K6).sqrt());

    vec![
        cost,
        tau / 93.77 - 1.0,
        sigma / 206.85 - 1.0,
        h / b - 1.0,
        delta / 6.35 - 1.0,
        1.0 - buckling / K4,
    ]
}

fn vehicle_side_impact(name: &str, epistemic: Option<Distribution>) -> Result<Problem> {
    let bounds = Hyperbox::new(
        vec![0.5, 0.45, 0.5, 0.5, 0.875, 0.4, 0.4],
        vec![1.5, 1.35, 1.5, 1.5, 2.625, 1.2, 1.2],
    )?;
    let mut components: Vec<UncertainComponent> = (0..7)
        .map(|i| normal(0.0, if i == 4 { 0.05 } else { 0.03 }).perturbing(i))
        .collect();
    for _ in 0..2 {
        let mut c = normal(0.345, 0.006);
        if let Some(e) = &epistemic {
            c = c.with_epistemic_mean(e.clone());
        }
        components.push(c);
    }
    components.push(normal(0.0, 10.0));
    components.push(normal(0.0, 10.0));
    Problem::new(
        name,
        10,
        bounds,
        vec![1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0],
        UncertaintyModel::new(components)?,
        Arc::new(vehicle_side_impact_outputs),
    )
}

fn vehicle_side_impact_outputs(x: &[f64], xi: &[f64]) -> Vec<f64> {
    let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
    let (x1, x2, x3, x4, x5, x6, x7) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
    let (e8, e9, e10, e11) = (xi[7], xi[8], xi[9], xi[10]);

    let c0 = 1.98 + 4.9 * x1 + 6.67 * x2 + 6.98 * x3 + 4.01 * x4 + 1.78 * x5 + 2.73 * x7;
    let c1 = 1.16 - 0.3717 * x2 * x4 - 0.00931 * x2 * e10 - 0.484 * x3 * e9 + 0.01343 * x6 * e10 - 1.0;
    let c2 = 0.261 - 0.0159 * x1 * x2 - 0.188 * x1 * e8 - 0.019 * x2 * x7
        + 0.0144 * x3 * x5
        + 0.0008757 * x5 * e10
        + 0.08045 * x6 * e9
        + 0.00139 * e8 * e11
        + 1.575e-6 * e10 * e11
        - 0.32;
    let c3 = 0.2147 + 0.00817 * x5 - 0.131 * x1 * e8 - 0.0704 * x1 * e9 + 0.03099 * x2 * x6 - 0.018 * x2 * x7
        + 0.0208 * x3 * e8
        + 0.121 * x3 * e9
        - 0.00364 * x5 * x6
        + 0.0007715 * x5 * e10
        - 0.0005354 * x6 * e10
        + 0.00121 * e8 * e11
        + 0.00184 * e9 * e10
        - 0.02 * x2 * x2
        - 0.32;
    let c4 = 0.74 - 0.61 * x2 - 0.163 * x3 * e8 + 0.001232 * x3 * e10 - 0.166 * x7 * e9 + 0.227 * x2 * x2 - 0.32;
    let c5 = 28.98 + 3.818 * x3 - 4.2 * x1 * x2 + 0.0207 * x5 * e10 + 6.63 * x6 * e9 - 7.77 * x7 * e8 + 0.32 * e9 * e10
        - 32.0;
    let c6 = 33.86 + 2.95 * x3 + 0.1792 * e10 - 5.057 * x1 * x2 - 11.0 * x2 * e8 - 0.0215 * x5 * e10 - 9.98 * x7 * e8
        + 22.0 * e8 * e9
        - 32.0;
    let c7 = 46.36 - 9.9 * x2 - 12.9 * x1 * e8 + 0.1107 * x3 * e10 - 32.0;
    let c8 = 4.72 - 0.54 * x4 - 0.19 * x2 * x3 - 0.0122 * x4 * e10 + 0.009325 * x6 * e10 + 0.000191 * e11 * e11 - 4.0;
    let c9 = 10.58 - 0.674 * x1 * x2 - 1.95 * x2 * e8 + 0.028 * x6 * e10 + 0.02054 * x3 * e10 - 0.0198 * x4 * e10 - 9.9;
    let c10 = 16.45 - 0.489 * x3 * x7 - 0.843 * x5 * x6 + 0.0432 * e9 * e10
        - 0.0556 * e9 * e11
        - 0.000786 * e11 * e11
        - 15.69;
    vec![c0, c1, c2, c3, c4, c5, c6, c7, c8, c9, c10]
}

fn speed_reducer() -> Result<Problem> {
    let bounds = Hyperbox::new(
        vec![2.6, 0.7, 17.0, 7.3, 7.3, 2.9, 5.0],
        vec![3.6, 0.8, 28.0, 8.3, 8.3, 3.9, 5.5],
    )?;
    let uncertainty = UncertaintyModel::new((0..7).map(|i| normal(0.0, 0.005).perturbing(i)).collect())?;
    Problem::new(
        "SRD",
        11,
        bounds,
        vec![3.5, 0.7, 17.0, 7.3, 7.72, 3.35, 5.29],
        uncertainty,
        Arc::new(speed_reducer_outputs),
    )
}

// 0.7854 is the formula coefficient, not pi/4
#[allow(clippy::approx_constant)]
fn speed_reducer_outputs(x: &[f64], xi: &[f64]) -> Vec<f64> {
    let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
    let (x1, x2, x3, x4, x5, x6, x7) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
    let c0 = 0.7854 * x1 * x2 * x2 * (3.3333 * x3 * x3 + 14.9334 * x3 - 43.0934) - 1.508 * x1 * (x6 * x6 + x7 * x7)
        + 7.477 * (x6.powi(3) + x7.powi(3))
        + 0.7854 * (x4 * x6 * x6 + x5 * x7 * x7);
    let shaft = 745.0 * x5 / (x2 * x3);
    vec![
        c0,
        27.0 / (x1 * x2 * x2 * x3) - 1.0,
        397.5 / (x1 * x2 * x2 * x3 * x3) - 1.0,
        1.93 * x4.powi(3) / (x2 * x3 * x6.powi(4)) - 1.0,
        1.93 * x5.powi(3) / (x2 * x3 * x7.powi(4)) - 1.0,
        (shaft * shaft + 16.9e6).sqrt() / (0.1 * x6.powi(3)) - 1100.0,
        (shaft * shaft + 157.5e6).sqrt() / (0.1 * x7.powi(3)) - 850.0,
        x2 * x3 - 40.0,
        5.0 - x1 / x2,
        x1 / x2 - 12.0,
        (1.5 * x6 + 1.9) / x4 - 1.0,
        (1.1 * x7 + 1.9) / x5 - 1.0,
    ]
}
