//! A two-variable problem with one noisy constraint, solved and then
//! checked by Monte Carlo.

use ramsa::blackbox::{Distribution, UncertainComponent};
use ramsa::validation::mc_feasibility;
use ramsa::{Hyperbox, Problem, SolverConfig, UncertaintyModel};

fn main() -> ramsa::Result<()> {
    // minimize 100 (x1 + x2) subject to 4 - x1 x2 - xi <= 0, xi ~ N(0, 0.3).
    // Outputs are compared after arctan(cbrt(c)), so the objective scale
    // sets how hard it pulls against the constraint.
    let noise = UncertaintyModel::new(vec![UncertainComponent::new(Distribution::Normal {
        mean: 0.0,
        std: 0.3,
    })])?;
    let problem = Problem::from_fn(
        "demo",
        1,
        Hyperbox::uniform(2, 0.5, 5.0)?,
        vec![4.0, 4.0],
        noise,
        |x, xi| vec![100.0 * (x[0] + x[1]), 4.0 - x[0] * x[1] - xi[0]],
    )?;
    let cfg = SolverConfig {
        budget: 5000,
        seed: 1,
        ..SolverConfig::default()
    };
    let r = ramsa::run(&problem, &cfg)?;
    println!("x = {:?} after {} evaluations", r.x, r.evaluations);

    let report = mc_feasibility(&problem, &r.x_unit, 100_000, 2)?;
    println!(
        "mean objective {:.4}, P(constraint <= 0) = {:.4}",
        report.mean_objective, report.constraint_probs[0]
    );
    Ok(())
}
