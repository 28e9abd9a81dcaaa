//! Recover a cosparse signal from Gaussian measurements and check the
//! result against the LP formulation.
//!
//! cargo run --release --example solve

use cosparse_weights::math::Rng;
use cosparse_weights::operators::gen_random_frame;
use cosparse_weights::priors::{sample_prior_signal, Prior};
use cosparse_weights::solver::{
    gaussian_measurements, lp_oracle, recovery_error, solve_weighted_l1_analysis, RecoveryProblem,
    SolverOptions,
};
use cosparse_weights::weights::{design_weights, DesignOptions};

fn main() -> cosparse_weights::Result<()> {
    let (p, n, m) = (14, 10, 8);
    let mut rng = Rng::new(21);
    let op = gen_random_frame(p, n, 0.5, 1.5, &mut rng)?;
    let prior = Prior::ramp(p, 0.8, 0.05)?;
    let w = design_weights(&op, &prior, &DesignOptions::default())?.weights;

    let (support, x) = sample_prior_signal(&prior, &op, &mut rng)?;
    let a = gaussian_measurements(n, m, &mut rng)?;
    let y = &a * &x;
    let prob = RecoveryProblem::new(&op, &w, a, y)?;

    let r = solve_weighted_l1_analysis(&prob, &SolverOptions::default())?;
    println!("support size {} of {p}, m = {m}", support.len());
    println!(
        "status {} after {} iterations, objective {:.10}, |Az - y| = {:.2e}",
        r.status.as_str(),
        r.iterations,
        r.objective,
        r.eq_residual
    );
    println!("recovery error {:.3e}", recovery_error(&x, &r)?);

    let (lp_value, _) = lp_oracle(&prob)?;
    println!("LP optimum {lp_value:.10}, gap {:.2e}", r.objective - lp_value);
    Ok(())
}
