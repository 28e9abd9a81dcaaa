//! Empirical success rate against m for a sparse vector under the identity
//! operator, next to the statistical dimension of its descent cone.
//!
//! cargo run --release --example phase_transition

use cosparse_weights::bounds::empirical_sdim;
use cosparse_weights::math::Rng;
use cosparse_weights::operators::identity_operator;
use cosparse_weights::priors::{sample_signal, SupportSet};
use cosparse_weights::solver::{
    gaussian_measurements, recovery_error, solve_weighted_l1_analysis, RecoveryProblem,
    SolverOptions,
};
use cosparse_weights::weights::constant_weights;

fn main() -> cosparse_weights::Result<()> {
    let (n, s, trials) = (24, 4, 20);
    let op = identity_operator(n)?;
    let w = constant_weights(n)?;
    let mut rng = Rng::new(13);
    let x = sample_signal(&op, &SupportSet::new((0..s).collect(), n)?, &mut rng)?;

    let sd = empirical_sdim(&op, &w, &x, 1000, &mut rng)?;
    println!("statistical dimension {:.2} +- {:.2}", sd.estimate, sd.stderr);

    let opts = SolverOptions::default();
    for m in (2..=n).step_by(2) {
        let mut ok = 0;
        for _ in 0..trials {
            let a = gaussian_measurements(n, m, &mut rng)?;
            let y = &a * &x;
            let r = solve_weighted_l1_analysis(&RecoveryProblem::new(&op, &w, a, y)?, &opts)?;
            if recovery_error(&x, &r)? < 1e-4 {
                ok += 1;
            }
        }
        let rate = ok as f64 / trials as f64;
        println!("m = {m:>2}  success {rate:.2}  {}", "#".repeat(ok));
    }
    Ok(())
}
