//! Fixed-signal bound, Monte Carlo statistical dimension and the predicted
//! measurement window for one signal.
//!
//! cargo run --release --example bounds

use cosparse_weights::bounds::empirical_sdim;
use cosparse_weights::bounds::{lemma1_bound, predicted_measurements};
use cosparse_weights::math::Rng;
use cosparse_weights::operators::difference_operator;
use cosparse_weights::priors::{sample_signal, SupportSet};
use cosparse_weights::weights::constant_weights;

fn main() -> cosparse_weights::Result<()> {
    let n = 40;
    let op = difference_operator(n)?;
    let w = constant_weights(op.p())?;
    let mut rng = Rng::new(5);

    // three jumps
    let support = SupportSet::new(vec![8, 20, 31], op.p())?;
    let x = sample_signal(&op, &support, &mut rng)?;

    let bound = lemma1_bound(&op, &w, &x)?;
    println!(
        "fixed-signal bound {:.3} at t = {:.4}, lambda = {:.4}",
        bound.value,
        bound.t_star,
        bound.lambda_star.unwrap_or(f64::NAN)
    );

    let est = empirical_sdim(&op, &w, &x, 2000, &mut rng)?;
    println!("statistical dimension {:.3} +- {:.3}", est.estimate, est.stderr);

    for eta in [0.1, 0.01] {
        let (lo, hi) = predicted_measurements(est.estimate, n, eta)?;
        println!("eta = {eta}: transition in [{lo:.1}, {hi:.1}]");
    }
    Ok(())
}
