//! Draw signals from a known prior and recover it from the samples.
//!
//! cargo run --example estimate_prior

use cosparse_weights::math::Rng;
use cosparse_weights::operators::difference_operator;
use cosparse_weights::priors::{estimate_prior, sample_prior_signal, Prior, DEFAULT_REL_THRESHOLD};

fn main() -> cosparse_weights::Result<()> {
    let n = 16;
    let mut rng = Rng::new(3);
    let op = difference_operator(n)?;
    let p = op.p();
    let truth = Prior::ramp(p, 0.6, 0.05)?;

    let signals = (0..4000)
        .map(|_| sample_prior_signal(&truth, &op, &mut rng).map(|(_, x)| x))
        .collect::<cosparse_weights::Result<Vec<_>>>()?;
    let est = estimate_prior(&signals, &op, DEFAULT_REL_THRESHOLD)?;

    println!(" row   beta  estimate   sigma");
    for k in 0..p {
        println!(
            "{k:>4} {:>6.3} {:>9.3} {:>7.3}",
            truth.beta()[k],
            est.beta()[k],
            est.sigma()[k]
        );
    }
    Ok(())
}
