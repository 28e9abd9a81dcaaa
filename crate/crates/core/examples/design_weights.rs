//! Coordinate-descent weight design, compared with constant and heuristic
//! weights on the prior-averaged bound.
//!
//! cargo run --example design_weights

use cosparse_weights::bounds::expected_bound;
use cosparse_weights::math::Rng;
use cosparse_weights::operators::gen_random_frame;
use cosparse_weights::priors::Prior;
use cosparse_weights::weights::{constant_weights, design_weights, heuristic_weights, DesignOptions};

fn main() -> cosparse_weights::Result<()> {
    let (p, n) = (20, 16);
    let mut rng = Rng::new(11);
    let op = gen_random_frame(p, n, 0.5, 1.5, &mut rng)?;
    let prior = Prior::ramp(p, 0.9, 0.05)?;

    let design = design_weights(&op, &prior, &DesignOptions::default())?;
    println!("sweeps: {}", design.sweeps());
    for (k, c) in design.history.iter().enumerate() {
        println!("  sweep {k:>2}: cost {c:.6}");
    }

    let schemes = [
        ("constant", constant_weights(p)?),
        ("heuristic", heuristic_weights(&prior)?),
        ("near optimal", design.weights.clone()),
    ];
    for (name, w) in &schemes {
        let b = expected_bound(&op, &prior, w)?;
        println!("{name:>12}: bound {:.4} (t* = {:.4})", b.value, b.t_star);
    }

    println!("weights: {:.3?}", design.weights.values().as_slice());
    Ok(())
}
