//! Per-scheme bound report and the fixed-signal objective surface.
//!
//! cargo run --release --example bound_report

use cosparse_weights::experiments::{run_bound_report, ExperimentConfig, OperatorSpec};

fn main() -> cosparse_weights::Result<()> {
    let mut cfg = ExperimentConfig::new(
        18,
        14,
        OperatorSpec::RandomFrame {
            row_norms: (0.5, 1.5),
            seed: None,
        },
    );
    cfg.report.signals = 3;
    cfg.report.sdim_trials = 200;
    cfg.report.grid = 25;

    let report = run_bound_report(&cfg)?;
    print!("{}", report.to_text());

    let (i, j) = report.surface.argmin();
    println!(
        "surface minimum {:.4} at t = {:.3}, lambda = {:.3}; {} local minima on the grid",
        report.surface.values[(i, j)],
        report.surface.t[i],
        report.surface.lambda[j],
        report.surface.local_minima().len()
    );
    Ok(())
}
