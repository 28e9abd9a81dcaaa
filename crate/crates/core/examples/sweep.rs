//! Small Monte Carlo recovery sweep over three weight schemes, printed as
//! CSV.
//!
//! cargo run --release --example sweep

use cosparse_weights::experiments::{csv_string, run_recovery_sweep, ExperimentConfig, OperatorSpec};

fn main() -> cosparse_weights::Result<()> {
    let mut cfg = ExperimentConfig::new(
        20,
        16,
        OperatorSpec::RandomFrame {
            row_norms: (0.5, 1.5),
            seed: None,
        },
    );
    cfg.m_grid = vec![6, 9, 12, 15];
    cfg.trials = 10;
    cfg.root_seed = 2;

    let rows = run_recovery_sweep(&cfg)?;
    print!("{}", csv_string(&rows));
    Ok(())
}
