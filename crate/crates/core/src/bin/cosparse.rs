//! Command-line front end. Every subcommand reads a TOML experiment config.
//!
//! Exit status: 0 on success, 2 for invalid input, 3 for numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cosparse_weights::experiments::{
    build_operator, build_prior, csv_string, estimate_signals, read_config, run_bound_report,
    run_recovery_sweep_with, scheme_weights, solve_measurements, solve_signal, ExperimentConfig,
};
use cosparse_weights::io::{self, fmt_real};
use cosparse_weights::priors::estimate_prior;
use cosparse_weights::solver::{recovery_error, solve_weighted_l1_analysis, RecoveryProblem};
use cosparse_weights::weights::design_weights;
use cosparse_weights::{Error, Result};

#[derive(Parser)]
#[command(name = "cosparse", version, about = "Weighted l1 analysis recovery with prior-aware weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured analysis operator.
    GenOperator(Common),
    /// Estimate support probabilities and sign means from signals.
    EstimatePrior(Common),
    /// Design near-optimal weights; the cost history goes to `<out>.history`.
    DesignWeights(Common),
    /// Solve one recovery problem.
    Solve(Common),
    /// Bounds, measurement windows and statistical dimension estimates; the
    /// objective surface goes to `<out>.surface.dat`.
    BoundReport(Common),
    /// Monte Carlo recovery sweep to CSV.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `root_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to `output` from the config, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

struct Ctx {
    cfg: ExperimentConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => io::write_text(p, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn emit_beside(&self, suffix: &str, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => io::write_text(&sibling(p, suffix), text),
            None => Ok(()),
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn setup(common: &Common) -> Result<Ctx> {
    let mut cfg = read_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.root_seed = seed;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
        .map_err(|e| Error::Config {
            key: "--threads".into(),
            message: e.to_string(),
        })?;
    let out = common.out.clone().or_else(|| cfg.output.clone());
    Ok(Ctx { cfg, out })
}

fn gen_operator(ctx: &Ctx) -> Result<()> {
    let op = build_operator(&ctx.cfg)?;
    ctx.emit(&io::matrix_to_string(op.matrix()))
}

fn estimate(ctx: &Ctx) -> Result<()> {
    let op = build_operator(&ctx.cfg)?;
    let signals = estimate_signals(&ctx.cfg, &op)?;
    let prior = estimate_prior(&signals, &op, ctx.cfg.estimate.rel_threshold)?;
    ctx.emit(&io::prior_to_string(&prior))
}

fn design(ctx: &Ctx) -> Result<()> {
    let op = build_operator(&ctx.cfg)?;
    let prior = build_prior(&ctx.cfg, &op)?;
    let d = design_weights(&op, &prior, &ctx.cfg.design)?;
    log::info!(
        "design: {} sweeps, cost {} -> {}",
        d.sweeps(),
        d.history[0],
        d.history[d.history.len() - 1]
    );
    ctx.emit(&io::weights_to_string(&d.weights))?;
    ctx.emit_beside(".history", &io::history_to_string(&d.history))
}

fn solve(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let op = build_operator(cfg)?;
    let prior = build_prior(cfg, &op)?;
    let weights = match &cfg.solve.weights {
        Some(p) => io::read_weights(p)?,
        None => scheme_weights(cfg.solve.scheme, &op, &prior, &cfg.design)?,
    };
    let x = if cfg.solve.observations.is_some() && cfg.solve.signal.is_none() {
        None
    } else {
        Some(solve_signal(cfg, &op, &prior)?)
    };
    let (a, y) = solve_measurements(cfg, x.as_ref())?;
    let m = a.nrows();
    let prob = RecoveryProblem::new(&op, &weights, a, y)?;
    let r = solve_weighted_l1_analysis(&prob, &cfg.solver)?;
    let mut extra = vec![
        ("m", m.to_string()),
        ("p", op.p().to_string()),
        ("tol_abs", fmt_real(cfg.solver.tol_abs)),
        ("tol_rel", fmt_real(cfg.solver.tol_rel)),
        ("max_iters", cfg.solver.max_iters.to_string()),
    ];
    if let Some(x) = &x {
        let err = recovery_error(x, &r)?;
        extra.push(("recovery_error", fmt_real(err)));
        extra.push(("relative_error", fmt_real(err / x.norm())));
    }
    ctx.emit(&io::solver_result_to_string(&r, &extra))
}

fn bound_report(ctx: &Ctx) -> Result<()> {
    let report = run_bound_report(&ctx.cfg)?;
    if report.schemes.iter().any(|s| s.bound.boundary_warning) {
        log::warn!("bound minimizer on the search boundary for some scheme");
    }
    ctx.emit(&report.to_text())?;
    ctx.emit_beside(".surface.dat", &report.surface.to_gnuplot())
}

fn sweep(ctx: &Ctx) -> Result<()> {
    let flush = |rows: &[_]| match &ctx.out {
        Some(p) => io::write_text(p, &csv_string(rows)),
        None => Ok(()),
    };
    let rows = run_recovery_sweep_with(&ctx.cfg, flush)?;
    if ctx.out.is_none() {
        print!("{}", csv_string(&rows));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (common, f): (&Common, fn(&Ctx) -> Result<()>) = match &cli.command {
        Command::GenOperator(c) => (c, gen_operator),
        Command::EstimatePrior(c) => (c, estimate),
        Command::DesignWeights(c) => (c, design),
        Command::Solve(c) => (c, solve),
        Command::BoundReport(c) => (c, bound_report),
        Command::Sweep(c) => (c, sweep),
    };
    let ctx = setup(common)?;
    f(&ctx)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
