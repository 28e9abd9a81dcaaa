//! Seeded Monte Carlo harness: configuration, recovery sweeps over `m` and
//! weight schemes, and bound reports.
//!
//! Every random draw is taken from a stream split off `root_seed`, keyed by
//! what it is for (operator, trial `(m, k)`, report signal ...), so results
//! do not depend on the number of worker threads.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rand::RngCore;

use crate::bounds::{
    empirical_sdim, expected_bound, lemma1_bound, lemma1_objective, predicted_measurements,
    BoundResult,
};
use crate::error::{Error, Result};
use crate::io::{self, fmt_real};
use crate::math::Rng;
use crate::operators::{
    difference_operator, gen_random_frame, identity_operator, AnalysisOperator,
    DEFAULT_ROW_NORM_RANGE,
};
use crate::priors::{sample_prior_signal, Prior};
use crate::solver::{
    gaussian_measurements, recovery_error, solve_weighted_l1_analysis, RecoveryProblem,
    SolverOptions,
};
use crate::weights::{constant_weights, design_weights, heuristic_weights, DesignOptions, WeightVector};

/// Relative error below which a trial counts as exact recovery.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_TRIALS: usize = 100;

const STREAM_OPERATOR: u64 = u64::MAX;
const STREAM_REPORT: u64 = u64::MAX - 1;
const STREAM_SOLVE: u64 = u64::MAX - 2;
const STREAM_ESTIMATE: u64 = u64::MAX - 3;

/// Stream of trial `k` at measurement count `m`.
pub fn trial_stream(m: usize, k: usize) -> u64 {
    ((m as u64) << 32) | k as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Constant,
    Heuristic,
    NearOptimal,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Constant, Scheme::Heuristic, Scheme::NearOptimal];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Constant => "constant",
            Scheme::Heuristic => "heuristic",
            Scheme::NearOptimal => "near_optimal",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Scheme::ALL.into_iter().find(|k| k.label() == s)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec {
    /// Orthonormal basis of a Gaussian matrix's column span with row norms
    /// drawn uniformly from `row_norms`. `seed` defaults to a stream of the
    /// root seed.
    RandomFrame {
        row_norms: (f64, f64),
        seed: Option<u64>,
    },
    Identity,
    Difference,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PriorSpec {
    Explicit { beta: Vec<f64>, sigma: Vec<f64> },
    Uniform { beta: f64 },
    /// `beta` linear from `first` (row 0) to `last` (row p-1), `sigma = 0`.
    Ramp { first: f64, last: f64 },
    File(PathBuf),
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Ramp {
            first: 0.9,
            last: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSpec {
    /// Signals drawn from the prior for the empirical estimates.
    pub signals: usize,
    /// Gaussian draws per signal.
    pub sdim_trials: usize,
    pub grid: usize,
    pub t_range: (f64, f64),
    pub lambda_range: (f64, f64),
    pub etas: Vec<f64>,
}

impl Default for ReportSpec {
    fn default() -> Self {
        ReportSpec {
            signals: 5,
            sdim_trials: 500,
            grid: 50,
            t_range: (0.1, 5.0),
            lambda_range: (0.1, 5.0),
            etas: vec![0.1, 0.05],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveSpec {
    pub m: Option<usize>,
    pub scheme: Scheme,
    pub weights: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub signal: Option<PathBuf>,
}

impl Default for SolveSpec {
    fn default() -> Self {
        SolveSpec {
            m: None,
            scheme: Scheme::NearOptimal,
            weights: None,
            measurements: None,
            observations: None,
            signal: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSpec {
    /// Example signals; when absent `samples` signals are drawn from the
    /// configured prior.
    pub signals: Option<PathBuf>,
    pub samples: usize,
    pub rel_threshold: f64,
}

impl Default for EstimateSpec {
    fn default() -> Self {
        EstimateSpec {
            signals: None,
            samples: 1000,
            rel_threshold: crate::priors::DEFAULT_REL_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    pub operator: OperatorSpec,
    pub prior: PriorSpec,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub weight_schemes: Vec<Scheme>,
    pub solver: SolverOptions,
    pub design: DesignOptions,
    pub root_seed: u64,
    pub output: Option<PathBuf>,
    pub success_threshold: f64,
    pub report: ReportSpec,
    pub solve: SolveSpec,
    pub estimate: EstimateSpec,
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(p: usize, n: usize, operator: OperatorSpec) -> Self {
        ExperimentConfig {
            p,
            n,
            operator,
            prior: PriorSpec::default(),
            m_grid: default_m_grid(n),
            trials: DEFAULT_TRIALS,
            weight_schemes: Scheme::ALL.to_vec(),
            solver: SolverOptions::default(),
            design: DesignOptions::default(),
            root_seed: 0,
            output: None,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            report: ReportSpec::default(),
            solve: SolveSpec::default(),
            estimate: EstimateSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if self.p == 0 {
            return Err(Error::config("p", "must be at least 1"));
        }
        match &self.operator {
            OperatorSpec::Identity if self.p != self.n => {
                return Err(Error::config(
                    "operator.kind",
                    format!("identity needs p = n, got p = {}, n = {}", self.p, self.n),
                ))
            }
            OperatorSpec::Difference if self.n < 2 || self.p != self.n - 1 => {
                return Err(Error::config(
                    "operator.kind",
                    format!("difference needs n >= 2 and p = n - 1, got p = {}, n = {}", self.p, self.n),
                ))
            }
            OperatorSpec::RandomFrame { row_norms: (lo, hi), .. } => {
                if self.p < self.n {
                    return Err(Error::config(
                        "operator.kind",
                        format!("random_frame needs p >= n, got p = {}, n = {}", self.p, self.n),
                    ));
                }
                if !(*lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(Error::config(
                        "operator.row_norm_range",
                        format!("need 0 < low <= high, got [{lo}, {hi}]"),
                    ));
                }
            }
            _ => {}
        }
        match &self.prior {
            PriorSpec::Explicit { beta, sigma } => {
                if beta.len() != self.p {
                    return Err(Error::config(
                        "prior.beta",
                        format!("length {} but p = {}", beta.len(), self.p),
                    ));
                }
                if sigma.len() != self.p {
                    return Err(Error::config(
                        "prior.sigma",
                        format!("length {} but p = {}", sigma.len(), self.p),
                    ));
                }
                Prior::new(DVector::from_vec(beta.clone()), DVector::from_vec(sigma.clone()))
                    .map_err(|e| Error::config("prior", e.to_string()))?;
            }
            PriorSpec::Uniform { beta } if !(0.0..=1.0).contains(beta) => {
                return Err(Error::config("prior.beta", format!("{beta} outside [0, 1]")));
            }
            PriorSpec::Ramp { first, last } => {
                for (key, v) in [("prior.first", first), ("prior.last", last)] {
                    if !(0.0..=1.0).contains(v) {
                        return Err(Error::config(key, format!("{v} outside [0, 1]")));
                    }
                }
            }
            _ => {}
        }
        if self.m_grid.is_empty() {
            return Err(Error::config("m_grid", "must not be empty"));
        }
        for (i, &m) in self.m_grid.iter().enumerate() {
            if m < 1 || m > self.n {
                return Err(Error::config(
                    format!("m_grid[{i}]"),
                    format!("{m} outside [1, n = {}]", self.n),
                ));
            }
            if self.m_grid[..i].contains(&m) {
                return Err(Error::config(format!("m_grid[{i}]"), format!("duplicate entry {m}")));
            }
        }
        if self.trials < 1 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.weight_schemes.is_empty() {
            return Err(Error::config("weight_schemes", "must not be empty"));
        }
        for (i, s) in self.weight_schemes.iter().enumerate() {
            if self.weight_schemes[..i].contains(s) {
                return Err(Error::config(
                    format!("weight_schemes[{i}]"),
                    format!("duplicate scheme {s}"),
                ));
            }
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::config("success_threshold", "must be positive"));
        }
        if !(self.solver.tol_abs > 0.0) {
            return Err(Error::config("solver.tol_abs", "must be positive"));
        }
        if !(self.solver.tol_rel >= 0.0) {
            return Err(Error::config("solver.tol_rel", "must be non-negative"));
        }
        if self.solver.max_iters < 1 {
            return Err(Error::config("solver.max_iters", "must be at least 1"));
        }
        self.design
            .validate()
            .map_err(|e| Error::config("design", e.to_string()))?;
        let r = &self.report;
        if r.signals < 1 {
            return Err(Error::config("report.signals", "must be at least 1"));
        }
        if r.sdim_trials < 1 {
            return Err(Error::config("report.sdim_trials", "must be at least 1"));
        }
        if r.grid < 2 {
            return Err(Error::config("report.grid", "must be at least 2"));
        }
        for (key, (lo, hi)) in [("report.t_range", r.t_range), ("report.lambda_range", r.lambda_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::config(key, format!("need 0 < low < high, got [{lo}, {hi}]")));
            }
        }
        for (i, eta) in r.etas.iter().enumerate() {
            if !(*eta > 0.0 && *eta < 1.0) {
                return Err(Error::config(format!("report.etas[{i}]"), format!("{eta} outside (0, 1)")));
            }
        }
        if let Some(m) = self.solve.m {
            if m < 1 || m > self.n {
                return Err(Error::config("solve.m", format!("{m} outside [1, n = {}]", self.n)));
            }
        }
        if self.estimate.samples < 1 {
            return Err(Error::config("estimate.samples", "must be at least 1"));
        }
        if !(self.estimate.rel_threshold > 0.0) {
            return Err(Error::config("estimate.rel_threshold", "must be positive"));
        }
        Ok(())
    }

    pub fn operator_seed(&self) -> u64 {
        match self.operator {
            OperatorSpec::RandomFrame { seed: Some(s), .. } => s,
            _ => Rng::split(self.root_seed, STREAM_OPERATOR).next_u64(),
        }
    }
}

/// Every integer in `[5, n]` (all of `[1, n]` when `n < 5`).
pub fn default_m_grid(n: usize) -> Vec<usize> {
    (5.min(n).max(1)..=n).collect()
}

/// Table view that rejects keys outside `allowed` and reports full key
/// paths.
struct Section<'a> {
    table: &'a toml::Table,
    path: String,
}

impl<'a> Section<'a> {
    fn new(table: &'a toml::Table, path: &str, allowed: &[&str]) -> Result<Self> {
        let s = Section {
            table,
            path: path.to_string(),
        };
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::config(s.key(key), "unknown key"));
            }
        }
        Ok(s)
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn type_err(&self, k: &str, want: &str, got: &toml::Value) -> Error {
        Error::config(self.key(k), format!("expected {want}, got {}", got.type_str()))
    }

    fn value(&self, k: &str) -> Option<&'a toml::Value> {
        self.table.get(k)
    }

    fn count(&self, k: &str) -> Result<Option<usize>> {
        self.value(k).map(|v| count_value(v, || self.key(k))).transpose()
    }

    fn req_count(&self, k: &str) -> Result<usize> {
        self.count(k)?
            .ok_or_else(|| Error::config(self.key(k), "required key missing"))
    }

    fn seed(&self, k: &str) -> Result<Option<u64>> {
        match self.value(k) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as u64)),
            Some(toml::Value::String(s)) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::config(self.key(k), format!("bad unsigned integer `{s}`"))),
            Some(v) => Err(self.type_err(k, "integer", v)),
        }
    }

    fn real(&self, k: &str) -> Result<Option<f64>> {
        self.value(k)
            .map(|v| real_value(v).ok_or_else(|| self.type_err(k, "number", v)))
            .transpose()
    }

    fn req_real(&self, k: &str) -> Result<f64> {
        self.real(k)?
            .ok_or_else(|| Error::config(self.key(k), "required key missing"))
    }

    fn boolean(&self, k: &str) -> Result<Option<bool>> {
        match self.value(k) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(self.type_err(k, "boolean", v)),
        }
    }

    fn string(&self, k: &str) -> Result<Option<&'a str>> {
        match self.value(k) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.as_str())),
            Some(v) => Err(self.type_err(k, "string", v)),
        }
    }

    fn path(&self, k: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(k)?.map(PathBuf::from))
    }

    fn array(&self, k: &str) -> Result<Option<&'a Vec<toml::Value>>> {
        match self.value(k) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => Ok(Some(a)),
            Some(v) => Err(self.type_err(k, "array", v)),
        }
    }

    fn reals(&self, k: &str) -> Result<Option<Vec<f64>>> {
        let Some(items) = self.array(k)? else {
            return Ok(None);
        };
        items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                real_value(v).ok_or_else(|| {
                    Error::config(format!("{}[{i}]", self.key(k)), format!("expected number, got {}", v.type_str()))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn pair(&self, k: &str) -> Result<Option<(f64, f64)>> {
        match self.reals(k)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(v) => Err(Error::config(self.key(k), format!("expected [low, high], got {} entries", v.len()))),
        }
    }

    fn sub(&self, k: &str, allowed: &[&str]) -> Result<Option<Section<'a>>> {
        match self.value(k) {
            None => Ok(None),
            Some(toml::Value::Table(t)) => Section::new(t, &self.key(k), allowed).map(Some),
            Some(v) => Err(self.type_err(k, "table", v)),
        }
    }
}

fn count_value(v: &toml::Value, key: impl Fn() -> String) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        toml::Value::Integer(i) => Err(Error::config(key(), format!("{i} is negative"))),
        other => Err(Error::config(key(), format!("expected integer, got {}", other.type_str()))),
    }
}

fn real_value(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

const TOP_KEYS: &[&str] = &[
    "p",
    "n",
    "operator",
    "prior",
    "m_grid",
    "trials",
    "weight_schemes",
    "solver",
    "design",
    "root_seed",
    "output",
    "success_threshold",
    "report",
    "solve",
    "estimate",
];

/// Parses and validates a TOML experiment config. Unknown keys, duplicate
/// keys and out-of-range values are errors naming the key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        origin: "config".into(),
        message: e.to_string(),
    })?;
    let top = Section::new(&table, "", TOP_KEYS)?;
    let p = top.req_count("p")?;
    let n = top.req_count("n")?;

    let op_section = top
        .sub("operator", &["kind", "row_norm_range", "seed", "path"])?
        .ok_or_else(|| Error::config("operator", "required table missing"))?;
    let kind = op_section
        .string("kind")?
        .ok_or_else(|| Error::config("operator.kind", "required key missing"))?;
    let operator = match kind {
        "random_frame" => OperatorSpec::RandomFrame {
            row_norms: op_section.pair("row_norm_range")?.unwrap_or(DEFAULT_ROW_NORM_RANGE),
            seed: op_section.seed("seed")?,
        },
        "identity" => OperatorSpec::Identity,
        "difference" => OperatorSpec::Difference,
        "file" => OperatorSpec::File(
            op_section
                .path("path")?
                .ok_or_else(|| Error::config("operator.path", "required for kind = \"file\""))?,
        ),
        other => {
            return Err(Error::config(
                "operator.kind",
                format!("unknown kind `{other}` (random_frame, identity, difference, file)"),
            ))
        }
    };
    let mut cfg = ExperimentConfig::new(p, n, operator);

    if let Some(s) = top.sub("prior", &["kind", "beta", "sigma", "first", "last", "path"])? {
        let kind = s
            .string("kind")?
            .ok_or_else(|| Error::config("prior.kind", "required key missing"))?;
        cfg.prior = match kind {
            "explicit" => PriorSpec::Explicit {
                beta: s.reals("beta")?.ok_or_else(|| Error::config("prior.beta", "required key missing"))?,
                sigma: s.reals("sigma")?.unwrap_or_else(|| vec![0.0; p]),
            },
            "uniform" => PriorSpec::Uniform {
                beta: s.req_real("beta")?,
            },
            "ramp" => PriorSpec::Ramp {
                first: s.req_real("first")?,
                last: s.req_real("last")?,
            },
            "file" => PriorSpec::File(
                s.path("path")?
                    .ok_or_else(|| Error::config("prior.path", "required for kind = \"file\""))?,
            ),
            other => {
                return Err(Error::config(
                    "prior.kind",
                    format!("unknown kind `{other}` (explicit, uniform, ramp, file)"),
                ))
            }
        };
    }

    if let Some(items) = top.array("m_grid")? {
        cfg.m_grid = items
            .iter()
            .enumerate()
            .map(|(i, v)| count_value(v, || format!("m_grid[{i}]")))
            .collect::<Result<_>>()?;
    }
    if let Some(t) = top.count("trials")? {
        cfg.trials = t;
    }
    if let Some(items) = top.array("weight_schemes")? {
        cfg.weight_schemes = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let key = format!("weight_schemes[{i}]");
                let label = v
                    .as_str()
                    .ok_or_else(|| Error::config(&key, format!("expected string, got {}", v.type_str())))?;
                Scheme::from_label(label).ok_or_else(|| {
                    Error::config(&key, format!("unknown scheme `{label}` (constant, heuristic, near_optimal)"))
                })
            })
            .collect::<Result<_>>()?;
    }
    if let Some(s) = top.seed("root_seed")? {
        cfg.root_seed = s;
    }
    cfg.output = top.path("output")?;
    if let Some(x) = top.real("success_threshold")? {
        cfg.success_threshold = x;
    }

    if let Some(s) = top.sub("solver", &["tol_abs", "tol_rel", "max_iters", "polish"])? {
        if let Some(x) = s.real("tol_abs")? {
            cfg.solver.tol_abs = x;
        }
        if let Some(x) = s.real("tol_rel")? {
            cfg.solver.tol_rel = x;
        }
        if let Some(x) = s.count("max_iters")? {
            cfg.solver.max_iters = x;
        }
        if let Some(x) = s.boolean("polish")? {
            cfg.solver.polish = x;
        }
    }
    if let Some(s) = top.sub("design", &["maxiter", "tol", "scalar_range", "scalar_tol"])? {
        if let Some(x) = s.count("maxiter")? {
            cfg.design.maxiter = x;
        }
        if let Some(x) = s.real("tol")? {
            cfg.design.tol = x;
        }
        if let Some((lo, hi)) = s.pair("scalar_range")? {
            cfg.design.scalar_lo = lo;
            cfg.design.scalar_hi = hi;
        }
        if let Some(x) = s.real("scalar_tol")? {
            cfg.design.scalar_tol = x;
        }
    }
    if let Some(s) = top.sub(
        "report",
        &["signals", "sdim_trials", "grid", "t_range", "lambda_range", "etas"],
    )? {
        let r = &mut cfg.report;
        if let Some(x) = s.count("signals")? {
            r.signals = x;
        }
        if let Some(x) = s.count("sdim_trials")? {
            r.sdim_trials = x;
        }
        if let Some(x) = s.count("grid")? {
            r.grid = x;
        }
        if let Some(x) = s.pair("t_range")? {
            r.t_range = x;
        }
        if let Some(x) = s.pair("lambda_range")? {
            r.lambda_range = x;
        }
        if let Some(x) = s.reals("etas")? {
            r.etas = x;
        }
    }
    if let Some(s) = top.sub(
        "solve",
        &["m", "scheme", "weights", "measurements", "observations", "signal"],
    )? {
        cfg.solve.m = s.count("m")?;
        if let Some(label) = s.string("scheme")? {
            cfg.solve.scheme = Scheme::from_label(label)
                .ok_or_else(|| Error::config("solve.scheme", format!("unknown scheme `{label}`")))?;
        }
        cfg.solve.weights = s.path("weights")?;
        cfg.solve.measurements = s.path("measurements")?;
        cfg.solve.observations = s.path("observations")?;
        cfg.solve.signal = s.path("signal")?;
    }
    if let Some(s) = top.sub("estimate", &["signals", "samples", "rel_threshold"])? {
        cfg.estimate.signals = s.path("signals")?;
        if let Some(x) = s.count("samples")? {
            cfg.estimate.samples = x;
        }
        if let Some(x) = s.real("rel_threshold")? {
            cfg.estimate.rel_threshold = x;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&io::read_text(path)?)
}

pub fn build_operator(cfg: &ExperimentConfig) -> Result<AnalysisOperator> {
    let op = match &cfg.operator {
        OperatorSpec::RandomFrame { row_norms, .. } => gen_random_frame(
            cfg.p,
            cfg.n,
            row_norms.0,
            row_norms.1,
            &mut Rng::new(cfg.operator_seed()),
        )?,
        OperatorSpec::Identity => identity_operator(cfg.n)?,
        OperatorSpec::Difference => difference_operator(cfg.n)?,
        OperatorSpec::File(path) => io::read_operator(path)?,
    };
    if op.p() != cfg.p || op.n() != cfg.n {
        return Err(Error::config(
            "operator",
            format!("operator is {}x{}, config says p = {}, n = {}", op.p(), op.n(), cfg.p, cfg.n),
        ));
    }
    Ok(op)
}

pub fn build_prior(cfg: &ExperimentConfig, op: &AnalysisOperator) -> Result<Prior> {
    let prior = match &cfg.prior {
        PriorSpec::Explicit { beta, sigma } => Prior::new(
            DVector::from_vec(beta.clone()),
            DVector::from_vec(sigma.clone()),
        )?,
        PriorSpec::Uniform { beta } => Prior::uniform(cfg.p, *beta)?,
        PriorSpec::Ramp { first, last } => Prior::ramp(cfg.p, *first, *last)?,
        PriorSpec::File(path) => io::read_prior(path)?,
    };
    prior.check_operator(op)?;
    Ok(prior)
}

/// Weights of `scheme`; near-optimal weights come from [`design_weights`].
pub fn scheme_weights(
    scheme: Scheme,
    op: &AnalysisOperator,
    prior: &Prior,
    design: &DesignOptions,
) -> Result<WeightVector> {
    match scheme {
        Scheme::Constant => constant_weights(op.p()),
        Scheme::Heuristic => heuristic_weights(prior),
        Scheme::NearOptimal => Ok(design_weights(op, prior, design)?.weights),
    }
}

/// Aggregate over the trials at one `(m, scheme)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub scheme: Scheme,
    pub mean_error: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub stderr: f64,
    pub success_rate: f64,
    pub trials: usize,
}

fn aggregate(m: usize, scheme: Scheme, errors: &[f64], successes: usize) -> SweepRow {
    let k = errors.len();
    let mean = errors.iter().sum::<f64>() / k as f64;
    let stderr = if k > 1 {
        let ss: f64 = errors.iter().map(|e| (e - mean).powi(2)).sum();
        (ss / (k - 1) as f64).sqrt() / (k as f64).sqrt()
    } else {
        0.0
    };
    SweepRow {
        m,
        scheme,
        mean_error: mean,
        stderr,
        success_rate: successes as f64 / k as f64,
        trials: k,
    }
}

/// Per-scheme outcome of one trial.
struct TrialOutcome {
    errors: Vec<f64>,
    success: Vec<bool>,
}

fn run_trial(
    cfg: &ExperimentConfig,
    op: &AnalysisOperator,
    prior: &Prior,
    schemes: &[(Scheme, WeightVector)],
    m: usize,
    k: usize,
) -> Result<TrialOutcome> {
    let ctx = |scheme: &str, e: Error| Error::Sweep {
        m,
        trial: k,
        scheme: scheme.to_string(),
        source: Box::new(e),
    };
    let mut rng = Rng::split(cfg.root_seed, trial_stream(m, k));
    let (_, x) = sample_prior_signal(prior, op, &mut rng).map_err(|e| ctx("-", e))?;
    let a = gaussian_measurements(cfg.n, m, &mut rng).map_err(|e| ctx("-", e))?;
    let y = &a * &x;
    let xnorm = x.norm();
    let mut out = TrialOutcome {
        errors: Vec::with_capacity(schemes.len()),
        success: Vec::with_capacity(schemes.len()),
    };
    for (scheme, w) in schemes {
        let prob = RecoveryProblem::new(op, w, a.clone(), y.clone()).map_err(|e| ctx(scheme.label(), e))?;
        let r = solve_weighted_l1_analysis(&prob, &cfg.solver).map_err(|e| ctx(scheme.label(), e))?;
        let err = recovery_error(&x, &r).map_err(|e| ctx(scheme.label(), e))?;
        out.errors.push(err);
        out.success.push(err <= cfg.success_threshold * xnorm);
    }
    Ok(out)
}

/// Recovery sweep. `on_rows` sees the rows finished so far after every grid
/// point, so callers can flush partial results before an error aborts the
/// sweep.
pub fn run_recovery_sweep_with(
    cfg: &ExperimentConfig,
    mut on_rows: impl FnMut(&[SweepRow]) -> Result<()>,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let op = build_operator(cfg)?;
    let prior = build_prior(cfg, &op)?;
    let mut labels = cfg.weight_schemes.clone();
    labels.sort_by_key(|s| s.label());
    let schemes: Vec<(Scheme, WeightVector)> = labels
        .iter()
        .map(|&s| scheme_weights(s, &op, &prior, &cfg.design).map(|w| (s, w)))
        .collect::<Result<_>>()?;
    let mut grid = cfg.m_grid.clone();
    grid.sort_unstable();

    let mut rows = Vec::new();
    for m in grid {
        let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| run_trial(cfg, &op, &prior, &schemes, m, k))
            .collect();
        let outcomes: Vec<TrialOutcome> = match outcomes.into_iter().collect() {
            Ok(v) => v,
            Err(e) => {
                on_rows(&rows)?;
                return Err(e);
            }
        };
        for (j, (scheme, _)) in schemes.iter().enumerate() {
            let errors: Vec<f64> = outcomes.iter().map(|o| o.errors[j]).collect();
            let successes = outcomes.iter().filter(|o| o.success[j]).count();
            rows.push(aggregate(m, *scheme, &errors, successes));
        }
        info!("sweep: m = {m} done");
        on_rows(&rows)?;
    }
    Ok(rows)
}

pub fn run_recovery_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    run_recovery_sweep_with(cfg, |_| Ok(()))
}

pub const CSV_HEADER: &str = "m,scheme,mean_error,stderr,success_rate,trials";

/// CSV text: header, then rows sorted by `m` then scheme label.
pub fn csv_string(rows: &[SweepRow]) -> String {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.m.cmp(&b.m).then(a.scheme.label().cmp(b.scheme.label())));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.m,
            r.scheme.label(),
            fmt_real(r.mean_error),
            fmt_real(r.stderr),
            fmt_real(r.success_rate),
            r.trials
        );
    }
    out
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    io::write_text(path, &csv_string(rows))
}

pub fn parse_csv(text: &str, origin: &str) -> Result<Vec<SweepRow>> {
    let err = |line: usize, msg: String| Error::Parse {
        origin: origin.to_string(),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(err(lineno, format!("{} fields, expected 6", f.len())));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|_| err(lineno, format!("bad number `{s}`")));
        let count = |s: &str| s.parse::<usize>().map_err(|_| err(lineno, format!("bad count `{s}`")));
        rows.push(SweepRow {
            m: count(f[0])?,
            scheme: Scheme::from_label(f[1]).ok_or_else(|| err(lineno, format!("unknown scheme `{}`", f[1])))?,
            mean_error: real(f[2])?,
            stderr: real(f[3])?,
            success_rate: real(f[4])?,
            trials: count(f[5])?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    parse_csv(&io::read_text(path)?, &path.display().to_string())
}

/// Bound figures for one weight scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub weights: WeightVector,
    /// Prior-averaged bound.
    pub bound: BoundResult,
    /// `(eta, m_low, m_high)` measurement windows around the bound.
    pub windows: Vec<(f64, f64, f64)>,
    /// Mean fixed-signal bound over the sampled signals.
    pub fixed_bound_mean: f64,
    /// Mean Monte Carlo statistical dimension over the sampled signals.
    pub sdim_mean: f64,
    pub sdim_stderr: f64,
}

/// Objective of the fixed-signal bound on a `(t, lambda)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    pub scheme: Scheme,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `values[(i, j)]` is the objective at `(t[i], lambda[j])`.
    pub values: DMatrix<f64>,
}

impl Surface {
    /// Grid index of the smallest value.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if self.values[(i, j)] < self.values[best] {
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Grid points whose value is no larger than all (up to eight) grid
    /// neighbours.
    pub fn local_minima(&self) -> Vec<(usize, usize)> {
        let (r, c) = self.values.shape();
        let mut out = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let v = self.values[(i, j)];
                let mut is_min = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= r as i64 || b >= c as i64 {
                            continue;
                        }
                        if self.values[(a as usize, b as usize)] < v {
                            is_min = false;
                        }
                    }
                }
                if is_min {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `t lambda value` rows, a blank line after each `t` scan.
    pub fn to_gnuplot(&self) -> String {
        let mut out = format!("# scheme = {}\n# t lambda value\n", self.scheme);
        for (i, t) in self.t.iter().enumerate() {
            for (j, l) in self.lambda.iter().enumerate() {
                let _ = writeln!(out, "{} {} {}", fmt_real(*t), fmt_real(*l), fmt_real(self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub p: usize,
    pub schemes: Vec<SchemeReport>,
    pub surface: Surface,
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// Bounds, measurement windows and Monte Carlo statistical dimensions for
/// each configured scheme, plus the fixed-signal objective surface for the
/// first sampled signal (near-optimal weights when configured).
pub fn run_bound_report(cfg: &ExperimentConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let op = build_operator(cfg)?;
    let prior = build_prior(cfg, &op)?;
    let rs = &cfg.report;

    let mut rng = Rng::split(cfg.root_seed, STREAM_REPORT);
    let signals: Vec<DVector<f64>> = (0..rs.signals)
        .map(|_| sample_prior_signal(&prior, &op, &mut rng).map(|(_, x)| x))
        .collect::<Result<_>>()?;
    let sdim_base = rng.next_u64();

    let mut labels = cfg.weight_schemes.clone();
    labels.sort_by_key(|s| s.label());
    let mut schemes = Vec::new();
    for scheme in labels {
        let weights = scheme_weights(scheme, &op, &prior, &cfg.design)?;
        let bound = expected_bound(&op, &prior, &weights)?;
        let windows = rs
            .etas
            .iter()
            .map(|&eta| predicted_measurements(bound.value, op.n(), eta).map(|(lo, hi)| (eta, lo, hi)))
            .collect::<Result<_>>()?;
        let mut fixed = 0.0;
        let mut estimates = Vec::with_capacity(signals.len());
        let mut single_se = 0.0;
        for (k, x) in signals.iter().enumerate() {
            fixed += lemma1_bound(&op, &weights, x)?.value;
            let est = empirical_sdim(
                &op,
                &weights,
                x,
                rs.sdim_trials,
                &mut Rng::split(sdim_base, k as u64),
            )?;
            single_se = est.stderr;
            estimates.push(est.estimate);
        }
        let k = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / k;
        let stderr = if estimates.len() > 1 {
            (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
        } else {
            single_se
        };
        schemes.push(SchemeReport {
            scheme,
            weights,
            bound,
            windows,
            fixed_bound_mean: fixed / k,
            sdim_mean: mean,
            sdim_stderr: stderr,
        });
    }

    let pick = schemes
        .iter()
        .find(|s| s.scheme == Scheme::NearOptimal)
        .unwrap_or(&schemes[0]);
    let t = linspace(rs.t_range.0, rs.t_range.1, rs.grid);
    let lambda = linspace(rs.lambda_range.0, rs.lambda_range.1, rs.grid);
    let mut values = DMatrix::zeros(t.len(), lambda.len());
    for (i, &ti) in t.iter().enumerate() {
        for (j, &lj) in lambda.iter().enumerate() {
            values[(i, j)] = lemma1_objective(&op, &pick.weights, &signals[0], ti, lj)?;
        }
    }
    let surface = Surface {
        scheme: pick.scheme,
        t,
        lambda,
        values,
    };
    Ok(BoundReport {
        n: op.n(),
        p: op.p(),
        schemes,
        surface,
    })
}

impl BoundReport {
    /// TOML text with one table per scheme.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "p = {}", self.p);
        for s in &self.schemes {
            let b = &s.bound;
            let _ = writeln!(out, "\n[{}]", s.scheme);
            let _ = writeln!(out, "value = {}", fmt_real(b.value));
            let _ = writeln!(out, "raw_value = {}", fmt_real(b.raw_value));
            let _ = writeln!(out, "t_star = {}", fmt_real(b.t_star));
            if let Some(l) = b.lambda_star {
                let _ = writeln!(out, "lambda_star = {}", fmt_real(l));
            }
            let _ = writeln!(out, "evaluations = {}", b.evaluations);
            let _ = writeln!(out, "boundary_warning = {}", b.boundary_warning);
            for (eta, lo, hi) in &s.windows {
                let _ = writeln!(
                    out,
                    "window_eta_{} = [{}, {}]",
                    format!("{eta}").replace('.', "_"),
                    fmt_real(*lo),
                    fmt_real(*hi)
                );
            }
            let _ = writeln!(out, "fixed_bound_mean = {}", fmt_real(s.fixed_bound_mean));
            let _ = writeln!(out, "empirical_sdim = {}", fmt_real(s.sdim_mean));
            let _ = writeln!(out, "empirical_sdim_stderr = {}", fmt_real(s.sdim_stderr));
            let _ = writeln!(
                out,
                "weights = [{}]",
                s.weights.values().iter().map(|v| fmt_real(*v)).collect::<Vec<_>>().join(", ")
            );
        }
        out
    }
}

/// Signal for the `solve` command: read from `solve.signal` or drawn from
/// the prior.
pub fn solve_signal(cfg: &ExperimentConfig, op: &AnalysisOperator, prior: &Prior) -> Result<DVector<f64>> {
    if let Some(path) = &cfg.solve.signal {
        let signals = io::read_signals(path)?;
        let x = signals.into_iter().next().ok_or(Error::Empty("signal file"))?;
        if x.len() != op.n() {
            return Err(Error::DimensionMismatch {
                context: "signal length",
                expected: op.n(),
                actual: x.len(),
            });
        }
        return Ok(x);
    }
    let mut rng = Rng::split(cfg.root_seed, STREAM_SOLVE);
    Ok(sample_prior_signal(prior, op, &mut rng)?.1)
}

/// Measurement matrix and observations for the `solve` command.
pub fn solve_measurements(
    cfg: &ExperimentConfig,
    x: Option<&DVector<f64>>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let a = match &cfg.solve.measurements {
        Some(path) => io::read_matrix(path)?,
        None => {
            let m = cfg
                .solve
                .m
                .ok_or_else(|| Error::config("solve.m", "required when solve.measurements is not given"))?;
            let mut rng = Rng::split(cfg.root_seed, STREAM_SOLVE - 4);
            gaussian_measurements(cfg.n, m, &mut rng)?
        }
    };
    let y = match (&cfg.solve.observations, x) {
        (Some(path), _) => {
            let rows = io::read_signals(path)?;
            rows.into_iter().next().ok_or(Error::Empty("observation file"))?
        }
        (None, Some(x)) => &a * x,
        (None, None) => return Err(Error::config("solve.observations", "required without a signal")),
    };
    Ok((a, y))
}

/// Signals for `estimate-prior`: read from `estimate.signals` or drawn
/// from the configured prior.
pub fn estimate_signals(
    cfg: &ExperimentConfig,
    op: &AnalysisOperator,
) -> Result<Vec<DVector<f64>>> {
    if let Some(path) = &cfg.estimate.signals {
        return io::read_signals(path);
    }
    let prior = build_prior(cfg, op)?;
    let mut rng = Rng::split(cfg.root_seed, STREAM_ESTIMATE);
    (0..cfg.estimate.samples)
        .map(|_| sample_prior_signal(&prior, op, &mut rng).map(|(_, x)| x))
        .collect()
}
