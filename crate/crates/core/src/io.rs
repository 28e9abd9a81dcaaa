//! Text formats.
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly. Numeric tables are comma separated, one row per line;
//! readers also accept whitespace and skip blank lines and `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::BoundResult;
use crate::error::{Error, Result};
use crate::operators::{make_operator, AnalysisOperator};
use crate::priors::Prior;
use crate::solver::{SolverResult, SolverStatus};
use crate::weights::WeightVector;

/// `x` with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_real).collect::<Vec<_>>().join(",")
}

fn parse_err(origin: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        origin: origin.to_string(),
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_row(line: &str, lineno: usize, origin: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| parse_err(origin, format!("line {lineno}: bad number `{f}`")))
        })
        .collect()
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn matrix_to_string(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        out.push_str(&join(row.iter().copied()));
        out.push('\n');
    }
    out
}

/// Rectangular table of reals.
pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for (lineno, line) in data_lines(text) {
        let row = parse_row(line, lineno, origin)?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if row.len() != first {
                return Err(parse_err(
                    origin,
                    format!("line {lineno}: {} columns, expected {first}", row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(origin, "no data rows"));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.into_iter().flatten(),
    ))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_string(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read_text(path)?, &path.display().to_string())
}

pub fn write_operator(path: &Path, op: &AnalysisOperator) -> Result<()> {
    write_matrix(path, op.matrix())
}

pub fn read_operator(path: &Path) -> Result<AnalysisOperator> {
    make_operator(read_matrix(path)?)
}

/// One signal per line.
pub fn signals_to_string(signals: &[DVector<f64>]) -> String {
    let mut out = String::new();
    for s in signals {
        out.push_str(&join(s.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn parse_signals(text: &str, origin: &str) -> Result<Vec<DVector<f64>>> {
    let m = parse_matrix(text, origin)?;
    Ok(m.row_iter().map(|r| r.transpose()).collect())
}

pub fn read_signals(path: &Path) -> Result<Vec<DVector<f64>>> {
    parse_signals(&read_text(path)?, &path.display().to_string())
}

pub fn write_signals(path: &Path, signals: &[DVector<f64>]) -> Result<()> {
    write_text(path, &signals_to_string(signals))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorDoc {
    beta: Vec<f64>,
    sigma: Vec<f64>,
}

/// Two-array key-value document (`beta = [...]`, `sigma = [...]`).
pub fn prior_to_string(prior: &Prior) -> String {
    let doc = PriorDoc {
        beta: prior.beta().iter().copied().collect(),
        sigma: prior.sigma().iter().copied().collect(),
    };
    toml::to_string(&doc).expect("prior arrays serialize")
}

pub fn parse_prior(text: &str, origin: &str) -> Result<Prior> {
    let doc: PriorDoc = toml::from_str(text).map_err(|e| parse_err(origin, e.to_string()))?;
    Prior::new(DVector::from_vec(doc.beta), DVector::from_vec(doc.sigma))
}

pub fn read_prior(path: &Path) -> Result<Prior> {
    parse_prior(&read_text(path)?, &path.display().to_string())
}

pub fn write_prior(path: &Path, prior: &Prior) -> Result<()> {
    write_text(path, &prior_to_string(prior))
}

pub fn weights_to_string(w: &WeightVector) -> String {
    let mut s = join(w.values().iter().copied());
    s.push('\n');
    s
}

pub fn parse_weights(text: &str, origin: &str) -> Result<WeightVector> {
    let mut lines = data_lines(text);
    let (lineno, line) = lines
        .next()
        .ok_or_else(|| parse_err(origin, "no weight line"))?;
    if let Some((extra, _)) = lines.next() {
        return Err(parse_err(origin, format!("line {extra}: expected a single line")));
    }
    WeightVector::new(DVector::from_vec(parse_row(line, lineno, origin)?))
}

pub fn read_weights(path: &Path) -> Result<WeightVector> {
    parse_weights(&read_text(path)?, &path.display().to_string())
}

pub fn write_weights(path: &Path, w: &WeightVector) -> Result<()> {
    write_text(path, &weights_to_string(w))
}

/// `sweep,cost` per line; sweep 0 is the starting point.
pub fn history_to_string(history: &[f64]) -> String {
    let mut out = String::from("# sweep,cost\n");
    for (k, c) in history.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", fmt_real(*c));
    }
    out
}

pub fn parse_history(text: &str, origin: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in data_lines(text) {
        let row = parse_row(line, lineno, origin)?;
        if row.len() != 2 || row[0] != out.len() as f64 {
            return Err(parse_err(origin, format!("line {lineno}: expected `{},cost`", out.len())));
        }
        out.push(row[1]);
    }
    Ok(out)
}

fn key_values<'a>(text: &'a str, origin: &str) -> Result<Vec<(&'a str, &'a str)>> {
    data_lines(text)
        .map(|(lineno, line)| {
            line.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| parse_err(origin, format!("line {lineno}: expected `key = value`")))
        })
        .collect()
}

fn lookup<'a>(kv: &[(&str, &'a str)], key: &str, origin: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| parse_err(origin, format!("missing key `{key}`")))
}

fn lookup_parse<T: std::str::FromStr>(kv: &[(&str, &str)], key: &str, origin: &str) -> Result<T> {
    let raw = lookup(kv, key, origin)?;
    raw.parse()
        .map_err(|_| parse_err(origin, format!("key `{key}`: bad value `{raw}`")))
}

/// `key = value` lines. A missing `lambda_star` is written as `NaN`.
pub fn bound_result_to_string(r: &BoundResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "value = {}", fmt_real(r.value));
    let _ = writeln!(out, "raw_value = {}", fmt_real(r.raw_value));
    let _ = writeln!(out, "t_star = {}", fmt_real(r.t_star));
    let _ = writeln!(out, "lambda_star = {}", fmt_real(r.lambda_star.unwrap_or(f64::NAN)));
    let _ = writeln!(out, "evaluations = {}", r.evaluations);
    let _ = writeln!(out, "bracket_lo = {}", fmt_real(r.bracket.0));
    let _ = writeln!(out, "bracket_hi = {}", fmt_real(r.bracket.1));
    let _ = writeln!(out, "boundary_warning = {}", r.boundary_warning);
    out
}

pub fn parse_bound_result(text: &str, origin: &str) -> Result<BoundResult> {
    let kv = key_values(text, origin)?;
    let lambda: f64 = lookup_parse(&kv, "lambda_star", origin)?;
    Ok(BoundResult {
        value: lookup_parse(&kv, "value", origin)?,
        raw_value: lookup_parse(&kv, "raw_value", origin)?,
        t_star: lookup_parse(&kv, "t_star", origin)?,
        lambda_star: (!lambda.is_nan()).then_some(lambda),
        evaluations: lookup_parse(&kv, "evaluations", origin)?,
        bracket: (
            lookup_parse(&kv, "bracket_lo", origin)?,
            lookup_parse(&kv, "bracket_hi", origin)?,
        ),
        boundary_warning: lookup_parse(&kv, "boundary_warning", origin)?,
    })
}

/// Header of `# key = value` lines followed by the estimate, one entry per
/// line. `extra` entries are appended to the header.
pub fn solver_result_to_string(r: &SolverResult, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# n = {}", r.z_hat.len());
    let _ = writeln!(out, "# status = {}", r.status.as_str());
    let _ = writeln!(out, "# objective = {}", fmt_real(r.objective));
    let _ = writeln!(out, "# eq_residual = {}", fmt_real(r.eq_residual));
    let _ = writeln!(out, "# split_residual = {}", fmt_real(r.split_residual));
    let _ = writeln!(out, "# dual_residual = {}", fmt_real(r.dual_residual));
    let _ = writeln!(out, "# iterations = {}", r.iterations);
    let _ = writeln!(out, "# rho = {}", fmt_real(r.rho));
    let _ = writeln!(out, "# rank_deficient = {}", r.rank_deficient);
    let _ = writeln!(out, "# polished = {}", r.polished);
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for z in r.z_hat.iter() {
        out.push_str(&fmt_real(*z));
        out.push('\n');
    }
    out
}

pub fn parse_solver_result(text: &str, origin: &str) -> Result<SolverResult> {
    let header: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .collect();
    let header = header.join("\n");
    let kv = key_values(&header, origin)?;
    let status = match lookup(&kv, "status", origin)? {
        "converged" => SolverStatus::Converged,
        "max_iters" => SolverStatus::MaxIters,
        "infeasible" => SolverStatus::Infeasible,
        other => return Err(parse_err(origin, format!("unknown status `{other}`"))),
    };
    let mut z = Vec::new();
    for (lineno, line) in data_lines(text) {
        z.extend(parse_row(line, lineno, origin)?);
    }
    let n: usize = lookup_parse(&kv, "n", origin)?;
    if z.len() != n {
        return Err(parse_err(origin, format!("{} entries, header says n = {n}", z.len())));
    }
    Ok(SolverResult {
        z_hat: DVector::from_vec(z),
        objective: lookup_parse(&kv, "objective", origin)?,
        eq_residual: lookup_parse(&kv, "eq_residual", origin)?,
        split_residual: lookup_parse(&kv, "split_residual", origin)?,
        dual_residual: lookup_parse(&kv, "dual_residual", origin)?,
        iterations: lookup_parse(&kv, "iterations", origin)?,
        status,
        rho: lookup_parse(&kv, "rho", origin)?,
        rank_deficient: lookup_parse(&kv, "rank_deficient", origin)?,
        polished: lookup_parse(&kv, "polished", origin)?,
    })
}
