//! Statistical-dimension bounds for the weighted analysis norm
//! `f(z) = sum_i v_i |(Omega z)_i|`.
//!
//! Two bounds are provided:
//!
//! * a fixed-signal bound, the infimum over `(t, lambda)` of
//!   `n + lambda^2 a(t) - 2 lambda b(t)`, which depends on the support and
//!   signs of `Omega x`;
//! * its average over a support/sign prior, where `lambda` is eliminated in
//!   closed form (`lambda* = B / A`) and the remaining infimum over `t` gives
//!   `n - B^2 / A`.
//!
//! Inside the off-support double sums the pair `(u_i, u_j) = (t v_i, t v_j)`
//! enters through `erf(min(u_i, u_j)/sqrt 2)` and `h(max(u_i, u_j))`, taken
//! per pair unless [`MinMaxRule::Global`] is requested.

mod sdim;

pub use sdim::{cone_distance_sq, empirical_sdim, ConeDistance, SdimEstimate};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::math::{erf_half, h_unchecked};
use crate::operators::AnalysisOperator;
use crate::priors::{support_signs, Prior, DEFAULT_REL_THRESHOLD};
use crate::weights::{gss_minimize, WeightVector};

/// Search box for `t` in every bound.
pub const T_RANGE: (f64, f64) = (1e-4, 50.0);
/// Search box for `lambda` in the fixed-signal bound.
pub const LAMBDA_RANGE: (f64, f64) = (1e-4, 50.0);
/// Relative tolerance of the golden-section searches.
pub const SEARCH_TOL: f64 = 1e-6;

/// A minimized statistical-dimension bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    /// Bound clamped to `[0, n]`.
    pub value: f64,
    /// Bound before clamping.
    pub raw_value: f64,
    pub t_star: f64,
    pub lambda_star: Option<f64>,
    /// Objective evaluations spent in the search.
    pub evaluations: usize,
    /// Final bracket of the outer search over `t`.
    pub bracket: (f64, f64),
    /// Some minimizer landed on the edge of its search box.
    pub boundary_warning: bool,
}

/// How `v_min` / `v_max` inside the off-support double sum are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MinMaxRule {
    /// `min(v_i, v_j)` / `max(v_i, v_j)` per pair.
    #[default]
    Pairwise,
    /// Smallest / largest weight over all rows, for every pair.
    Global,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("{name} must be finite and > 0, got {x}")));
    }
    Ok(())
}

fn clamp_dim(raw: f64, n: usize) -> f64 {
    raw.clamp(0.0, n as f64)
}

/// Coefficients of the fixed-signal objective `n + lambda^2 a - 2 lambda b`
/// at `u = t v`. `signs[k]` is `sgn((Omega x)_k)` on the support and 0 off it.
fn lemma1_coefficients(
    op: &AnalysisOperator,
    u: &DVector<f64>,
    signs: &DVector<f64>,
    rule: MinMaxRule,
) -> (f64, f64) {
    let p = op.p();
    let hmat = op.norm_gram_sq();
    let norms = op.row_norms();
    let on: Vec<usize> = (0..p).filter(|&k| signs[k] != 0.0).collect();
    let off: Vec<usize> = (0..p).filter(|&k| signs[k] == 0.0).collect();

    // sum_{i,j in S} u_i u_j s_i s_j G_ij as a squared norm
    let omega = op.matrix();
    let mut q = DVector::zeros(op.n());
    for &i in &on {
        q.axpy(u[i] * signs[i], &omega.row(i).transpose(), 1.0);
    }
    let mut a = q.norm_squared();

    let mut b = 0.0;
    for &i in &off {
        b += norms[i] * erf_half(u[i]);
    }

    let erf_u: Vec<f64> = u.iter().map(|&x| erf_half(x)).collect();
    let h_u: Vec<f64> = u.iter().map(|&x| h_unchecked(x)).collect();
    let (global_erf, global_h) = match rule {
        MinMaxRule::Global => (erf_half(u.min()), h_unchecked(u.max())),
        MinMaxRule::Pairwise => (0.0, 0.0),
    };
    for &i in &off {
        for &j in &off {
            let (e, h) = match rule {
                MinMaxRule::Pairwise => {
                    if u[i] <= u[j] {
                        (erf_u[i], h_u[j])
                    } else {
                        (erf_u[j], h_u[i])
                    }
                }
                MinMaxRule::Global => (global_erf, global_h),
            };
            a += hmat[(i, j)] * (e - h * u[i] * u[j]);
        }
    }
    (a, b)
}

fn check_signal(op: &AnalysisOperator, v: &WeightVector, x: &DVector<f64>) -> Result<DVector<f64>> {
    v.check_len(op.p())?;
    let d = op.analyze(x)?;
    Ok(support_signs(&d, DEFAULT_REL_THRESHOLD))
}

/// Fixed-signal objective at `(t, lambda)` with the support and signs read
/// off `Omega x`.
pub fn lemma1_objective(
    op: &AnalysisOperator,
    v: &WeightVector,
    x: &DVector<f64>,
    t: f64,
    lambda: f64,
) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("lambda", lambda)?;
    let signs = check_signal(op, v, x)?;
    lemma1_objective_signs(op, v, &signs, t, lambda, MinMaxRule::Pairwise)
}

/// Fixed-signal objective with explicit support signs (`0` marks the
/// cosupport).
pub fn lemma1_objective_signs(
    op: &AnalysisOperator,
    v: &WeightVector,
    signs: &DVector<f64>,
    t: f64,
    lambda: f64,
    rule: MinMaxRule,
) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("lambda", lambda)?;
    v.check_len(op.p())?;
    if signs.len() != op.p() {
        return Err(Error::DimensionMismatch {
            context: "sign vector length",
            expected: op.p(),
            actual: signs.len(),
        });
    }
    let u = v.values() * t;
    let (a, b) = lemma1_coefficients(op, &u, signs, rule);
    Ok(op.n() as f64 + lambda * lambda * a - 2.0 * lambda * b)
}

/// Minimizes the fixed-signal objective over `(t, lambda)` in
/// [`T_RANGE`] x [`LAMBDA_RANGE`] by nested golden-section search.
pub fn lemma1_bound(
    op: &AnalysisOperator,
    v: &WeightVector,
    x: &DVector<f64>,
) -> Result<BoundResult> {
    let signs = check_signal(op, v, x)?;
    if signs.iter().all(|&s| s == 0.0) {
        return Err(Error::domain("lemma bound needs x with Omega x != 0"));
    }
    let n = op.n() as f64;
    let mut evaluations = 0;
    let mut inner_boundary = false;
    let mut inner_best = |t: f64| {
        let u = v.values() * t;
        let (a, b) = lemma1_coefficients(op, &u, &signs, MinMaxRule::Pairwise);
        let r = gss_minimize(
            |lambda| n + lambda * lambda * a - 2.0 * lambda * b,
            LAMBDA_RANGE.0,
            LAMBDA_RANGE.1,
            SEARCH_TOL,
        );
        evaluations += r.evaluations;
        (r, a, b)
    };
    let outer = gss_minimize(|t| inner_best(t).0.value, T_RANGE.0, T_RANGE.1, SEARCH_TOL);
    let (inner, _, _) = inner_best(outer.argmin);
    inner_boundary |= inner.at_boundary;
    Ok(BoundResult {
        value: clamp_dim(inner.value, op.n()),
        raw_value: inner.value,
        t_star: outer.argmin,
        lambda_star: Some(inner.argmin),
        evaluations: evaluations + outer.evaluations,
        bracket: outer.bracket,
        boundary_warning: outer.at_boundary || inner_boundary,
    })
}

/// The prior-averaged quadratic-in-`lambda` coefficients at `u = t v`:
/// the averaged objective is `n + lambda^2 A - 2 lambda B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedTerms {
    pub a: f64,
    pub b: f64,
}

impl ExpectedTerms {
    /// `lambda* = B / A`, the minimizer of the averaged objective.
    pub fn lambda_star(&self) -> f64 {
        self.b / self.a
    }

    /// `n + lambda^2 A - 2 lambda B`.
    pub fn objective(&self, n: usize, lambda: f64) -> f64 {
        n as f64 + lambda * lambda * self.a - 2.0 * lambda * self.b
    }

    /// `n - B^2 / A`, the averaged objective at `lambda*`.
    pub fn minimized(&self, n: usize) -> f64 {
        n as f64 - self.b * self.b / self.a
    }
}

/// `A` and `B` of the averaged objective, where `u` stands for `t v`.
///
/// ```text
/// B = sum_i |w_i| erf(u_i/sqrt2) (1 - b_i)
/// A = sum_i u_i^2 |w_i|^2 b_i
///   + sum_{i != j} u_i u_j <w_i, w_j> s_i s_j b_i b_j
///   + sum_i |w_i|^2 [erf(u_i/sqrt2) - h(u_i) u_i^2] (1 - b_i)
///   + sum_{i != j} H_ij [erf(min/sqrt2) - h(max) u_i u_j] (1 - b_i)(1 - b_j)
/// ```
/// with `b = beta`, `s = sigma`.
pub fn expected_terms(
    op: &AnalysisOperator,
    prior: &Prior,
    u: &DVector<f64>,
) -> Result<ExpectedTerms> {
    prior.check_operator(op)?;
    if u.len() != op.p() {
        return Err(Error::DimensionMismatch {
            context: "scaled weight length",
            expected: op.p(),
            actual: u.len(),
        });
    }
    if let Some(k) = u.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!("u[{k}] = {} must be positive", u[k])));
    }
    Ok(expected_terms_unchecked(op, prior, u))
}

pub(crate) fn expected_terms_unchecked(
    op: &AnalysisOperator,
    prior: &Prior,
    u: &DVector<f64>,
) -> ExpectedTerms {
    let p = op.p();
    let beta = prior.beta();
    let sigma = prior.sigma();
    let norms = op.row_norms();
    let gram = op.gram();
    let hmat = op.norm_gram_sq();
    let erf_u: Vec<f64> = u.iter().map(|&x| erf_half(x)).collect();
    let h_u: Vec<f64> = u.iter().map(|&x| h_unchecked(x)).collect();

    let mut b = 0.0;
    let mut a = 0.0;
    for i in 0..p {
        let off_i = 1.0 - beta[i];
        let sq = norms[i] * norms[i];
        b += norms[i] * erf_u[i] * off_i;
        a += u[i] * u[i] * sq * beta[i];
        a += sq * (erf_u[i] - h_u[i] * u[i] * u[i]) * off_i;
        let on_i = u[i] * sigma[i] * beta[i];
        for j in 0..p {
            if i == j {
                continue;
            }
            a += on_i * u[j] * sigma[j] * beta[j] * gram[(i, j)];
            let (e, h) = if u[i] <= u[j] {
                (erf_u[i], h_u[j])
            } else {
                (erf_u[j], h_u[i])
            };
            a += hmat[(i, j)] * (e - h * u[i] * u[j]) * off_i * (1.0 - beta[j]);
        }
    }
    ExpectedTerms { a, b }
}

/// `n - B(u)^2 / A(u)`, or `None` where `A(u) <= 0`.
///
/// This is the cost minimized by the weight designer (with `t` absorbed
/// into `u`).
pub fn absorbed_cost(
    op: &AnalysisOperator,
    prior: &Prior,
    u: &DVector<f64>,
) -> Result<Option<f64>> {
    let terms = expected_terms(op, prior, u)?;
    Ok(if terms.a > 0.0 {
        Some(terms.minimized(op.n()))
    } else {
        None
    })
}

/// Prior-averaged bound `inf_t { n - B(t v)^2 / A(t v) }`.
pub fn expected_bound(
    op: &AnalysisOperator,
    prior: &Prior,
    v: &WeightVector,
) -> Result<BoundResult> {
    prior.check_operator(op)?;
    v.check_len(op.p())?;
    let mut defined = false;
    let outer = gss_minimize(
        |t| {
            let terms = expected_terms_unchecked(op, prior, &(v.values() * t));
            if terms.a > 0.0 {
                defined = true;
                terms.minimized(op.n())
            } else {
                f64::INFINITY
            }
        },
        T_RANGE.0,
        T_RANGE.1,
        SEARCH_TOL,
    );
    if !defined || !outer.value.is_finite() {
        return Err(Error::BoundUndefined(
            "A(t v) <= 0 at every probed t".into(),
        ));
    }
    let terms = expected_terms_unchecked(op, prior, &(v.values() * outer.argmin));
    Ok(BoundResult {
        value: clamp_dim(outer.value, op.n()),
        raw_value: outer.value,
        t_star: outer.argmin,
        lambda_star: Some(terms.lambda_star()),
        evaluations: outer.evaluations,
        bracket: outer.bracket,
        boundary_warning: outer.at_boundary,
    })
}

/// Closed-form and numerically searched minimizers of
/// `lambda -> n + lambda^2 A - 2 lambda B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaCheck {
    pub closed: f64,
    pub numeric: f64,
    pub terms: ExpectedTerms,
}

/// Search box for the numeric side of [`lambda_star_check`].
pub const LAMBDA_CHECK_RANGE: (f64, f64) = (1e-6, 1e3);

pub fn quadratic_lambda(n: usize, terms: ExpectedTerms) -> Result<LambdaCheck> {
    if !(terms.a > 0.0) {
        return Err(Error::BoundUndefined(format!(
            "A = {} is not positive",
            terms.a
        )));
    }
    let numeric = gss_minimize(
        |lambda| terms.objective(n, lambda),
        LAMBDA_CHECK_RANGE.0,
        LAMBDA_CHECK_RANGE.1,
        1e-12,
    );
    Ok(LambdaCheck {
        closed: terms.lambda_star(),
        numeric: numeric.argmin,
        terms,
    })
}

/// Compares `lambda* = B/A` at `u = t v` with a golden-section minimizer.
pub fn lambda_star_check(
    op: &AnalysisOperator,
    prior: &Prior,
    t: f64,
    v: &WeightVector,
) -> Result<LambdaCheck> {
    check_positive("t", t)?;
    v.check_len(op.p())?;
    let terms = expected_terms(op, prior, &(v.values() * t))?;
    quadratic_lambda(op.n(), terms)
}

/// Measurement window `delta -/+ sqrt(8 n log(4/eta))` outside of which
/// recovery fails / succeeds with probability at least `1 - eta`.
pub fn predicted_measurements(delta: f64, n: usize, eta: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(0.0..=n as f64).contains(&delta) {
        return Err(Error::domain(format!(
            "delta = {delta} outside [0, n = {n}]"
        )));
    }
    let half = (8.0 * n as f64 * (4.0 / eta).ln()).sqrt();
    Ok(((delta - half).max(0.0), delta + half))
}

#[cfg(test)]
mod tests;
