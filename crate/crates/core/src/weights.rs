//! Weight vectors for the weighted analysis norm: constant, heuristic
//! `1 - beta`, and near-optimal by cyclic coordinate descent on the
//! expected-dimension cost.

use log::debug;
use nalgebra::DVector;

use crate::bounds::absorbed_cost;
use crate::error::{Error, Result};
use crate::operators::AnalysisOperator;
use crate::priors::Prior;

/// Floor applied to heuristic weights that would otherwise vanish.
pub const WEIGHT_FLOOR: f64 = 1e-6;

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const GSS_MAX_ITERS: usize = 500;

/// Strictly positive weights, optionally scaled so that the largest is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    v: DVector<f64>,
    normalized: bool,
}

impl WeightVector {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if let Some(i) = v.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::domain(format!(
                "weight {i} = {} is not a finite positive number",
                v[i]
            )));
        }
        Ok(WeightVector {
            v,
            normalized: false,
        })
    }

    /// Rescales so that `max_i v_i = 1`.
    pub fn normalize(mut self) -> Self {
        let max = self.v.max();
        self.v /= max;
        self.normalized = true;
        self
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightVector::new(&self.v * c)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let w = WeightVector::new(DVector::from_iterator(
            perm.len(),
            perm.iter().map(|&k| self.v[k]),
        ))?;
        Ok(WeightVector {
            normalized: self.normalized,
            ..w
        })
    }

    pub(crate) fn check_len(&self, p: usize) -> Result<()> {
        if self.len() != p {
            return Err(Error::DimensionMismatch {
                context: "weight vector length",
                expected: p,
                actual: self.len(),
            });
        }
        Ok(())
    }
}

/// `v_i = 1` for every row.
pub fn constant_weights(p: usize) -> Result<WeightVector> {
    Ok(WeightVector::new(DVector::from_element(p, 1.0))?.normalize())
}

/// `v_i = 1 - beta_i`, zeros floored at [`WEIGHT_FLOOR`], then normalized.
pub fn heuristic_weights(prior: &Prior) -> Result<WeightVector> {
    if prior.beta().iter().all(|&b| b >= 1.0) {
        return Err(Error::domain(
            "heuristic weights undefined: every beta_k equals 1",
        ));
    }
    let v = prior.beta().map(|b| (1.0 - b).max(WEIGHT_FLOOR));
    Ok(WeightVector::new(v)?.normalize())
}

/// Outcome of a golden-section search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarMin {
    pub argmin: f64,
    pub value: f64,
    pub evaluations: usize,
    /// Final bracketing interval.
    pub bracket: (f64, f64),
    /// The minimizer sits on (or within tolerance of) an end of `[lo, hi]`.
    pub at_boundary: bool,
}

/// Golden-section search for a minimizer of `phi` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol * (1 + |mid|)`. Both end
/// points are evaluated as well, so the returned value never exceeds
/// `min(phi(lo), phi(hi))`. NaN evaluations count as `+inf`. For a
/// non-unimodal `phi` the result is a local minimizer.
pub fn gss_minimize<F>(mut phi: F, lo: f64, hi: f64, tol: f64) -> ScalarMin
where
    F: FnMut(f64) -> f64,
{
    assert!(lo < hi, "gss_minimize needs lo < hi, got [{lo}, {hi}]");
    let mut evaluations = 0;
    let mut eval = |x: f64| {
        evaluations += 1;
        let y = phi(x);
        if y.is_nan() {
            f64::INFINITY
        } else {
            y
        }
    };
    let f_lo = eval(lo);
    let f_hi = eval(hi);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..GSS_MAX_ITERS {
        if b - a <= tol * (1.0 + (0.5 * (a + b)).abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    let mid = 0.5 * (a + b);
    let f_mid = eval(mid);
    let mut best = (mid, f_mid);
    for cand in [(c, fc), (d, fd), (lo, f_lo), (hi, f_hi)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let edge = tol * (1.0 + best.0.abs());
    let at_boundary = best.0 - lo <= edge || hi - best.0 <= edge;
    ScalarMin {
        argmin: best.0,
        value: best.1,
        evaluations,
        bracket: (a, b),
        at_boundary,
    }
}

/// Knobs for [`design_weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct DesignOptions {
    pub maxiter: usize,
    pub tol: f64,
    pub scalar_lo: f64,
    pub scalar_hi: f64,
    pub scalar_tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            maxiter: 50,
            tol: 1e-6,
            scalar_lo: 1e-4,
            scalar_hi: 20.0,
            scalar_tol: 1e-7,
        }
    }
}

impl DesignOptions {
    pub fn validate(&self) -> Result<()> {
        if self.maxiter < 1 {
            return Err(Error::domain("design maxiter must be at least 1"));
        }
        if !(self.scalar_lo > 0.0 && self.scalar_lo < self.scalar_hi) {
            return Err(Error::domain(format!(
                "design scalar interval must satisfy 0 < lo < hi, got [{}, {}]",
                self.scalar_lo, self.scalar_hi
            )));
        }
        if !(self.tol > 0.0 && self.scalar_tol > 0.0) {
            return Err(Error::domain("design tolerances must be positive"));
        }
        Ok(())
    }
}

/// Result of [`design_weights`].
#[derive(Clone, Debug)]
pub struct Design {
    /// Designed weights, normalized to unit max.
    pub weights: WeightVector,
    /// Unnormalized minimizer of the cost.
    pub raw: DVector<f64>,
    /// Cost at the all-ones start followed by the cost after each sweep.
    pub history: Vec<f64>,
    /// Scalar searches whose minimizer landed on the interval boundary.
    pub boundary_hits: usize,
}

impl Design {
    pub fn sweeps(&self) -> usize {
        self.history.len() - 1
    }
}

/// Cyclic coordinate descent on `v -> n - B(v)^2 / A(v)` starting from all
/// ones. Each coordinate is re-optimized by golden-section search over
/// `[scalar_lo, scalar_hi]` with the already updated coordinates held at
/// their new values; a step is kept only if it does not raise the cost.
pub fn design_weights(
    op: &AnalysisOperator,
    prior: &Prior,
    opts: &DesignOptions,
) -> Result<Design> {
    opts.validate()?;
    prior.check_operator(op)?;
    let p = op.p();
    let mut v = DVector::from_element(p, 1.0);
    let mut cost = absorbed_cost(op, prior, &v)?.ok_or_else(|| Error::Design {
        coordinate: 0,
        reason: "cost undefined at the all-ones start".into(),
    })?;
    let mut history = vec![cost];
    let mut boundary_hits = 0;
    let mut trial = v.clone();
    for sweep in 1..=opts.maxiter {
        let previous = v.clone();
        let previous_cost = cost;
        for i in 0..p {
            trial.copy_from(&v);
            let found = gss_minimize(
                |zeta| {
                    trial[i] = zeta;
                    match absorbed_cost(op, prior, &trial) {
                        Ok(Some(c)) => c,
                        _ => f64::INFINITY,
                    }
                },
                opts.scalar_lo,
                opts.scalar_hi,
                opts.scalar_tol,
            );
            if !found.value.is_finite() {
                return Err(Error::Design {
                    coordinate: i,
                    reason: format!(
                        "cost undefined on all of [{}, {}]",
                        opts.scalar_lo, opts.scalar_hi
                    ),
                });
            }
            if found.at_boundary {
                boundary_hits += 1;
            }
            if found.value <= cost {
                v[i] = found.argmin;
                cost = found.value;
            }
        }
        history.push(cost);
        let step = (&v - &previous).norm();
        debug!("design sweep {sweep}: cost {cost:.12} step {step:.3e}");
        if step < opts.tol || (previous_cost - cost).abs() < opts.tol {
            break;
        }
    }
    if boundary_hits > 0 {
        debug!("design: {boundary_hits} scalar searches ended on the interval boundary");
    }
    Ok(Design {
        weights: WeightVector::new(v.clone())?.normalize(),
        raw: v,
        history,
        boundary_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::erf_fn;

    #[test]
    fn gss_quadratic() {
        let r = gss_minimize(|z| (z - 2.0).powi(2), 0.0, 5.0, 1e-8);
        assert!((r.argmin - 2.0).abs() < 1e-7);
        assert!(!r.at_boundary);
    }

    #[test]
    fn gss_v_shape() {
        let r = gss_minimize(|z| (z - 0.3).abs(), 0.0, 1.0, 1e-9);
        assert!((r.argmin - 0.3).abs() < 1e-8);
    }

    #[test]
    fn gss_matches_dense_grid() {
        let phi = |z: f64| -erf_fn(z / 2f64.sqrt()) + 0.2 * z * z;
        let (lo, hi) = (1e-4, 10.0);
        let grid = 1_000_000;
        let mut best = (lo, phi(lo));
        for k in 0..=grid {
            let z = lo + (hi - lo) * k as f64 / grid as f64;
            let f = phi(z);
            if f < best.1 {
                best = (z, f);
            }
        }
        let r = gss_minimize(phi, lo, hi, 1e-9);
        assert!((r.argmin - best.0).abs() < 1e-4);
    }

    #[test]
    fn gss_monotone_hits_boundary() {
        let r = gss_minimize(|z| z, 1.0, 3.0, 1e-6);
        assert_eq!(r.argmin, 1.0);
        assert!(r.at_boundary);
        assert!(r.value <= 1.0);
    }

    #[test]
    fn heuristic_examples() {
        let prior = Prior::new(DVector::from_vec(vec![0.0, 0.5]), DVector::zeros(2)).unwrap();
        assert_eq!(heuristic_weights(&prior).unwrap().values().as_slice(), &[1.0, 0.5]);

        let zeros = Prior::uniform(4, 0.0).unwrap();
        assert_eq!(
            heuristic_weights(&zeros).unwrap(),
            constant_weights(4).unwrap()
        );

        let edge = Prior::new(DVector::from_vec(vec![1.0, 0.0]), DVector::zeros(2)).unwrap();
        let w = heuristic_weights(&edge).unwrap();
        assert_eq!(w.values().as_slice(), &[1e-6, 1.0]);

        let full = Prior::uniform(3, 1.0).unwrap();
        assert!(heuristic_weights(&full).is_err());
    }

    #[test]
    fn constant_examples() {
        let w = constant_weights(3).unwrap();
        assert_eq!(w.values().as_slice(), &[1.0, 1.0, 1.0]);
        assert!(w.is_normalized());
        assert_eq!(constant_weights(1).unwrap().values().as_slice(), &[1.0]);
    }

    #[test]
    fn weight_validation() {
        assert!(WeightVector::new(DVector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(WeightVector::new(DVector::from_vec(vec![1.0, -2.0])).is_err());
        assert!(WeightVector::new(DVector::from_vec(vec![f64::INFINITY])).is_err());
        let w = WeightVector::new(DVector::from_vec(vec![2.0, 4.0])).unwrap().normalize();
        assert_eq!(w.values().as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn design_options_validation() {
        let bad = DesignOptions {
            scalar_lo: 0.0,
            ..DesignOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = DesignOptions {
            maxiter: 0,
            ..DesignOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}
