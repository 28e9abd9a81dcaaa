//! Support/sign priors over the analysis coefficients and the matching
//! random signal generator.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{numerical_rank, orthonormal_null_basis, unit_sphere, Rng};
use crate::operators::AnalysisOperator;

/// Coefficients below this fraction of `|Omega x|_inf` count as zero.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-8;

const SUPPORT_ATTEMPTS: usize = 100;

/// Per-row support probabilities `beta_k = P{k in S}` and expected signs
/// `sigma_k = E[sgn((Omega x)_k)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    beta: DVector<f64>,
    sigma: DVector<f64>,
}

impl Prior {
    pub fn new(beta: DVector<f64>, sigma: DVector<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Empty("prior"));
        }
        if beta.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                context: "prior sigma length",
                expected: beta.len(),
                actual: sigma.len(),
            });
        }
        if let Some(k) = beta.iter().position(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::domain(format!(
                "beta[{k}] = {} is outside [0, 1]",
                beta[k]
            )));
        }
        if let Some(k) = sigma.iter().position(|s| !(-1.0..=1.0).contains(s)) {
            return Err(Error::domain(format!(
                "sigma[{k}] = {} is outside [-1, 1]",
                sigma[k]
            )));
        }
        let prior = Prior { beta, sigma };
        for k in prior.sign_violations() {
            warn!(
                "prior entry {k}: |sigma| = {} exceeds beta = {}",
                prior.sigma[k].abs(),
                prior.beta[k]
            );
        }
        Ok(prior)
    }

    /// Same `beta` everywhere, zero expected sign.
    pub fn uniform(p: usize, beta: f64) -> Result<Self> {
        Prior::new(DVector::from_element(p, beta), DVector::zeros(p))
    }

    /// `beta` interpolated linearly from `first` (row 0) to `last` (row p-1),
    /// zero expected sign.
    pub fn ramp(p: usize, first: f64, last: f64) -> Result<Self> {
        let beta = DVector::from_fn(p, |k, _| {
            if p == 1 {
                first
            } else {
                first + (last - first) * k as f64 / (p - 1) as f64
            }
        });
        Prior::new(beta, DVector::zeros(p))
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// Indices where `|sigma_k| > beta_k`, which no distribution can produce
    /// under the `sgn(0) = 0` convention.
    pub fn sign_violations(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.sigma[k].abs() > self.beta[k] + 1e-12)
            .collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "prior permutation",
                expected: self.len(),
                actual: perm.len(),
            });
        }
        Prior::new(
            DVector::from_iterator(perm.len(), perm.iter().map(|&k| self.beta[k])),
            DVector::from_iterator(perm.len(), perm.iter().map(|&k| self.sigma[k])),
        )
    }

    pub(crate) fn check_operator(&self, op: &AnalysisOperator) -> Result<()> {
        if self.len() != op.p() {
            return Err(Error::DimensionMismatch {
                context: "prior length vs operator rows",
                expected: op.p(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}

/// Sorted set of analysis-coefficient indices (0-based).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportSet {
    indices: Vec<usize>,
    p: usize,
}

impl SupportSet {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&k) = indices.iter().find(|&&k| k >= p) {
            return Err(Error::domain(format!("support index {k} out of range 0..{p}")));
        }
        Ok(SupportSet { indices, p })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.p).filter(|&k| !self.contains(k)).collect()
    }
}

#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Signs of the numerically nonzero entries of `d`, zero elsewhere.
pub fn support_signs(d: &DVector<f64>, rel_threshold: f64) -> DVector<f64> {
    let cutoff = rel_threshold * d.amax();
    d.map(|v| if v.abs() > cutoff { sgn(v) } else { 0.0 })
}

/// Empirical `beta` and `sigma` from example signals.
pub fn estimate_prior(
    signals: &[DVector<f64>],
    op: &AnalysisOperator,
    rel_threshold: f64,
) -> Result<Prior> {
    if signals.is_empty() {
        return Err(Error::Empty("signal list"));
    }
    if !(rel_threshold > 0.0) {
        return Err(Error::domain(format!(
            "relative threshold must be positive, got {rel_threshold}"
        )));
    }
    let p = op.p();
    let mut count = DVector::zeros(p);
    let mut sign_sum = DVector::zeros(p);
    for x in signals {
        let d = op.analyze(x)?;
        let s = support_signs(&d, rel_threshold);
        count += s.map(f64::abs);
        sign_sum += s;
    }
    let m = signals.len() as f64;
    Prior::new(count / m, sign_sum / m)
}

fn null_dim(op: &AnalysisOperator, off_support: &[usize]) -> usize {
    if off_support.is_empty() {
        return op.n();
    }
    op.n() - numerical_rank(&op.select_rows(off_support)).min(op.n())
}

/// Independent Bernoulli(`beta_k`) support, redrawn until some nonzero
/// signal has exactly this cosupport.
pub fn sample_support(prior: &Prior, op: &AnalysisOperator, rng: &mut Rng) -> Result<SupportSet> {
    prior.check_operator(op)?;
    let p = op.p();
    for _ in 0..SUPPORT_ATTEMPTS {
        let indices: Vec<usize> = (0..p).filter(|&k| rng.uniform() < prior.beta[k]).collect();
        let support = SupportSet::new(indices, p)?;
        if null_dim(op, &support.complement()) >= 1 {
            return Ok(support);
        }
    }
    Err(Error::IncompatiblePrior {
        attempts: SUPPORT_ATTEMPTS,
    })
}

/// `x = B c` with `B` an orthonormal basis of `null(Omega_{S^c})` and `c`
/// uniform on the unit sphere.
pub fn sample_signal(
    op: &AnalysisOperator,
    support: &SupportSet,
    rng: &mut Rng,
) -> Result<DVector<f64>> {
    if support.p() != op.p() {
        return Err(Error::DimensionMismatch {
            context: "support universe vs operator rows",
            expected: op.p(),
            actual: support.p(),
        });
    }
    let off = support.complement();
    let basis = if off.is_empty() {
        DMatrix::identity(op.n(), op.n())
    } else {
        orthonormal_null_basis(&op.select_rows(&off))
    };
    if basis.ncols() == 0 {
        return Err(Error::TrivialNullSpace);
    }
    let c = unit_sphere(rng, basis.ncols());
    Ok(basis * c)
}

/// Draws a support from `prior` and a signal on it.
pub fn sample_prior_signal(
    prior: &Prior,
    op: &AnalysisOperator,
    rng: &mut Rng,
) -> Result<(SupportSet, DVector<f64>)> {
    let support = sample_support(prior, op, rng)?;
    let x = sample_signal(op, &support, rng)?;
    Ok((support, x))
}
