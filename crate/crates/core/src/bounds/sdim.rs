//! Monte Carlo statistical dimension of the descent cone of
//! `z -> sum_i v_i |(Omega z)_i|` at `x`.
//!
//! `delta = E dist^2(g, K)` with `K` the cone generated by the
//! subdifferential, `K = { tau Omega^T (v . (s + z)) : tau >= 0,
//! z_S = 0, |z|_inf <= 1 }`, `s = sgn(Omega x)`. Writing `y = tau z_{S^c}`
//! the distance is a least-squares problem over the epigraph cone
//! `{ (tau, y) : |y|_inf <= tau }`, solved here by accelerated projected
//! gradient with function-value restarts.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{gaussian_vector, Rng};
use crate::operators::AnalysisOperator;
use crate::priors::{support_signs, DEFAULT_REL_THRESHOLD};
use crate::weights::WeightVector;

/// Iteration cap per projection.
pub const MAX_PROJECTION_ITERS: usize = 5000;
/// A projection stops once a projected-gradient step would lower the
/// objective by less than this (relative to `1 + objective`).
pub const PROJECTION_TOL: f64 = 1e-10;
/// Tolerated share of projections that hit the iteration cap.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdimEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: usize,
    /// Projections that stopped at the iteration cap.
    pub unconverged: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeDistance {
    pub dist_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Generator matrix `[Omega^T (v . s) | v_i w_i for i off support]` of the
/// subdifferential cone.
pub(crate) struct ConeGenerators {
    gram: DMatrix<f64>,
    m: DMatrix<f64>,
    lipschitz: f64,
}

impl ConeGenerators {
    pub(crate) fn new(op: &AnalysisOperator, v: &DVector<f64>, signs: &DVector<f64>) -> Self {
        let omega = op.matrix();
        let off: Vec<usize> = (0..op.p()).filter(|&k| signs[k] == 0.0).collect();
        let mut m = DMatrix::zeros(op.n(), 1 + off.len());
        let weighted_signs = v.component_mul(signs);
        m.set_column(0, &(omega.transpose() * weighted_signs));
        for (c, &k) in off.iter().enumerate() {
            m.set_column(1 + c, &(omega.row(k).transpose() * v[k]));
        }
        let gram = m.transpose() * &m;
        let lipschitz = gram.symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
        ConeGenerators { gram, m, lipschitz }
    }
}

/// Euclidean projection onto `{ (tau, y) : |y|_inf <= tau }`, in place.
/// `w[0]` is `tau`.
fn project_linf_epigraph(w: &mut DVector<f64>, scratch: &mut Vec<f64>) {
    let t0 = w[0];
    scratch.clear();
    scratch.extend(w.iter().skip(1).map(|y| y.abs()));
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    let mut tau = t0;
    for (k, &a) in scratch.iter().enumerate() {
        if tau >= a {
            break;
        }
        sum += a;
        tau = (t0 + sum) / (k as f64 + 2.0);
    }
    let tau = tau.max(0.0);
    w[0] = tau;
    for y in w.iter_mut().skip(1) {
        *y = y.clamp(-tau, tau);
    }
}

fn half_residual_sq(gg: f64, c: &DVector<f64>, q: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    0.5 * gg - c.dot(w) + 0.5 * w.dot(&(q * w))
}

pub(crate) fn cone_distance_with(gen: &ConeGenerators, g: &DVector<f64>, max_iters: usize) -> ConeDistance {
    let dim = gen.m.ncols();
    let c = gen.m.transpose() * g;
    let gg = g.norm_squared();
    let q = &gen.gram;
    let step = 1.0 / gen.lipschitz;
    let mut scratch = Vec::with_capacity(dim);

    let mut x = DVector::zeros(dim);
    if q[(0, 0)] > 0.0 {
        x[0] = (c[0] / q[(0, 0)]).max(0.0);
    }
    let mut fx = half_residual_sq(gg, &c, q, &x);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut next = DVector::zeros(dim);
    for it in 1..=max_iters {
        let grad = q * &y - &c;
        next.copy_from(&y);
        next.axpy(-step, &grad, 1.0);
        project_linf_epigraph(&mut next, &mut scratch);
        let f_next = half_residual_sq(gg, &c, q, &next);
        // decrease guaranteed by a projected-gradient step from y
        let gap = (&y - &next).norm_squared() * gen.lipschitz * 0.5;
        let converged = gap <= PROJECTION_TOL * (1.0 + fx);
        if f_next > fx {
            if momentum == 1.0 || converged {
                // a plain step from x no longer decreases f
                return ConeDistance {
                    dist_sq: (2.0 * fx).max(0.0),
                    iterations: it,
                    converged: true,
                };
            }
            // restart: drop momentum and retry from x
            momentum = 1.0;
            y.copy_from(&x);
            continue;
        }
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / m_next;
        y.copy_from(&next);
        y.axpy(beta, &(&next - &x), 1.0);
        x.copy_from(&next);
        fx = f_next;
        momentum = m_next;
        if converged {
            return ConeDistance {
                dist_sq: (2.0 * fx).max(0.0),
                iterations: it,
                converged: true,
            };
        }
    }
    ConeDistance {
        dist_sq: (2.0 * fx).max(0.0),
        iterations: max_iters,
        converged: false,
    }
}

/// `dist^2(g, cone of the subdifferential at x)`.
pub fn cone_distance_sq(
    op: &AnalysisOperator,
    v: &WeightVector,
    x: &DVector<f64>,
    g: &DVector<f64>,
) -> Result<ConeDistance> {
    v.check_len(op.p())?;
    let signs = support_signs(&op.analyze(x)?, DEFAULT_REL_THRESHOLD);
    if signs.iter().all(|&s| s == 0.0) {
        return Err(Error::domain("descent cone needs Omega x != 0"));
    }
    if g.len() != op.n() {
        return Err(Error::DimensionMismatch {
            context: "gaussian sample length",
            expected: op.n(),
            actual: g.len(),
        });
    }
    let gen = ConeGenerators::new(op, v.values(), &signs);
    Ok(cone_distance_with(&gen, g, MAX_PROJECTION_ITERS))
}

/// Monte Carlo mean of `dist^2(g, K)` over `trials` standard Gaussian draws.
///
/// Each draw uses its own stream split off a base seed taken from `rng`, so
/// the result does not depend on the rayon thread count.
pub fn empirical_sdim(
    op: &AnalysisOperator,
    v: &WeightVector,
    x: &DVector<f64>,
    trials: usize,
    rng: &mut Rng,
) -> Result<SdimEstimate> {
    if trials == 0 {
        return Err(Error::domain("empirical statistical dimension needs trials >= 1"));
    }
    v.check_len(op.p())?;
    let signs = support_signs(&op.analyze(x)?, DEFAULT_REL_THRESHOLD);
    if signs.iter().all(|&s| s == 0.0) {
        return Err(Error::domain("descent cone needs Omega x != 0"));
    }
    let gen = ConeGenerators::new(op, v.values(), &signs);
    let base = rng.next_u64();
    let n = op.n();
    let samples: Vec<ConeDistance> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let g = gaussian_vector(&mut Rng::split(base, k as u64), n);
            cone_distance_with(&gen, &g, MAX_PROJECTION_ITERS)
        })
        .collect();

    // Welford, in trial order
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, s) in samples.iter().enumerate() {
        let delta = s.dist_sq - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (s.dist_sq - mean);
    }
    let unconverged = samples.iter().filter(|s| !s.converged).count();
    if unconverged as f64 > MAX_FAILURE_RATE * trials as f64 {
        return Err(Error::NonConvergence {
            failed: unconverged,
            trials,
        });
    }
    let stderr = if trials > 1 {
        (m2 / (trials - 1) as f64 / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(SdimEstimate {
        estimate: mean,
        stderr,
        trials,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gaussian_matrix;
    use crate::operators::{identity_operator, make_operator};
    use crate::weights::constant_weights;

    /// For `Omega = I` the distance reduces to a scalar problem in `tau`:
    /// `sum_S (g_i - tau v_i s_i)^2 + sum_{S^c} (|g_i| - tau v_i)_+^2`.
    fn identity_distance(g: &DVector<f64>, v: &DVector<f64>, s: &DVector<f64>) -> f64 {
        let f = |tau: f64| {
            (0..g.len())
                .map(|i| {
                    if s[i] != 0.0 {
                        (g[i] - tau * v[i] * s[i]).powi(2)
                    } else {
                        (g[i].abs() - tau * v[i]).max(0.0).powi(2)
                    }
                })
                .sum::<f64>()
        };
        // convex in tau: ternary search on a wide bracket
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..400 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if f(a) <= f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        f(0.5 * (lo + hi)).min(f(0.0))
    }

    #[test]
    fn epigraph_projection_properties() {
        let mut scratch = Vec::new();
        let mut w = DVector::from_vec(vec![0.5, 2.0, -0.1, -3.0]);
        project_linf_epigraph(&mut w, &mut scratch);
        let tau = w[0];
        assert!(w.iter().skip(1).all(|y| y.abs() <= tau + 1e-15));
        // (1.5, 2, -0.1, -3): tau = (0.5 + 2 + 3) / 3 = 1.8333
        assert!((tau - 5.5 / 3.0).abs() < 1e-12);

        let mut inside = DVector::from_vec(vec![2.0, 1.0, -1.5]);
        let before = inside.clone();
        project_linf_epigraph(&mut inside, &mut scratch);
        assert_eq!(inside, before);

        let mut polar = DVector::from_vec(vec![-5.0, 1.0, 1.0]);
        project_linf_epigraph(&mut polar, &mut scratch);
        assert_eq!(polar, DVector::zeros(3));
    }

    #[test]
    fn identity_matches_scalar_reduction() {
        let mut rng = Rng::new(77);
        for trial in 0..30 {
            let n = 6 + trial % 5;
            let op = identity_operator(n).unwrap();
            let v = DVector::from_fn(n, |_, _| 0.2 + rng.uniform());
            let w = WeightVector::new(v.clone()).unwrap();
            let mut x = DVector::zeros(n);
            x[0] = 1.0;
            x[2] = -0.5;
            let s = support_signs(&x, DEFAULT_REL_THRESHOLD);
            let g = gaussian_vector(&mut rng, n);
            let d = cone_distance_sq(&op, &w, &x, &g).unwrap();
            assert!(d.converged);
            let oracle = identity_distance(&g, &v, &s);
            assert!((d.dist_sq - oracle).abs() < 1e-6, "{} vs {}", d.dist_sq, oracle);
        }
    }

    #[test]
    fn dense_point_is_a_ray() {
        // K is the ray through Omega^T s; dist^2 = |g|^2 - (<g, a>_+)^2 / |a|^2
        let mut rng = Rng::new(5);
        let omega = gaussian_matrix(&mut rng, 5, 5);
        let op = make_operator(omega).unwrap();
        let w = constant_weights(5).unwrap();
        let x = gaussian_vector(&mut rng, 5);
        let s = support_signs(&op.analyze(&x).unwrap(), DEFAULT_REL_THRESHOLD);
        let a = op.matrix().transpose() * &s;
        for _ in 0..10 {
            let g = gaussian_vector(&mut rng, 5);
            let proj = g.dot(&a).max(0.0);
            let oracle = g.norm_squared() - proj * proj / a.norm_squared();
            let d = cone_distance_sq(&op, &w, &x, &g).unwrap();
            assert!((d.dist_sq - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn one_sparse_in_the_plane() {
        // descent cone and normal cone are both quarter planes: sdim = 1
        let op = identity_operator(2).unwrap();
        let w = constant_weights(2).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let est = empirical_sdim(&op, &w, &x, 20000, &mut Rng::new(12)).unwrap();
        assert!((est.estimate - 1.0).abs() <= 3.0 * est.stderr, "{est:?}");

        let mut rng = Rng::new(13);
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_element(2, 1.0);
        let k = 20000;
        let brute = (0..k)
            .map(|_| identity_distance(&gaussian_vector(&mut rng, 2), &v, &s))
            .sum::<f64>()
            / k as f64;
        assert!((brute - 1.0).abs() < 0.05, "{brute}");
    }

    #[test]
    fn estimator_is_seeded() {
        let op = identity_operator(6).unwrap();
        let w = constant_weights(6).unwrap();
        let mut x = DVector::zeros(6);
        x[1] = 1.0;
        let a = empirical_sdim(&op, &w, &x, 200, &mut Rng::new(3)).unwrap();
        let b = empirical_sdim(&op, &w, &x, 200, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(empirical_sdim(&op, &w, &x, 0, &mut Rng::new(3)).is_err());
    }
}
