//! Equality-constrained weighted l1 analysis recovery,
//! `min_z sum_i v_i |(Omega z)_i|  s.t.  A z = y`.
//!
//! The main solver is ADMM on the split `w = Omega z`. The constraint is
//! eliminated up front: with `A = U S V^T` (rank `r`) every feasible point is
//! `z0 + N xi`, `z0 = V S^-1 U^T y`, `N` an orthonormal basis of `null(A)`.
//! The `z`-update is then an unconstrained least-squares problem in `xi`
//! whose normal matrix does not involve the penalty `rho`, so one Cholesky
//! factorization serves every iteration and every `rho` change.
//!
//! [`lp_oracle`] solves the same problem as a linear program for
//! cross-checking on small instances.

use log::debug;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{gaussian_matrix, orthonormal_null_basis, Rng, RANK_TOL};
use crate::operators::AnalysisOperator;
use crate::weights::WeightVector;

/// `min sum v_i |(Omega z)_i|` subject to `A z = y`.
#[derive(Clone, Debug)]
pub struct RecoveryProblem<'a> {
    pub op: &'a AnalysisOperator,
    pub weights: &'a WeightVector,
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl<'a> RecoveryProblem<'a> {
    pub fn new(
        op: &'a AnalysisOperator,
        weights: &'a WeightVector,
        a: DMatrix<f64>,
        y: DVector<f64>,
    ) -> Result<Self> {
        weights.check_len(op.p())?;
        if a.ncols() != op.n() {
            return Err(Error::DimensionMismatch {
                context: "measurement matrix columns",
                expected: op.n(),
                actual: a.ncols(),
            });
        }
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "observation length",
                expected: a.nrows(),
                actual: y.len(),
            });
        }
        Ok(RecoveryProblem { op, weights, a, y })
    }

    /// `sum_i v_i |(Omega z)_i|`.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        weighted_l1(self.weights.values(), &(self.op.matrix() * z))
    }
}

fn weighted_l1(v: &DVector<f64>, d: &DVector<f64>) -> f64 {
    v.iter().zip(d.iter()).map(|(w, x)| w * x.abs()).sum()
}

/// Iterations between penalty updates. Frequent updates stall the
/// iteration on degenerate instances.
pub const RHO_ADAPT_INTERVAL: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Snap the final iterate onto the face of the detected zero pattern
    /// when that does not raise the objective.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            max_iters: 20_000,
            polish: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    Infeasible,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub z_hat: DVector<f64>,
    pub objective: f64,
    /// `|A z - y|_2`.
    pub eq_residual: f64,
    /// `|Omega z - w|_2` at the last iteration.
    pub split_residual: f64,
    /// Dual residual restricted to `null(A)` at the last iteration.
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolverStatus,
    pub rho: f64,
    /// `A` had dependent rows (removed before solving).
    pub rank_deficient: bool,
    pub polished: bool,
}

/// `m x n` i.i.d. standard normal measurement matrix.
pub fn gaussian_measurements(n: usize, m: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    if n == 0 || m == 0 {
        return Err(Error::domain(format!(
            "measurement matrix needs m, n >= 1, got m = {m}, n = {n}"
        )));
    }
    Ok(gaussian_matrix(rng, m, n))
}

/// `|x_true - z_hat|_2`.
pub fn recovery_error(x_true: &DVector<f64>, result: &SolverResult) -> Result<f64> {
    if x_true.len() != result.z_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "recovery error",
            expected: x_true.len(),
            actual: result.z_hat.len(),
        });
    }
    Ok((x_true - &result.z_hat).norm())
}

fn soft_threshold(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

/// Feasible set `{ z0 + N xi }` of `A z = y`.
struct AffineSet {
    z0: DVector<f64>,
    null: DMatrix<f64>,
    rank_deficient: bool,
    consistent: bool,
}

fn affine_solution_set(a: &DMatrix<f64>, y: &DVector<f64>) -> AffineSet {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors");
    let v_t = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.max();
    let mut z0 = DVector::zeros(n);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if smax > 0.0 && s > RANK_TOL * smax {
            rank += 1;
            let coef = u.column(k).dot(y) / s;
            z0 += v_t.row(k).transpose() * coef;
        }
    }
    let null = if rank == 0 {
        DMatrix::identity(n, n)
    } else {
        orthonormal_null_basis(a)
    };
    let residual = (a * &z0 - y).norm();
    AffineSet {
        z0,
        null,
        rank_deficient: rank < m,
        consistent: residual <= 1e-8 * (1.0 + y.norm()),
    }
}

/// ADMM for the weighted l1 analysis problem.
pub fn solve_weighted_l1_analysis(
    prob: &RecoveryProblem<'_>,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let op = prob.op;
    let omega = op.matrix();
    let v = prob.weights.values();
    let p = op.p();
    let affine = affine_solution_set(&prob.a, &prob.y);
    let finish = |z: DVector<f64>, status, iterations, split, dual, rho, polished| {
        let eq_residual = (&prob.a * &z - &prob.y).norm();
        SolverResult {
            objective: prob.objective(&z),
            z_hat: z,
            eq_residual,
            split_residual: split,
            dual_residual: dual,
            iterations,
            status,
            rho,
            rank_deficient: affine.rank_deficient,
            polished,
        }
    };
    if !affine.consistent {
        return Ok(finish(
            affine.z0.clone(),
            SolverStatus::Infeasible,
            0,
            0.0,
            0.0,
            1.0,
            false,
        ));
    }
    let k = affine.null.ncols();
    if k == 0 {
        return Ok(finish(
            affine.z0.clone(),
            SolverStatus::Converged,
            0,
            0.0,
            0.0,
            1.0,
            false,
        ));
    }

    let proj = omega * &affine.null; // Omega N, p x k
    let base = omega * &affine.z0; // Omega z0
    let normal = proj.transpose() * &proj;
    let chol = match normal.clone().cholesky() {
        Some(c) => c,
        None => {
            // Omega is not injective on null(A); a small ridge keeps the
            // xi-update well posed.
            let ridge = 1e-12 * normal.trace().max(1.0) / k as f64;
            debug!("z-update normal matrix singular, adding ridge {ridge:e}");
            (normal + DMatrix::identity(k, k) * ridge)
                .cholesky()
                .ok_or_else(|| Error::domain("analysis operator degenerate on null(A)"))?
        }
    };

    let mut rho = 1.0;
    let mut xi = DVector::zeros(k);
    let mut w = base.clone();
    let mut u = DVector::zeros(p);
    let mut d = base.clone();
    let mut best = (f64::INFINITY, affine.z0.clone());
    let mut split = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut status = SolverStatus::MaxIters;
    let mut iterations = opts.max_iters;
    let sqrt_p = (p as f64).sqrt();
    let sqrt_k = (k as f64).sqrt();
    for it in 1..=opts.max_iters {
        // z-update
        let rhs = proj.transpose() * (&w - &u - &base);
        xi = chol.solve(&rhs);
        d = &base + &proj * &xi;

        let obj = weighted_l1(v, &d);
        if obj < best.0 {
            best = (obj, &affine.z0 + &affine.null * &xi);
        }

        // w-update
        let w_prev = w.clone();
        for i in 0..p {
            w[i] = soft_threshold(d[i] + u[i], v[i] / rho);
        }
        // dual update
        u += &d - &w;

        split = (&d - &w).norm();
        dual = rho * (proj.transpose() * (&w - &w_prev)).norm();
        let eps_pri = sqrt_p * opts.tol_abs + opts.tol_rel * d.norm().max(w.norm());
        let eps_dual = sqrt_k * opts.tol_abs + opts.tol_rel * rho * (proj.transpose() * &u).norm();
        if split <= eps_pri && dual <= eps_dual {
            status = SolverStatus::Converged;
            iterations = it;
            break;
        }
        if it % RHO_ADAPT_INTERVAL == 0 {
            if split > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * split {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    let _ = d;

    let z_last = &affine.z0 + &affine.null * &xi;
    let last_obj = prob.objective(&z_last);
    let (mut obj, mut z) = if last_obj <= best.0 {
        (last_obj, z_last)
    } else {
        best
    };

    let mut polished = false;
    if opts.polish {
        let zeros: Vec<usize> = (0..p).filter(|&i| w[i] == 0.0).collect();
        if let Some(zp) = polish(omega, &affine, &z, &zeros) {
            let obj_p = prob.objective(&zp);
            if obj_p <= obj * (1.0 + 1e-12) + 1e-15 {
                z = zp;
                obj = obj_p;
                polished = true;
            }
        }
    }
    debug!(
        "admm: {} after {iterations} iterations, objective {obj:.12e}, rho {rho}",
        status.as_str()
    );
    Ok(finish(z, status, iterations, split, dual, rho, polished))
}

/// Closest feasible point to `z` with `(Omega z)_i = 0` for `i` in `zeros`,
/// if one exists.
fn polish(
    omega: &DMatrix<f64>,
    affine: &AffineSet,
    z: &DVector<f64>,
    zeros: &[usize],
) -> Option<DVector<f64>> {
    if zeros.is_empty() {
        return None;
    }
    let oz = omega.select_rows(zeros.iter());
    let m = &oz * &affine.null;
    let rhs = -(&oz * z);
    let scale = (omega * z).amax().max(1e-300);
    let svd = m.svd(true, true);
    let delta = svd.solve(&rhs, RANK_TOL * svd.singular_values.max()).ok()?;
    let zp = z + &affine.null * delta;
    if (&oz * &zp).amax() <= 1e-10 * scale {
        Some(zp)
    } else {
        None
    }
}

/// Largest `n + p` accepted by [`lp_oracle`].
pub const LP_ORACLE_MAX_SIZE: usize = 64;

/// Exact LP reformulation
/// `min sum v_i s_i  s.t.  -s <= Omega z <= s, A z = y`,
/// solved by the dense simplex of `minilp`.
pub fn lp_oracle(prob: &RecoveryProblem<'_>) -> Result<(f64, DVector<f64>)> {
    let op = prob.op;
    let (p, n) = (op.p(), op.n());
    if n + p > LP_ORACLE_MAX_SIZE {
        return Err(Error::domain(format!(
            "LP oracle is for tiny instances (n + p <= {LP_ORACLE_MAX_SIZE}), got {}",
            n + p
        )));
    }
    let omega = op.matrix();
    let v = prob.weights.values();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let z: Vec<_> = (0..n)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let s: Vec<_> = (0..p).map(|i| lp.add_var(v[i], (0.0, f64::INFINITY))).collect();
    for i in 0..p {
        let mut upper: Vec<_> = (0..n).map(|j| (z[j], omega[(i, j)])).collect();
        upper.push((s[i], -1.0));
        lp.add_constraint(upper.as_slice(), ComparisonOp::Le, 0.0);
        let mut lower: Vec<_> = (0..n).map(|j| (z[j], -omega[(i, j)])).collect();
        lower.push((s[i], -1.0));
        lp.add_constraint(lower.as_slice(), ComparisonOp::Le, 0.0);
    }
    for k in 0..prob.a.nrows() {
        let row: Vec<_> = (0..n).map(|j| (z[j], prob.a[(k, j)])).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, prob.y[k]);
    }
    let solution = lp.solve().map_err(|e| match e {
        minilp::Error::Infeasible => Error::Lp("infeasible"),
        minilp::Error::Unbounded => Error::Lp("unbounded"),
    })?;
    let zhat = DVector::from_iterator(n, z.iter().map(|&var| solution[var]));
    Ok((solution.objective(), zhat))
}
