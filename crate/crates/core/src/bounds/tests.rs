use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::math::{gaussian_matrix, gaussian_vector, Rng};
use crate::operators::{gen_random_frame, identity_operator, make_operator};
use crate::priors::sgn;
use crate::weights::constant_weights;

fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// h straight from its definition, with `erf - 1` (no erfc).
fn h_direct(t: f64) -> f64 {
    (2.0 / PI).sqrt() * (-t * t / 2.0).exp() / t + erf(t / 2f64.sqrt()) - 1.0
}

/// Naive double loop over all (i, j) with explicit support indicators.
fn lemma1_naive(omega: &DMatrix<f64>, v: &[f64], x: &DVector<f64>, t: f64, lam: f64) -> f64 {
    let (p, n) = omega.shape();
    let d = omega * x;
    let cutoff = 1e-8 * d.amax();
    let on: Vec<bool> = d.iter().map(|z| z.abs() > cutoff).collect();
    let row = |i: usize| omega.row(i).transpose();
    let mut total = n as f64;
    for i in 0..p {
        for j in 0..p {
            let ip = row(i).dot(&row(j));
            if on[i] && on[j] {
                total += lam * lam * (t * v[i]) * (t * v[j]) * ip * sgn(d[i]) * sgn(d[j]);
            }
            if !on[i] && !on[j] {
                let vmin = v[i].min(v[j]);
                let vmax = v[i].max(v[j]);
                let hij = ip * ip / (row(i).norm() * row(j).norm());
                total += lam
                    * lam
                    * hij
                    * (erf(t * vmin / 2f64.sqrt()) - h_direct(t * vmax) * (t * v[i]) * (t * v[j]));
            }
        }
        if !on[i] {
            total -= 2.0 * lam * row(i).norm() * erf(t * v[i] / 2f64.sqrt());
        }
    }
    total
}

/// Unit-weight grouping: `n + t^2 l^2 (|Omega_S^T s_S|^2 - h(t) sum H)
/// + (l^2 sum H - 2 l sum |w_i|) erf(t/sqrt2)` with sums over the cosupport.
fn unit_weight_grouping(omega: &DMatrix<f64>, x: &DVector<f64>, t: f64, lam: f64) -> f64 {
    let (p, n) = omega.shape();
    let d = omega * x;
    let cutoff = 1e-8 * d.amax();
    let on: Vec<usize> = (0..p).filter(|&i| d[i].abs() > cutoff).collect();
    let off: Vec<usize> = (0..p).filter(|&i| d[i].abs() <= cutoff).collect();
    let mut back = DVector::zeros(n);
    for &i in &on {
        back += omega.row(i).transpose() * sgn(d[i]);
    }
    let mut hsum = 0.0;
    let mut norm_sum = 0.0;
    for &i in &off {
        norm_sum += omega.row(i).norm();
        for &j in &off {
            let ip = omega.row(i).dot(&omega.row(j));
            hsum += ip * ip / (omega.row(i).norm() * omega.row(j).norm());
        }
    }
    n as f64 + t * t * lam * lam * (back.norm_squared() - h_direct(t) * hsum)
        + (lam * lam * hsum - 2.0 * lam * norm_sum) * erf(t / 2f64.sqrt())
}

/// Term-by-term double loop for A and B.
fn expected_naive(omega: &DMatrix<f64>, beta: &[f64], sigma: &[f64], u: &[f64]) -> (f64, f64) {
    let p = omega.nrows();
    let nrm = |i: usize| omega.row(i).norm();
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..p {
        b += nrm(i) * erf(u[i] / 2f64.sqrt()) * (1.0 - beta[i]);
        a += u[i] * u[i] * nrm(i).powi(2) * beta[i];
        a += nrm(i).powi(2) * (erf(u[i] / 2f64.sqrt()) - h_direct(u[i]) * u[i] * u[i]) * (1.0 - beta[i]);
        for j in 0..p {
            if i == j {
                continue;
            }
            let ip = omega.row(i).dot(&omega.row(j));
            a += u[i] * u[j] * ip * sigma[i] * sigma[j] * beta[i] * beta[j];
            let hij = ip * ip / (nrm(i) * nrm(j));
            a += hij
                * (erf(u[i].min(u[j]) / 2f64.sqrt()) - h_direct(u[i].max(u[j])) * u[i] * u[j])
                * (1.0 - beta[i])
                * (1.0 - beta[j]);
        }
    }
    (a, b)
}

fn random_sparse_signal(op: &AnalysisOperator, rng: &mut Rng, keep: usize) -> DVector<f64> {
    // zero the first rows of Omega x by projecting onto their null space
    let off: Vec<usize> = (0..op.p() - keep).collect();
    let basis = crate::math::orthonormal_null_basis(&op.select_rows(&off));
    let c = gaussian_vector(rng, basis.ncols());
    basis * c
}

#[test]
fn lemma1_matches_naive_loop() {
    let mut rng = Rng::new(101);
    for _ in 0..10 {
        let op = make_operator(gaussian_matrix(&mut rng, 12, 8)).unwrap();
        let x = random_sparse_signal(&op, &mut rng, 7);
        let v: Vec<f64> = (0..12).map(|_| 0.1 + rng.uniform()).collect();
        let w = WeightVector::new(DVector::from_vec(v.clone())).unwrap();
        let t = 0.2 + 2.0 * rng.uniform();
        let lam = 0.2 + 2.0 * rng.uniform();
        let fast = lemma1_objective(&op, &w, &x, t, lam).unwrap();
        let slow = lemma1_naive(op.matrix(), &v, &x, t, lam);
        assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow.abs()), "{fast} vs {slow}");
    }
}

#[test]
fn lemma1_unit_weights_match_grouping() {
    let mut rng = Rng::new(102);
    for _ in 0..20 {
        let op = make_operator(gaussian_matrix(&mut rng, 10, 7)).unwrap();
        let x = random_sparse_signal(&op, &mut rng, 6);
        let w = constant_weights(10).unwrap();
        let t = 0.1 + 3.0 * rng.uniform();
        let lam = 0.1 + 3.0 * rng.uniform();
        let a = lemma1_objective(&op, &w, &x, t, lam).unwrap();
        let b = unit_weight_grouping(op.matrix(), &x, t, lam);
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn lemma1_dense_support_is_quadratic_form() {
    let mut rng = Rng::new(103);
    let op = make_operator(gaussian_matrix(&mut rng, 5, 5)).unwrap();
    let x = gaussian_vector(&mut rng, 5);
    let v = DVector::from_fn(5, |_, _| 0.5 + rng.uniform());
    let w = WeightVector::new(v.clone()).unwrap();
    let (t, lam) = (0.7, 1.3);
    let s = (op.matrix() * &x).map(sgn);
    let ws = (v * t).component_mul(&s);
    let oracle = 5.0 + lam * lam * ws.dot(&(op.gram() * &ws));
    let got = lemma1_objective(&op, &w, &x, t, lam).unwrap();
    assert!((got - oracle).abs() < 1e-12 * oracle);
}

#[test]
fn lemma1_argument_errors() {
    let op = identity_operator(3).unwrap();
    let w = constant_weights(3).unwrap();
    let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    assert!(lemma1_objective(&op, &w, &x, 0.0, 1.0).is_err());
    assert!(lemma1_objective(&op, &w, &x, 1.0, -1.0).is_err());
    assert!(lemma1_objective(&op, &constant_weights(4).unwrap(), &x, 1.0, 1.0).is_err());
    assert!(lemma1_bound(&op, &w, &DVector::zeros(3)).is_err());
}

#[test]
fn lemma1_bound_dense_identity_is_n() {
    let n = 6;
    let op = identity_operator(n).unwrap();
    let w = constant_weights(n).unwrap();
    let x = DVector::from_element(n, 1.0);
    let r = lemma1_bound(&op, &w, &x).unwrap();
    assert!(r.value <= n as f64);
    assert!((r.value - n as f64).abs() < 1e-6);
    assert!(r.boundary_warning);
}

#[test]
fn lemma1_bound_below_grid_minimum() {
    let mut rng = Rng::new(104);
    let op = gen_random_frame(14, 10, 0.5, 1.5, &mut rng).unwrap();
    let x = random_sparse_signal(&op, &mut rng, 8);
    let w = constant_weights(14).unwrap();
    let r = lemma1_bound(&op, &w, &x).unwrap();
    let mut grid_min = f64::INFINITY;
    for i in 1..=200 {
        for j in 1..=200 {
            let t = 5.0 * i as f64 / 200.0;
            let lam = 5.0 * j as f64 / 200.0;
            grid_min = grid_min.min(lemma1_objective(&op, &w, &x, t, lam).unwrap());
        }
    }
    assert!(r.raw_value <= grid_min + 1e-6);
    assert!(r.raw_value >= grid_min - 0.05);
}

#[test]
fn global_rule_differs_only_with_unequal_weights() {
    let mut rng = Rng::new(105);
    let op = make_operator(gaussian_matrix(&mut rng, 8, 6)).unwrap();
    let x = random_sparse_signal(&op, &mut rng, 5);
    let signs = support_signs(&op.analyze(&x).unwrap(), DEFAULT_REL_THRESHOLD);
    let ones = constant_weights(8).unwrap();
    let a = lemma1_objective_signs(&op, &ones, &signs, 0.8, 1.1, MinMaxRule::Pairwise).unwrap();
    let b = lemma1_objective_signs(&op, &ones, &signs, 0.8, 1.1, MinMaxRule::Global).unwrap();
    assert!((a - b).abs() < 1e-12);
    let uneven = WeightVector::new(DVector::from_fn(8, |i, _| 0.3 + 0.1 * i as f64)).unwrap();
    let a = lemma1_objective_signs(&op, &uneven, &signs, 0.8, 1.1, MinMaxRule::Pairwise).unwrap();
    let b = lemma1_objective_signs(&op, &uneven, &signs, 0.8, 1.1, MinMaxRule::Global).unwrap();
    assert!((a - b).abs() > 1e-6);
}

#[test]
fn expected_terms_match_naive_loop() {
    let mut rng = Rng::new(106);
    for _ in 0..10 {
        let omega = gaussian_matrix(&mut rng, 9, 6);
        let op = make_operator(omega.clone()).unwrap();
        let beta: Vec<f64> = (0..9).map(|_| rng.uniform()).collect();
        let sigma: Vec<f64> = beta.iter().map(|b| b * (2.0 * rng.uniform() - 1.0)).collect();
        let prior = Prior::new(DVector::from_vec(beta.clone()), DVector::from_vec(sigma.clone())).unwrap();
        let u: Vec<f64> = (0..9).map(|_| 0.05 + 3.0 * rng.uniform()).collect();
        let terms = expected_terms(&op, &prior, &DVector::from_vec(u.clone())).unwrap();
        let (a, b) = expected_naive(&omega, &beta, &sigma, &u);
        assert!((terms.a - a).abs() <= 1e-12 * (1.0 + a.abs()));
        assert!((terms.b - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn expected_terms_full_support() {
    let mut rng = Rng::new(107);
    let op = make_operator(gaussian_matrix(&mut rng, 5, 4)).unwrap();
    let sigma = DVector::from_vec(vec![0.5, -1.0, 0.2, 0.0, 1.0]);
    let prior = Prior::new(DVector::from_element(5, 1.0), sigma.clone()).unwrap();
    let u = DVector::from_fn(5, |i, _| 0.5 + 0.3 * i as f64);
    let terms = expected_terms(&op, &prior, &u).unwrap();
    assert_eq!(terms.b, 0.0);
    let mut a = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            a += if i == j {
                u[i] * u[i] * op.row_norms()[i].powi(2)
            } else {
                u[i] * u[j] * op.gram()[(i, j)] * sigma[i] * sigma[j]
            };
        }
    }
    assert!((terms.a - a).abs() < 1e-12 * a.abs());
}

#[test]
fn expected_terms_no_support_identity() {
    let n = 7;
    let op = identity_operator(n).unwrap();
    let prior = Prior::uniform(n, 0.0).unwrap();
    let u = 1.3;
    let terms = expected_terms(&op, &prior, &DVector::from_element(n, u)).unwrap();
    let e = erf(u / 2f64.sqrt());
    assert!((terms.a - n as f64 * (e - h_direct(u) * u * u)).abs() < 1e-12);
    assert!((terms.b - n as f64 * e).abs() < 1e-12);
    assert!(expected_terms(&op, &prior, &DVector::from_element(n, 0.0)).is_err());
}

#[test]
fn expected_bound_scale_invariant() {
    let mut rng = Rng::new(108);
    let op = gen_random_frame(12, 10, 0.5, 1.5, &mut rng).unwrap();
    let prior = Prior::ramp(12, 0.8, 0.1).unwrap();
    let v = WeightVector::new(DVector::from_fn(12, |i, _| 0.3 + 0.05 * i as f64)).unwrap();
    let base = expected_bound(&op, &prior, &v).unwrap().value;
    for c in [0.1, 1.0, 10.0] {
        let scaled = expected_bound(&op, &prior, &v.scaled(c).unwrap()).unwrap().value;
        assert!((scaled - base).abs() <= 1e-6 * base.abs());
    }
}

#[test]
fn expected_bound_without_support_vanishes() {
    let n = 10;
    let op = identity_operator(n).unwrap();
    let prior = Prior::uniform(n, 0.0).unwrap();
    let r = expected_bound(&op, &prior, &constant_weights(n).unwrap()).unwrap();
    assert!(r.value <= 0.05 * n as f64);
}

#[test]
fn expected_bound_full_support_is_n() {
    let n = 5;
    let op = identity_operator(n).unwrap();
    let prior = Prior::uniform(n, 1.0).unwrap();
    let r = expected_bound(&op, &prior, &constant_weights(n).unwrap()).unwrap();
    assert_eq!(r.value, n as f64);
}

/// Symmetric operator `a I + b 11^T`: equal row norms and a constant
/// off-diagonal Gram entry, so the sums collapse to p-fold multiples.
#[test]
fn expected_bound_exchangeable_scalar_reduction() {
    let n = 8;
    let (alpha, bcoef) = (1.0, 0.15);
    let omega = DMatrix::identity(n, n) * alpha + DMatrix::from_element(n, n, bcoef);
    let op = make_operator(omega).unwrap();
    let r2 = alpha * alpha + 2.0 * alpha * bcoef + n as f64 * bcoef * bcoef;
    let c = 2.0 * alpha * bcoef + n as f64 * bcoef * bcoef;
    let (beta, sigma) = (0.3, 0.2);
    let prior = Prior::new(DVector::from_element(n, beta), DVector::from_element(n, sigma)).unwrap();
    let pf = n as f64;
    let reduced = |u: f64| {
        let e = erf(u / 2f64.sqrt());
        let q = e - h_direct(u) * u * u;
        let b = pf * r2.sqrt() * e * (1.0 - beta);
        let a = pf * u * u * r2 * beta
            + pf * (pf - 1.0) * u * u * c * sigma * sigma * beta * beta
            + pf * r2 * q * (1.0 - beta)
            + pf * (pf - 1.0) * (c * c / r2) * q * (1.0 - beta).powi(2);
        pf - b * b / a
    };
    // dense log grid, then ternary refinement
    let mut best = (1.0, f64::INFINITY);
    for k in 0..=20_000 {
        let t = 1e-4 * (5e5f64).powf(k as f64 / 20_000.0);
        let f = reduced(t);
        if f < best.1 {
            best = (t, f);
        }
    }
    let (mut lo, mut hi) = (best.0 * 0.99, best.0 * 1.01);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if reduced(m1) <= reduced(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let oracle = reduced(0.5 * (lo + hi));
    let r = expected_bound(&op, &prior, &constant_weights(n).unwrap()).unwrap();
    assert!((r.raw_value - oracle).abs() <= 1e-10, "{} vs {}", r.raw_value, oracle);
}

#[test]
fn unit_quadratic_lambda() {
    let chk = quadratic_lambda(3, ExpectedTerms { a: 1.0, b: 1.0 }).unwrap();
    assert!((chk.closed - 1.0).abs() < 1e-15);
    assert!((chk.numeric - 1.0).abs() < 1e-5);
    assert!(quadratic_lambda(3, ExpectedTerms { a: 0.0, b: 1.0 }).is_err());
}

#[test]
fn lambda_closed_form_identity() {
    let mut rng = Rng::new(109);
    let op = gen_random_frame(10, 8, 0.5, 1.5, &mut rng).unwrap();
    let prior = Prior::ramp(10, 0.7, 0.1).unwrap();
    let v = constant_weights(10).unwrap();
    let chk = lambda_star_check(&op, &prior, 1.2, &v).unwrap();
    let at_closed = chk.terms.objective(op.n(), chk.closed);
    assert!((at_closed - chk.terms.minimized(op.n())).abs() < 1e-10);
    assert!((chk.closed - chk.numeric).abs() <= 1e-5 * chk.closed.max(1.0));
}

#[test]
fn measurement_window() {
    // log(4/eta) = 2 gives a half-width of 4 sqrt(n)
    let eta = 4.0 * (-2.0f64).exp();
    let (lo, hi) = predicted_measurements(25.0, 25, eta).unwrap();
    assert!((lo - 5.0).abs() < 1e-12 && (hi - 45.0).abs() < 1e-12);
    let (lo, hi) = predicted_measurements(2.0, 4, eta).unwrap();
    assert!(lo == 0.0 && (hi - 10.0).abs() < 1e-12);

    let (lo, _) = predicted_measurements(0.0, 30, 0.1).unwrap();
    assert_eq!(lo, 0.0);

    let (_, hi) = predicted_measurements(15.0, 30, 0.1).unwrap();
    assert!((hi - (15.0 + (240.0 * 40f64.ln()).sqrt())).abs() < 1e-12);
    assert!((hi - 15.0 - 29.7).abs() < 0.1);

    assert!(predicted_measurements(1.0, 30, 0.0).is_err());
    assert!(predicted_measurements(1.0, 30, 1.0).is_err());
    assert!(predicted_measurements(31.0, 30, 0.5).is_err());
}
