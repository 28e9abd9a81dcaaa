//! Scalar special functions, dense linear-algebra helpers and seeded sampling.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

/// Gauss error function, `2/sqrt(pi) * int_0^x exp(-s^2) ds`.
pub fn erf_fn(x: f64) -> f64 {
    libm::erf(x)
}

/// `h(t) = sqrt(2/pi) exp(-t^2/2) / t + erf(t/sqrt 2) - 1`, for `t > 0`.
///
/// The trailing `erf - 1` is evaluated as `-erfc` so the difference does not
/// cancel for large `t`.
pub fn h_fn(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("h(t) requires finite t > 0, got {t}")));
    }
    Ok(h_unchecked(t))
}

#[inline]
pub(crate) fn h_unchecked(t: f64) -> f64 {
    (2.0 / PI).sqrt() * (-0.5 * t * t).exp() / t - libm::erfc(t * FRAC_1_SQRT_2)
}

/// `erf(u / sqrt 2)`, the probability that a standard normal lands in `[-u, u]`.
#[inline]
pub(crate) fn erf_half(u: f64) -> f64 {
    libm::erf(u * FRAC_1_SQRT_2)
}

/// Number of singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
///
/// Uses a full SVD; a wide matrix is padded with zero rows so that all `n`
/// right singular vectors are available. Returns an `n x 0` matrix when the
/// null space is trivial.
pub fn orthonormal_null_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, n) = m.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(n, n);
    }
    let square = if r < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.rows_mut(0, r).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let null_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax == 0.0 || s <= RANK_TOL * smax)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(n, null_rows.len());
    for (c, &i) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    basis
}

/// Seeded random stream.
///
/// A stream is identified by `(seed, stream)`; [`Rng::split`] gives each
/// Monte Carlo trial its own ChaCha stream so trials can run in any order.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::split(seed, 0)
    }

    pub fn split(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. standard normal draws.
pub fn gaussian_vector(rng: &mut Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.normal())
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // column-major fill order is part of the determinism contract
    DMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Uniform draw from the unit sphere of `R^d`, `d >= 1`.
pub fn unit_sphere(rng: &mut Rng, d: usize) -> DVector<f64> {
    loop {
        let g = gaussian_vector(rng, d);
        let norm = g.norm();
        if norm > 1e-300 {
            return g / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series of erf, summed until terms drop below 1e-18.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf_fn(0.0), 0.0);
        assert!((erf_fn(6.0) - 1.0).abs() <= 1e-12);
        assert!((erf_fn(1.0) - 0.842700792949715).abs() <= 1e-12);
        for &x in &[0.1, 0.5, 1.0, 1.7, 2.5, 3.0] {
            assert!((erf_fn(x) - erf_series(x)).abs() <= 1e-12, "x = {x}");
        }
    }

    #[test]
    fn h_reference_values() {
        assert!(h_fn(50.0).unwrap().abs() <= 1e-10);
        assert!(h_fn(1e-8).unwrap() > 1e7);
        // sqrt(2/pi) e^{-1/2} = 0.48394144903828673, erf(1/sqrt2) = 0.6826894921370859
        let direct = 0.48394144903828673 + 0.6826894921370859 - 1.0;
        assert!((h_fn(1.0).unwrap() - direct).abs() <= 1e-12);
        assert!((h_fn(1.0).unwrap() - 0.166632).abs() <= 1e-5);
    }

    #[test]
    fn h_rejects_nonpositive() {
        assert!(h_fn(0.0).is_err());
        assert!(h_fn(-1.0).is_err());
        assert!(h_fn(f64::NAN).is_err());
    }

    #[test]
    fn null_basis_of_zero_row() {
        let m = DMatrix::zeros(1, 3);
        let b = orthonormal_null_basis(&m);
        assert_eq!(b.shape(), (3, 3));
        assert!((b.transpose() * &b - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn null_basis_of_identity_is_empty() {
        let b = orthonormal_null_basis(&DMatrix::identity(3, 3));
        assert_eq!(b.ncols(), 0);
    }

    #[test]
    fn null_basis_of_single_row() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let b = orthonormal_null_basis(&m);
        assert_eq!(b.shape(), (3, 2));
        assert!((&m * &b).norm() <= 1e-10 * m.norm());
        assert!((b.transpose() * &b - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn gaussian_determinism() {
        let a = gaussian_vector(&mut Rng::new(11), 4);
        let b = gaussian_vector(&mut Rng::new(11), 4);
        assert_eq!(a, b);
        let c = gaussian_vector(&mut Rng::split(11, 1), 4);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_moments() {
        let g = gaussian_vector(&mut Rng::new(3), 100_000);
        let mean = g.mean();
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g.len() - 1) as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn gaussian_sign_symmetry() {
        let mut rng = Rng::new(5);
        let pos = (0..100_000)
            .filter(|_| gaussian_vector(&mut rng, 1)[0] > 0.0)
            .count();
        assert!((pos as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(8);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
