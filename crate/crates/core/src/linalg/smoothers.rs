//! Diagonally scaled smoothing iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, SparseMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_JACOBI_DAMPING: f64 = 2.0 / 3.0;
pub const POWER_ITERATIONS: usize = 20;
pub const POWER_SEED: u64 = 0x5eed;
pub const SPECTRAL_SAFETY: f64 = 1.2;
pub const SPECTRAL_RATIO: f64 = 30.0;

pub(crate) fn inverse_diagonal(a: &SparseMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d == 0.0 || !d.is_finite() {
                Err(Error::ZeroDiagonal(i))
            } else {
                Ok(1.0 / d)
            }
        })
        .collect()
}

fn check_dims(a: &SparseMatrix, rhs: &[f64], x0: &[f64]) -> Result<()> {
    for len in [rhs.len(), x0.len()] {
        if len != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: len,
            });
        }
    }
    Ok(())
}

/// One damped Jacobi sweep `x += ω D⁻¹ (b - A x)` using scratch `r`.
pub(crate) fn jacobi_sweep(
    a: &SparseMatrix,
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    omega: f64,
    r: &mut [f64],
) {
    a.residual_into(b, x, r);
    for ((xi, ri), di) in x.iter_mut().zip(r.iter()).zip(inv_diag) {
        *xi += omega * (di * ri);
    }
}

/// Sweeps of a Chebyshev polynomial of fixed degree in `D⁻¹A` targeting
/// `[lo, hi]`, as a reusable operator.
#[derive(Debug, Clone)]
pub(crate) struct Chebyshev {
    pub inv_diag: Vec<f64>,
    pub degree: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Chebyshev {
    pub fn new(a: &SparseMatrix, degree: usize, (lo, hi): (f64, f64)) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidBounds { lo, hi });
        }
        if degree == 0 {
            return Err(Error::InvalidConfig(
                "Chebyshev degree must be at least 1".into(),
            ));
        }
        Ok(Self {
            inv_diag: inverse_diagonal(a)?,
            degree,
            lo,
            hi,
        })
    }

    /// One degree-`degree` sweep.
    pub fn sweep(&self, a: &SparseMatrix, b: &[f64], x: &mut [f64], r: &mut [f64], d: &mut [f64]) {
        let theta = 0.5 * (self.hi + self.lo);
        let delta = 0.5 * (self.hi - self.lo);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let omega = 1.0 / theta;
        a.residual_into(b, x, r);
        for ((di, ri), inv) in d.iter_mut().zip(r.iter()).zip(&self.inv_diag) {
            *di = omega * (inv * ri);
        }
        for k in 0..self.degree {
            for (xi, di) in x.iter_mut().zip(d.iter()) {
                *xi += di;
            }
            if k + 1 == self.degree {
                break;
            }
            a.residual_into(b, x, r);
            let rho_new = 1.0 / (2.0 * sigma - rho);
            let c1 = rho_new * rho;
            let c2 = 2.0 * rho_new / delta;
            for ((di, ri), inv) in d.iter_mut().zip(r.iter()).zip(&self.inv_diag) {
                *di = c1 * *di + c2 * (inv * ri);
            }
            rho = rho_new;
        }
    }
}

/// `steps` sweeps of damped Jacobi, `x_{k+1} = x_k + ω D⁻¹(rhs - A x_k)`.
pub fn jacobi_smooth(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: &[f64],
    steps: usize,
    damping: f64,
) -> Result<Vec<f64>> {
    check_dims(a, rhs, x0)?;
    let inv = inverse_diagonal(a)?;
    let mut x = x0.to_vec();
    let mut r = vec![0.0; x.len()];
    for _ in 0..steps {
        jacobi_sweep(a, &inv, rhs, &mut x, damping, &mut r);
    }
    Ok(x)
}

/// `steps` sweeps of the degree-`degree` Chebyshev iteration on `D⁻¹A`
/// targeting `eig_bounds = (lo, hi)`.
pub fn chebyshev_smooth(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: &[f64],
    steps: usize,
    degree: usize,
    eig_bounds: (f64, f64),
) -> Result<Vec<f64>> {
    check_dims(a, rhs, x0)?;
    let cheb = Chebyshev::new(a, degree, eig_bounds)?;
    let mut x = x0.to_vec();
    let mut r = vec![0.0; x.len()];
    let mut d = vec![0.0; x.len()];
    for _ in 0..steps {
        cheb.sweep(a, rhs, &mut x, &mut r, &mut d);
    }
    Ok(x)
}

/// Smoothing window for Chebyshev: `hi` is 1.2 times a 20-step power-iteration
/// estimate of the largest eigenvalue of `D⁻¹A`; `lo = hi / 30`.
pub fn estimate_spectral_bounds(a: &SparseMatrix) -> Result<(f64, f64)> {
    let inv = inverse_diagonal(a)?;
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidConfig("empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut ax = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        a.mul_into(&x, &mut ax);
        // Rayleigh quotient of D⁻¹A in the D inner product
        let dx: f64 = x.iter().zip(&inv).map(|(xi, di)| xi * xi / di).sum();
        estimate = dot(&ax, &x) / dx;
        for ((xi, ai), di) in x.iter_mut().zip(&ax).zip(&inv) {
            *xi = ai * di;
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            break;
        }
        for xi in x.iter_mut() {
            *xi /= nrm;
        }
    }
    let hi = SPECTRAL_SAFETY * estimate;
    Ok((hi / SPECTRAL_RATIO, hi))
}
