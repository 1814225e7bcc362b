//! Linear algebra kernels: compressed-row sparse matrices, small dense
//! factorizations and eigensolvers, smoothers, geometric multigrid and the
//! preconditioners built from them.

pub mod dense;
pub mod multigrid;
pub mod precond;
pub mod smoothers;
pub mod sparse;

pub use dense::{dense_generalized_eig, Cholesky, DenseMatrix};
pub use multigrid::Hierarchy;
pub use precond::{precond_residual, PrecondSpec, Preconditioner};
pub use smoothers::{chebyshev_smooth, estimate_spectral_bounds, jacobi_smooth};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// `<Av, v> / <Mv, v>`
pub fn rayleigh_quotient(a: &SparseMatrix, m: &SparseMatrix, v: &[f64]) -> Result<f64> {
    let av = a.spmv(v)?;
    let mv = m.spmv(v)?;
    let den = dot(&mv, v);
    if den == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mu = dot(&av, v) / den;
    if !mu.is_finite() {
        return Err(Error::NonFinite("rayleigh quotient"));
    }
    Ok(mu)
}
