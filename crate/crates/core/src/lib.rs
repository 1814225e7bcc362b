//! Smoothed-adaptive perturbed inverse iteration (SA-PINVIT) for the Laplace
//! eigenvalue problem `-Δu = λu` with homogeneous Dirichlet data on
//! axis-aligned polygonal domains.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: quadtree refinement of tensor-grid quadrilateral meshes with
//!   1-irregular hanging nodes.
//! - [`fem`]: bilinear (Q1) spaces, hanging-node and Dirichlet constraints,
//!   stiffness/mass assembly and inter-mesh prolongation.
//! - [`linalg`]: sparse and dense kernels, Jacobi/Chebyshev smoothers, the
//!   geometric multigrid v-cycle and the preconditioner abstraction.
//! - [`eigensolver`]: PINVIT, block PINVIT and Rayleigh-Ritz projection.
//! - [`estimator`]: explicit residual estimator and cluster reliability report.
//! - [`adaptivity`]: Dörfler marking and the A-PINVIT / SA-PINVIT drivers.
//! - [`oracle`]: independent reference spectra used to validate everything above.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptivity;
pub mod eigensolver;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod oracle;

pub use error::{Error, Result};
