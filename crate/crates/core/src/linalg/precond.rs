//! Preconditioners `P⁻¹` for the inverse-iteration step.
//!
//! Every variant is a fixed linear operator: it starts from a zero initial
//! guess and runs a fixed number of sweeps or cycles on `A z = r`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dense::Cholesky;
use super::multigrid::Hierarchy;
use super::smoothers::{
    estimate_spectral_bounds, inverse_diagonal, jacobi_sweep, Chebyshev, DEFAULT_JACOBI_DAMPING,
};
use super::{norm2, SparseMatrix};
use crate::error::{Error, Result};

/// Largest system the `exact` preconditioner factors densely.
pub const EXACT_MAX_DOFS: usize = 2500;

/// Configuration of a preconditioner, independent of any matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrecondSpec {
    Jacobi {
        steps: usize,
        damping: f64,
    },
    Chebyshev {
        steps: usize,
        degree: usize,
    },
    /// `cycles` v-cycles with `smoothing_steps` Jacobi sweeps before and after
    /// the coarse correction.
    Gmg {
        cycles: usize,
        smoothing_steps: usize,
    },
    Exact,
}

impl PrecondSpec {
    pub fn gmg(cycles: usize) -> Self {
        PrecondSpec::Gmg {
            cycles,
            smoothing_steps: 1,
        }
    }

    pub fn needs_hierarchy(&self) -> bool {
        matches!(self, PrecondSpec::Gmg { .. })
    }

    /// Build the operator for the finest level of `hierarchy`.
    pub fn build<'a>(&self, hierarchy: &'a Hierarchy) -> Result<Box<dyn Preconditioner + 'a>> {
        let a = hierarchy.finest_matrix();
        Ok(match *self {
            PrecondSpec::Jacobi { steps, damping } => Box::new(JacobiPrecond {
                a,
                inv_diag: inverse_diagonal(a)?,
                steps,
                damping,
            }),
            PrecondSpec::Chebyshev { steps, degree } => Box::new(ChebyshevPrecond {
                a,
                cheb: Chebyshev::new(a, degree, estimate_spectral_bounds(a)?)?,
                steps,
            }),
            PrecondSpec::Gmg {
                cycles,
                smoothing_steps,
            } => Box::new(GmgPrecond {
                hierarchy,
                cycles,
                smoothing_steps,
            }),
            PrecondSpec::Exact => Box::new(ExactPrecond::new(a)?),
        })
    }
}

impl fmt::Display for PrecondSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecondSpec::Jacobi { steps, damping } => write!(f, "jacobi:{steps}:{damping}"),
            PrecondSpec::Chebyshev { steps, degree } => write!(f, "chebyshev:{steps}:{degree}"),
            PrecondSpec::Gmg {
                cycles,
                smoothing_steps,
            } => write!(f, "gmg:{cycles}:{smoothing_steps}"),
            PrecondSpec::Exact => f.write_str("exact"),
        }
    }
}

/// Parses `exact`, `jacobi:<steps>[:<damping>]`, `chebyshev:<steps>:<degree>`
/// and `gmg:<cycles>[:<smoothing steps>]`.
impl FromStr for PrecondSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("cannot parse preconditioner `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let int = |k: usize| -> Result<usize> {
            parts
                .get(k)
                .ok_or_else(bad)?
                .parse::<usize>()
                .map_err(|_| bad())
        };
        let spec = match parts[0].to_ascii_lowercase().as_str() {
            "exact" if parts.len() == 1 => PrecondSpec::Exact,
            "jacobi" if (2..=3).contains(&parts.len()) => PrecondSpec::Jacobi {
                steps: int(1)?,
                damping: match parts.get(2) {
                    Some(d) => d.parse().map_err(|_| bad())?,
                    None => DEFAULT_JACOBI_DAMPING,
                },
            },
            "chebyshev" if parts.len() == 3 => PrecondSpec::Chebyshev {
                steps: int(1)?,
                degree: int(2)?,
            },
            "gmg" if (2..=3).contains(&parts.len()) => PrecondSpec::Gmg {
                cycles: int(1)?,
                smoothing_steps: if parts.len() == 3 { int(2)? } else { 1 },
            },
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

pub trait Preconditioner: Sync {
    fn dim(&self) -> usize;

    /// `z = P⁻¹ r`
    fn apply_into(&self, r: &[f64], z: &mut [f64]);

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        self.apply_into(r, &mut z);
        z
    }
}

pub struct JacobiPrecond<'a> {
    a: &'a SparseMatrix,
    inv_diag: Vec<f64>,
    steps: usize,
    damping: f64,
}

impl Preconditioner for JacobiPrecond<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        let mut scratch = vec![0.0; r.len()];
        for _ in 0..self.steps {
            jacobi_sweep(self.a, &self.inv_diag, r, z, self.damping, &mut scratch);
        }
    }
}

pub struct ChebyshevPrecond<'a> {
    a: &'a SparseMatrix,
    cheb: Chebyshev,
    steps: usize,
}

impl Preconditioner for ChebyshevPrecond<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        let mut res = vec![0.0; r.len()];
        let mut dir = vec![0.0; r.len()];
        for _ in 0..self.steps {
            self.cheb.sweep(self.a, r, z, &mut res, &mut dir);
        }
    }
}

pub struct GmgPrecond<'a> {
    hierarchy: &'a Hierarchy,
    cycles: usize,
    smoothing_steps: usize,
}

impl Preconditioner for GmgPrecond<'_> {
    fn dim(&self) -> usize {
        self.hierarchy.finest_matrix().nrows()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        for _ in 0..self.cycles {
            self.hierarchy
                .vcycle(r, z, self.smoothing_steps, self.smoothing_steps)
                .expect("dimensions checked by caller");
        }
    }
}

/// Dense Cholesky solve; for small systems and tests.
pub struct ExactPrecond {
    chol: Cholesky,
}

impl ExactPrecond {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() > EXACT_MAX_DOFS {
            return Err(Error::TooLarge {
                n: a.nrows(),
                max: EXACT_MAX_DOFS,
            });
        }
        Ok(Self {
            chol: Cholesky::factor(&a.to_dense(), 0.0)?,
        })
    }
}

impl Preconditioner for ExactPrecond {
    fn dim(&self) -> usize {
        self.chol.dim()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.chol.solve_in_place(z);
    }
}

/// How well `P⁻¹` inverts `A` on the direction `v`:
/// `‖A P⁻¹(Av) - Av‖ / ‖Av‖`, zero for the exact inverse.
pub fn precond_residual(a: &SparseMatrix, p: &dyn Preconditioner, v: &[f64]) -> Result<f64> {
    let av = a.spmv(v)?;
    let nav = norm2(&av);
    if nav == 0.0 {
        return Err(Error::ZeroVector);
    }
    let w = p.apply(&av);
    let mut aw = a.spmv(&w)?;
    for (x, y) in aw.iter_mut().zip(&av) {
        *x -= y;
    }
    Ok(norm2(&aw) / nav)
}
