//! Geometric multigrid over a sequence of nested finite element spaces.
//!
//! Levels are added finest-last together with the prolongation from the
//! previous level. The coarsest level used by a cycle is the finest level
//! whose size does not exceed `coarse_max_dofs`; it is solved by a dense
//! Cholesky factorization.

use super::dense::Cholesky;
use super::smoothers::{inverse_diagonal, jacobi_sweep};
use super::{DenseMatrix, SparseMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_COARSE_MAX_DOFS: usize = 512;
/// Jacobi damping used inside the v-cycle.
pub const DEFAULT_GMG_DAMPING: f64 = 1.0;
/// Largest first level that may be factored densely when nothing smaller exists.
pub const FIRST_LEVEL_MAX_DOFS: usize = 4096;

#[derive(Debug, Clone)]
struct Level {
    a: SparseMatrix,
    inv_diag: Vec<f64>,
    /// From the previous level to this one.
    prolongation: Option<SparseMatrix>,
    restriction: Option<SparseMatrix>,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    coarse: Option<(usize, Cholesky)>,
    coarse_max_dofs: usize,
    damping: f64,
}

impl Hierarchy {
    pub fn new(a: SparseMatrix) -> Result<Self> {
        Self::with_options(a, DEFAULT_COARSE_MAX_DOFS, DEFAULT_GMG_DAMPING)
    }

    pub fn with_options(a: SparseMatrix, coarse_max_dofs: usize, damping: f64) -> Result<Self> {
        if !(damping > 0.0 && damping < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "multigrid Jacobi damping {damping} outside (0, 2)"
            )));
        }
        let mut h = Self {
            levels: Vec::new(),
            coarse: None,
            coarse_max_dofs,
            damping,
        };
        h.add(a, None)?;
        Ok(h)
    }

    /// Append a finer level; `prolongation` maps the current finest space into it.
    pub fn push_level(&mut self, a: SparseMatrix, prolongation: SparseMatrix) -> Result<()> {
        let prev = self.finest_matrix().nrows();
        if prolongation.ncols() != prev || prolongation.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: prev,
                got: prolongation.ncols(),
            });
        }
        self.add(a, Some(prolongation))
    }

    fn add(&mut self, a: SparseMatrix, prolongation: Option<SparseMatrix>) -> Result<()> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let inv_diag = inverse_diagonal(&a)?;
        let restriction = prolongation.as_ref().map(SparseMatrix::transpose);
        self.levels.push(Level {
            a,
            inv_diag,
            prolongation,
            restriction,
        });
        let k = self.levels.len() - 1;
        let fits = self.levels[k].a.nrows() <= self.coarse_max_dofs;
        let coarse_index = match &self.coarse {
            None => Some(0),
            Some((c, _)) if fits && k > *c => Some(k),
            _ => None,
        };
        if let Some(c) = coarse_index {
            let n = self.levels[c].a.nrows();
            if n > self.coarse_max_dofs.max(FIRST_LEVEL_MAX_DOFS) {
                return Err(Error::TooLarge {
                    n,
                    max: self.coarse_max_dofs.max(FIRST_LEVEL_MAX_DOFS),
                });
            }
            let dense = self.levels[c].a.to_dense();
            self.coarse = Some((c, Cholesky::factor(&dense, 0.0)?));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Index of the level solved directly.
    pub fn coarsest_level(&self) -> usize {
        self.coarse.as_ref().map_or(0, |(c, _)| *c)
    }

    pub fn finest_matrix(&self) -> &SparseMatrix {
        &self.levels.last().expect("hierarchy has a level").a
    }

    pub fn level_matrix(&self, k: usize) -> &SparseMatrix {
        &self.levels[k].a
    }

    pub fn prolongation(&self, k: usize) -> Option<&SparseMatrix> {
        self.levels[k].prolongation.as_ref()
    }

    /// One v-cycle on the finest level, updating `x` in place.
    pub fn vcycle(&self, rhs: &[f64], x: &mut [f64], pre: usize, post: usize) -> Result<()> {
        let n = self.finest_matrix().nrows();
        for len in [rhs.len(), x.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        self.cycle(self.levels.len() - 1, rhs, x, pre, post);
        Ok(())
    }

    fn cycle(&self, k: usize, b: &[f64], x: &mut [f64], pre: usize, post: usize) {
        let level = &self.levels[k];
        let n = b.len();
        let mut r = vec![0.0; n];
        let (c, chol) = self.coarse.as_ref().expect("coarse factor exists");
        if k == *c {
            level.a.residual_into(b, x, &mut r);
            chol.solve_in_place(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
            return;
        }
        for _ in 0..pre {
            jacobi_sweep(&level.a, &level.inv_diag, b, x, self.damping, &mut r);
        }
        level.a.residual_into(b, x, &mut r);
        let restriction = level
            .restriction
            .as_ref()
            .expect("non-coarse level has a transfer");
        let prolongation = level
            .prolongation
            .as_ref()
            .expect("non-coarse level has a transfer");
        let mut rc = vec![0.0; restriction.nrows()];
        restriction.mul_into(&r, &mut rc);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(k - 1, &rc, &mut ec, pre, post);
        prolongation.mul_into(&ec, &mut r);
        for (xi, ei) in x.iter_mut().zip(&r) {
            *xi += ei;
        }
        for _ in 0..post {
            jacobi_sweep(&level.a, &level.inv_diag, b, x, self.damping, &mut r);
        }
    }

    /// Dense copy of the coarse factorization's matrix (test support).
    pub fn coarse_dense(&self) -> DenseMatrix {
        self.levels[self.coarsest_level()].a.to_dense()
    }
}

/// One v-cycle with `pre`/`post` Jacobi sweeps starting from `x0`.
pub fn gmg_vcycle(
    hierarchy: &Hierarchy,
    rhs: &[f64],
    x0: &[f64],
    pre: usize,
    post: usize,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    hierarchy.vcycle(rhs, &mut x, pre, post)?;
    Ok(x)
}
