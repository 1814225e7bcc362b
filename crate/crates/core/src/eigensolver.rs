//! Preconditioned inverse iteration for `A u = λ M u`.
//!
//! [`pinvit`] iterates a single vector
//! `v ← v - P⁻¹(Av - μ(v) Mv)` and [`bpinvit`] a block of `r` vectors with a
//! Rayleigh-Ritz step after every sweep. All vectors live in the reduced
//! (free-dof) space of the matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::dense::{Cholesky, CHOLESKY_REL_PIVOT};
use crate::linalg::{
    axpy, dense_generalized_eig, dot, norm2, precond_residual, DenseMatrix, Preconditioner,
    SparseMatrix,
};

/// Largest system [`error_propagation_check`] inverts densely.
pub const DENSE_CHECK_MAX: usize = 2000;

/// Relative norm below which a column counts as linearly dependent.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// M-normalized.
    pub vector: Vec<f64>,
    /// `‖Av - μMv‖`
    pub residual_norm: f64,
}

/// M-orthonormal Ritz vectors with ascending Ritz values.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBlock {
    pub vectors: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    /// Whether the stopping rule fired before `max_iter`.
    pub converged: bool,
}

impl EigenBlock {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pair(&self, i: usize) -> EigenPair {
        EigenPair {
            value: self.values[i],
            vector: self.vectors[i].clone(),
            residual_norm: self.residual_norms[i],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub max_iter: usize,
    /// Threshold on the relative change of the Ritz values.
    pub tol: f64,
    /// Record the preconditioner monitor in the log (costs two extra products
    /// and one preconditioner application per iteration).
    pub monitor: bool,
}

impl SolverParams {
    pub fn new(max_iter: usize, tol: f64) -> Self {
        Self {
            max_iter,
            tol,
            monitor: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iter: usize,
    pub values: Vec<f64>,
    pub residual_norms: Vec<f64>,
    /// `NaN` when monitoring is off.
    pub precond_monitor: f64,
}

/// Per-iteration history of a solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    pub entries: Vec<LogEntry>,
}

impl ConvergenceLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let r = self.entries.first().map_or(1, |e| e.values.len());
        let mut out = String::from("iter");
        for i in 1..=r {
            let _ = write!(out, ",mu_{i}");
        }
        for i in 1..=r {
            let _ = write!(out, ",resnorm_{i}");
        }
        out.push_str(",precond_monitor\n");
        for e in &self.entries {
            let _ = write!(out, "{}", e.iter);
            for v in e.values.iter().chain(&e.residual_norms) {
                let _ = write!(out, ",{v:.17e}");
            }
            let _ = writeln!(out, ",{:.17e}", e.precond_monitor);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `‖Av - μMv‖` given the products.
fn residual_norm(av: &[f64], mv: &[f64], mu: f64) -> f64 {
    av.iter()
        .zip(mv)
        .map(|(a, m)| (a - mu * m).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Single-vector PINVIT. The returned vector is M-normalized.
pub fn pinvit(
    a: &SparseMatrix,
    m: &SparseMatrix,
    v0: &[f64],
    p: &dyn Preconditioner,
    params: &SolverParams,
) -> Result<(EigenPair, ConvergenceLog)> {
    params.validate()?;
    let n = a.nrows();
    check_len(n, v0)?;
    check_finite(v0, "initial vector")?;
    if norm2(v0) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut v = v0.to_vec();
    let mut av = a.spmv(&v)?;
    let mut mv = m.spmv(&v)?;
    let mut mu = normalize_with(&mut v, &mut av, &mut mv)?;
    let mut log = ConvergenceLog::default();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    for iter in 1..=params.max_iter {
        for i in 0..n {
            r[i] = av[i] - mu * mv[i];
        }
        p.apply_into(&r, &mut w);
        axpy(-1.0, &w, &mut v);
        check_finite(&v, "pinvit iterate")?;
        a.mul_into(&v, &mut av);
        m.mul_into(&v, &mut mv);
        let mu_new = normalize_with(&mut v, &mut av, &mut mv)?;
        let change = (mu_new - mu).abs() / mu.abs();
        mu = mu_new;
        log.entries.push(LogEntry {
            iter,
            values: vec![mu],
            residual_norms: vec![residual_norm(&av, &mv, mu)],
            precond_monitor: if params.monitor {
                precond_residual(a, p, &v)?
            } else {
                f64::NAN
            },
        });
        if change <= params.tol {
            break;
        }
    }
    let residual_norm = residual_norm(&av, &mv, mu);
    Ok((
        EigenPair {
            value: mu,
            vector: v,
            residual_norm,
        },
        log,
    ))
}

/// Scale `v` (and its products) to unit M-norm; returns the Rayleigh quotient.
fn normalize_with(v: &mut [f64], av: &mut [f64], mv: &mut [f64]) -> Result<f64> {
    let vmv = dot(mv, v);
    if !(vmv > 0.0) || !vmv.is_finite() {
        return Err(if vmv == 0.0 {
            Error::ZeroVector
        } else {
            Error::NonFinite("M-norm")
        });
    }
    let mu = dot(av, v) / vmv;
    let s = 1.0 / vmv.sqrt();
    for x in v.iter_mut().chain(av.iter_mut()).chain(mv.iter_mut()) {
        *x *= s;
    }
    Ok(mu)
}

/// Modified Gram-Schmidt in the M inner product, with one reorthogonalization pass.
pub fn m_orthonormalize(m: &SparseMatrix, cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut m_out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for (k, c) in cols.iter().enumerate() {
        check_len(m.nrows(), c)?;
        let mut v = c.clone();
        let mut mv = m.spmv(&v)?;
        let initial = dot(&mv, &v).sqrt();
        if !initial.is_finite() {
            return Err(Error::NonFinite("block column"));
        }
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&m_out) {
                let h = dot(mq, &v);
                axpy(-h, q, &mut v);
            }
        }
        m.mul_into(&v, &mut mv);
        let nrm = dot(&mv, &v).sqrt();
        if !(nrm > RANK_TOL * initial) {
            return Err(Error::RankDeficient(format!(
                "column {k} depends linearly on the previous ones"
            )));
        }
        for x in v.iter_mut().chain(mv.iter_mut()) {
            *x /= nrm;
        }
        out.push(v);
        m_out.push(mv);
    }
    Ok(out)
}

/// `r` columns with uniform(-1, 1) entries from a fixed seed, M-orthonormalized.
pub fn random_block(m: &SparseMatrix, r: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..m.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    m_orthonormalize(m, &cols)
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    av: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
}

fn gram(x: &[Vec<f64>], y: &[Vec<f64>]) -> DenseMatrix {
    let mut g = DenseMatrix::from_fn(x.len(), x.len(), |i, j| {
        if i <= j {
            dot(&x[i], &y[j])
        } else {
            0.0
        }
    });
    for i in 0..x.len() {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

fn combine(cols: &[Vec<f64>], w: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..w.ncols())
        .into_par_iter()
        .map(|k| {
            let mut out = vec![0.0; cols[0].len()];
            for (j, c) in cols.iter().enumerate() {
                axpy(w[(j, k)], c, &mut out);
            }
            out
        })
        .collect()
}

fn products(a: &SparseMatrix, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    v.iter()
        .map(|c| {
            let mut y = vec![0.0; a.nrows()];
            a.mul_into(c, &mut y);
            y
        })
        .collect()
}

/// Rayleigh-Ritz on the span of `v` given `av = A v` and `mv = M v`.
fn ritz_from_products(v: &[Vec<f64>], av: &[Vec<f64>], mv: &[Vec<f64>]) -> Result<Ritz> {
    let ar = gram(v, av);
    let mr = gram(v, mv);
    Cholesky::factor(&mr, CHOLESKY_REL_PIVOT)
        .map_err(|e| Error::RankDeficient(format!("compressed mass matrix is singular ({e})")))?;
    let (values, w) = dense_generalized_eig(&ar, &mr)?;
    Ok(Ritz {
        values,
        vectors: combine(v, &w),
        av: combine(av, &w),
        mv: combine(mv, &w),
    })
}

/// Ritz values (ascending) and M-orthonormal Ritz vectors of the span of `v`.
pub fn ritz_project(
    a: &SparseMatrix,
    m: &SparseMatrix,
    v: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if v.is_empty() {
        return Err(Error::RankDeficient("empty block".into()));
    }
    for c in v {
        check_len(a.nrows(), c)?;
    }
    let ritz = ritz_from_products(v, &products(a, v), &products(m, v))?;
    Ok((ritz.values, ritz.vectors))
}

fn ritz_guarded(a: &SparseMatrix, m: &SparseMatrix, v: Vec<Vec<f64>>) -> Result<Ritz> {
    let av = products(a, &v);
    let mv = products(m, &v);
    match ritz_from_products(&v, &av, &mv) {
        Err(Error::RankDeficient(_)) | Err(Error::NotPositiveDefinite { .. }) => {
            let v = m_orthonormalize(m, &v)?;
            let av = products(a, &v);
            let mv = products(m, &v);
            ritz_from_products(&v, &av, &mv)
        }
        other => other,
    }
}

fn block_residuals(ritz: &Ritz) -> Vec<f64> {
    ritz.values
        .iter()
        .enumerate()
        .map(|(i, &mu)| residual_norm(&ritz.av[i], &ritz.mv[i], mu))
        .collect()
}

/// Block PINVIT: `Ṽ = V - P⁻¹(AV - MVΞ)` followed by a Ritz step on `Ṽ`.
pub fn bpinvit(
    a: &SparseMatrix,
    m: &SparseMatrix,
    v0: &[Vec<f64>],
    p: &dyn Preconditioner,
    params: &SolverParams,
) -> Result<(EigenBlock, ConvergenceLog)> {
    params.validate()?;
    if v0.is_empty() {
        return Err(Error::RankDeficient("empty block".into()));
    }
    for c in v0 {
        check_len(a.nrows(), c)?;
        check_finite(c, "initial block")?;
    }
    let start = m_orthonormalize(m, v0)?;
    let mut ritz = ritz_guarded(a, m, start)?;
    let mut log = ConvergenceLog::default();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=params.max_iter {
        iterations = iter;
        let next: Vec<Vec<f64>> = (0..ritz.values.len())
            .into_par_iter()
            .map(|i| {
                let mu = ritz.values[i];
                let r: Vec<f64> = ritz.av[i]
                    .iter()
                    .zip(&ritz.mv[i])
                    .map(|(a, m)| a - mu * m)
                    .collect();
                let w = p.apply(&r);
                ritz.vectors[i].iter().zip(&w).map(|(v, w)| v - w).collect()
            })
            .collect();
        for c in &next {
            check_finite(c, "bpinvit iterate")?;
        }
        let new = ritz_guarded(a, m, next)?;
        let diff: f64 = new
            .values
            .iter()
            .zip(&ritz.values)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = norm2(&ritz.values);
        ritz = new;
        log.entries.push(LogEntry {
            iter,
            values: ritz.values.clone(),
            residual_norms: block_residuals(&ritz),
            precond_monitor: if params.monitor {
                precond_residual(a, p, &ritz.vectors[0])?
            } else {
                f64::NAN
            },
        });
        if diff <= params.tol * scale {
            converged = true;
            break;
        }
    }
    let residual_norms = block_residuals(&ritz);
    Ok((
        EigenBlock {
            vectors: ritz.vectors,
            values: ritz.values,
            residual_norms,
            iterations,
            converged,
        },
        log,
    ))
}

/// Defect of the PINVIT error propagation identity
/// `ṽ - μA⁻¹Mv = (I - P⁻¹A)(v - μA⁻¹Mv)` for one unnormalized step.
pub fn error_propagation_check(
    a: &SparseMatrix,
    m: &SparseMatrix,
    p: &dyn Preconditioner,
    v: &[f64],
) -> Result<f64> {
    let n = a.nrows();
    if n > DENSE_CHECK_MAX {
        return Err(Error::TooLarge {
            n,
            max: DENSE_CHECK_MAX,
        });
    }
    check_len(n, v)?;
    let chol = Cholesky::factor(&a.to_dense(), 0.0)?;
    let mu = crate::linalg::rayleigh_quotient(a, m, v)?;
    let av = a.spmv(v)?;
    let mv = m.spmv(v)?;
    let r: Vec<f64> = av.iter().zip(&mv).map(|(x, y)| x - mu * y).collect();
    let pr = p.apply(&r);
    let mut x = mv.clone();
    chol.solve_in_place(&mut x);
    // x = μ A⁻¹ M v
    x.iter_mut().for_each(|xi| *xi *= mu);
    let e: Vec<f64> = v.iter().zip(&x).map(|(a, b)| a - b).collect();
    let ae = a.spmv(&e)?;
    let pae = p.apply(&ae);
    let defect: Vec<f64> = (0..n)
        .map(|i| (v[i] - pr[i] - x[i]) - (e[i] - pae[i]))
        .collect();
    Ok(norm2(&defect))
}
