//! Reference spectra used to check the solvers.
//!
//! The dense path deliberately goes through `nalgebra` rather than this
//! crate's own dense kernels, so that it is an independent check of them.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::adaptivity::LevelRecord;
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::linalg::SparseMatrix;
use crate::mesh::Domain;

/// Largest system [`dense_reference`] accepts.
pub const DENSE_MAX_DOFS: usize = 2000;

const ALPHA_RANGE: (f64, f64) = (1e-3, 20.0);

/// Relative change, either way, still treated as a flat step.
const MONOTONE_SLACK: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Analytic,
    /// Full dense solve on a mesh with `n_dofs` free dofs.
    Dense {
        n_dofs: usize,
    },
    /// Fit of `λ + c N^{-α}` to the given dof counts.
    Extrapolated {
        n_dofs: Vec<usize>,
    },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Analytic => f.write_str("analytic"),
            Provenance::Dense { n_dofs } => write!(f, "dense(N={n_dofs})"),
            Provenance::Extrapolated { n_dofs } => {
                let list: Vec<String> = n_dofs.iter().map(|n| n.to_string()).collect();
                write!(f, "extrapolated(N={})", list.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpectrum {
    pub domain: Domain,
    /// Ascending.
    pub values: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub provenance: Provenance,
}

impl ReferenceSpectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value,uncertainty,provenance\n");
        for (i, (v, u)) in self.values.iter().zip(&self.uncertainty).enumerate() {
            let _ = writeln!(out, "{},{v:.17e},{u:.6e},{}", i + 1, self.provenance);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Lowest `count` Dirichlet eigenvalues `(m² + n²)π²` of the unit square.
pub fn analytic_square_spectrum(count: usize) -> ReferenceSpectrum {
    let mut all: Vec<usize> = Vec::with_capacity(count * count);
    for m in 1..=count {
        for n in 1..=count {
            all.push(m * m + n * n);
        }
    }
    all.sort_unstable();
    let values: Vec<f64> = all
        .iter()
        .take(count)
        .map(|&k| k as f64 * (PI * PI))
        .collect();
    ReferenceSpectrum {
        domain: Domain::UnitSquare,
        uncertainty: vec![0.0; values.len()],
        values,
        provenance: Provenance::Analytic,
    }
}

fn to_nalgebra(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            d[(i, j)] += v;
        }
    }
    d
}

/// All eigenpairs of `A x = λ M x`, ascending, with M-orthonormal vectors.
pub fn dense_eigenpairs(a: &SparseMatrix, m: &SparseMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.nrows();
    if n > DENSE_MAX_DOFS {
        return Err(Error::TooLarge {
            n,
            max: DENSE_MAX_DOFS,
        });
    }
    let chol = to_nalgebra(m)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            index: 0,
            pivot: f64::NAN,
        })?;
    let l = chol.l();
    let ad = to_nalgebra(a);
    // C = L⁻¹ A L⁻ᵀ
    let x = l
        .solve_lower_triangular(&ad)
        .ok_or(Error::NonFinite("dense reference"))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NonFinite("dense reference"))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for k in order {
        values.push(eig.eigenvalues[k]);
        let y = lt
            .solve_upper_triangular(&eig.eigenvectors.column(k).into_owned())
            .ok_or(Error::NonFinite("dense reference"))?;
        vectors.push(y.iter().copied().collect());
    }
    Ok((values, vectors))
}

/// Lowest `r` eigenvalues of the discrete problem on `space`.
pub fn dense_reference(space: &FeSpace, r: usize) -> Result<ReferenceSpectrum> {
    let n = space.n_free();
    if r > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: r,
        });
    }
    let (values, _) = dense_eigenpairs(space.stiffness(), space.mass())?;
    Ok(ReferenceSpectrum {
        domain: space.mesh().domain(),
        uncertainty: vec![0.0; r],
        values: values.into_iter().take(r).collect(),
        provenance: Provenance::Dense { n_dofs: n },
    })
}

/// Fit `λ_k ≈ λ + c N_k^{-α}` through three points; returns `λ`.
fn extrapolate3(n: [f64; 3], lam: [f64; 3]) -> f64 {
    let d1 = lam[0] - lam[1];
    let d2 = lam[1] - lam[2];
    if d1 == 0.0 && d2 == 0.0 {
        return lam[2];
    }
    if d2 == 0.0 {
        return lam[2];
    }
    let ratio = d1 / d2;
    let g = |alpha: f64| {
        let p = n.map(|x| x.powf(-alpha));
        (p[0] - p[1]) / (p[1] - p[2])
    };
    // g increases with α for increasing N
    let (mut lo, mut hi) = ALPHA_RANGE;
    let alpha = if ratio <= g(lo) {
        lo
    } else if ratio >= g(hi) {
        hi
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < ratio {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let p = n.map(|x| x.powf(-alpha));
    let c = (lam[1] - lam[2]) / (p[1] - p[2]);
    lam[2] - c * p[2]
}

/// Extrapolated limit of a non-increasing sequence of discrete eigenvalues
/// and its uncertainty: the change against the fit one level earlier, or
/// the distance to the last value when only three levels are available.
pub fn extrapolate(n_dofs: &[usize], values: &[f64]) -> Result<(f64, f64)> {
    if n_dofs.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: n_dofs.len(),
            got: values.len(),
        });
    }
    let k = values.len();
    if k < 3 {
        return Err(Error::InvalidConfig(format!(
            "extrapolation needs at least 3 levels, got {k}"
        )));
    }
    if n_dofs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("dof counts must increase".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("extrapolation input"));
    }
    // converged eigenvalues of untouched modes wobble at round-off level
    if values
        .windows(2)
        .any(|w| w[1] > w[0] + MONOTONE_SLACK * w[0].abs())
    {
        return Err(Error::NonMonotone);
    }
    let values: Vec<f64> = values
        .iter()
        .scan(values[0], |prev, &v| {
            if v < *prev - MONOTONE_SLACK * prev.abs() {
                *prev = v;
            }
            Some(*prev)
        })
        .collect();
    let fit = |j: usize| {
        extrapolate3(
            [n_dofs[j] as f64, n_dofs[j + 1] as f64, n_dofs[j + 2] as f64],
            [values[j], values[j + 1], values[j + 2]],
        )
    };
    let lam = fit(k - 3);
    let spread = if k >= 4 {
        (lam - fit(k - 4)).abs()
    } else {
        (values[k - 1] - lam).abs()
    };
    Ok((lam, spread.max(f64::EPSILON * lam.abs())))
}

/// Extrapolated reference for the first `r` eigenvalues of a converged run.
pub fn extrapolated_reference(
    domain: Domain,
    records: &[LevelRecord],
    r: usize,
) -> Result<ReferenceSpectrum> {
    let n: Vec<usize> = records.iter().map(|rec| rec.n_dofs).collect();
    let mut values = Vec::with_capacity(r);
    let mut uncertainty = Vec::with_capacity(r);
    for i in 0..r {
        let lam = records
            .iter()
            .map(|rec| {
                rec.eigenvalues
                    .get(i)
                    .copied()
                    .ok_or(Error::DimensionMismatch {
                        expected: r,
                        got: rec.eigenvalues.len(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (v, u) = extrapolate(&n, &lam)?;
        values.push(v);
        uncertainty.push(u);
    }
    Ok(ReferenceSpectrum {
        domain,
        values,
        uncertainty,
        provenance: Provenance::Extrapolated { n_dofs: n },
    })
}
