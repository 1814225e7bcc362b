//! Explicit residual a posteriori estimator for approximate eigenpairs, and
//! the cluster reliability report built from its edge terms.
//!
//! For Q1 on axis-aligned rectangles the discrete Laplacian vanishes inside
//! every cell, so the volume residual of `(μ, u)` is `|T| μ² ‖u‖²_{L²(T)}`.
//! Edge terms are `J_E² = |E| ‖[∂u/∂ν]‖²_{L²(E)}` on every interior edge of
//! the active tessellation; at hanging nodes those are the fine half-edges.

use serde::{Deserialize, Serialize};

use crate::eigensolver::EigenBlock;
use crate::error::{Error, Result};
use crate::fem::{local_matrices, shape_gradients, ConstraintSet, DofHandler, FeSpace};
use crate::linalg::{dot, norm2, Preconditioner, SparseMatrix};
use crate::mesh::{Axis, CellBox, Neighbor, Point2, Side};

const GAUSS_1D: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Relative constraint violation above which an input vector is rejected.
pub const CONFORMITY_TOL: f64 = 1e-10;

/// Relative residual the inner solve of [`algebraic_error_proxy`] must reach.
pub const INNER_TOL: f64 = 1e-10;
pub const INNER_MAX_STEPS: usize = 500;

/// How an interior edge term enters the indicators of its two cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeAttribution {
    /// Both cells receive the full `J_E²`.
    #[default]
    BothFull,
    /// Each cell receives `J_E² / 2`.
    HalfEach,
}

impl EdgeAttribution {
    fn weight(self) -> f64 {
        match self {
            EdgeAttribution::BothFull => 1.0,
            EdgeAttribution::HalfEach => 0.5,
        }
    }
}

/// One interior edge with its jump term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTerm {
    pub cells: [usize; 2],
    pub length: f64,
    pub jump_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementEstimates {
    /// Active cell ids, ascending.
    pub cells: Vec<usize>,
    /// `η_T²`, aligned with `cells`.
    pub eta_sq: Vec<f64>,
    /// Volume part of `η_T²`.
    pub volume: Vec<f64>,
    pub edges: Vec<EdgeTerm>,
    pub total: f64,
}

impl ElementEstimates {
    /// `Σ_E J_E²` over all interior edges.
    pub fn jump_total(&self) -> f64 {
        self.edges.iter().map(|e| e.jump_sq).sum()
    }

    pub fn eta(&self) -> f64 {
        self.total.sqrt()
    }
}

/// Box and nodal values of `u` on an active cell.
fn cell_data(dh: &DofHandler, u: &[f64], cell: usize) -> (CellBox, [f64; 4]) {
    (dh.mesh().cell_box(cell), dh.cell_dofs(cell).map(|d| u[d]))
}

/// Component `k` of the gradient at `p` of the Q1 function on one cell.
fn derivative_at((b, vals): &(CellBox, [f64; 4]), p: Point2, k: usize) -> f64 {
    let (xi, eta) = b.to_reference(p);
    let dphi = shape_gradients(xi.clamp(0.0, 1.0), eta.clamp(0.0, 1.0));
    let h = if k == 0 { b.hx() } else { b.hy() };
    let mut g = 0.0;
    for (c, d) in vals.iter().zip(&dphi) {
        g += c * d[k] / h;
    }
    g
}

/// `∫_E ([∂u/∂ν])²` by two-point Gauss quadrature.
fn jump_integral(
    inner: &(CellBox, [f64; 4]),
    outer: &(CellBox, [f64; 4]),
    a: Point2,
    b: Point2,
    axis: Axis,
) -> f64 {
    let k = match axis {
        Axis::X => 0,
        Axis::Y => 1,
    };
    let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    GAUSS_1D
        .iter()
        .map(|&t| {
            let p = Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            let j = derivative_at(inner, p, k) - derivative_at(outer, p, k);
            0.5 * len * j * j
        })
        .sum()
}

/// Residual estimator of the pair `(mu, u)` with `u` a full nodal vector.
pub fn estimate(
    dh: &DofHandler,
    cs: &ConstraintSet,
    mu: f64,
    u: &[f64],
    attribution: EdgeAttribution,
) -> Result<ElementEstimates> {
    if u.len() != dh.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: dh.n_dofs(),
            got: u.len(),
        });
    }
    if !mu.is_finite() || u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("estimator input"));
    }
    let scale = u.iter().fold(0.0_f64, |s, x| s.max(x.abs()));
    let defect = cs.residual(u);
    if defect > CONFORMITY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NonConforming(defect / scale));
    }
    let mesh = dh.mesh();
    let cells = dh.active_cells().to_vec();
    let mut slot = vec![usize::MAX; mesh.n_cells()];
    for (k, &c) in cells.iter().enumerate() {
        slot[c] = k;
    }
    let mut volume = Vec::with_capacity(cells.len());
    let mut cached: Option<((f64, f64), [[f64; 4]; 4])> = None;
    for &c in &cells {
        let size = mesh.cell_size(c);
        let m = match cached {
            Some((s, m)) if s == size => m,
            _ => {
                let m = local_matrices(size.0, size.1).1;
                cached = Some((size, m));
                m
            }
        };
        let vals = dh.cell_dofs(c).map(|d| u[d]);
        let mut l2 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                l2 += vals[i] * m[i][j] * vals[j];
            }
        }
        volume.push(size.0 * size.1 * mu * mu * l2.max(0.0));
    }
    let mut eta_sq = volume.clone();
    let w = attribution.weight();
    let mut edges = Vec::with_capacity(2 * cells.len());
    for &c in &cells {
        let cell = mesh.cell(c);
        let inner = cell_data(dh, u, c);
        for side in Side::ALL {
            let outer = match mesh.neighbor(c, side) {
                Neighbor::Same(n) if c < n => n,
                Neighbor::Coarser(n) => n,
                _ => continue,
            };
            let [ia, ib] = side.local_vertices();
            let a = mesh.vertex(cell.vertices[ia]);
            let b = mesh.vertex(cell.vertices[ib]);
            let length = match side.normal_axis() {
                Axis::X => inner.0.hy(),
                Axis::Y => inner.0.hx(),
            };
            let outer_data = cell_data(dh, u, outer);
            let jump_sq = length * jump_integral(&inner, &outer_data, a, b, side.normal_axis());
            eta_sq[slot[c]] += w * jump_sq;
            eta_sq[slot[outer]] += w * jump_sq;
            edges.push(EdgeTerm {
                cells: [c, outer],
                length,
                jump_sq,
            });
        }
    }
    let total = eta_sq.iter().sum();
    Ok(ElementEstimates {
        cells,
        eta_sq,
        volume,
        edges,
        total,
    })
}

/// [`estimate`] for a vector of free-dof values.
pub fn estimate_reduced(
    space: &FeSpace,
    mu: f64,
    v: &[f64],
    attribution: EdgeAttribution,
) -> Result<ElementEstimates> {
    if v.len() != space.n_free() {
        return Err(Error::DimensionMismatch {
            expected: space.n_free(),
            got: v.len(),
        });
    }
    estimate(
        space.dofs(),
        space.constraints(),
        mu,
        &space.expand(v),
        attribution,
    )
}

/// Scalars multiplying the two parts of the cluster bound. Neither is known
/// in practice; the default of one makes the report a relative diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConstants {
    pub c1: f64,
    pub c_int: f64,
}

impl Default for ClusterConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c_int: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterBound {
    Bound {
        /// `C_clust · S`
        product: f64,
        /// `√S`
        sqrt: f64,
    },
    /// The supplied `λ_{r+1}` does not exceed the largest Ritz value.
    NoBound,
}

impl ClusterBound {
    /// The smaller of the two bound variants.
    pub fn value(&self) -> Option<f64> {
        match *self {
            ClusterBound::Bound { product, sqrt } => Some(product.min(sqrt)),
            ClusterBound::NoBound => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub ritz_values: Vec<f64>,
    /// `J²(λ̃_i⁻¹ ṽ_i) = λ̃_i⁻¹ Σ_E J_E²(ṽ_i)`.
    pub residual_measures: Vec<f64>,
    pub algebraic_errors: Vec<f64>,
    pub lambda_next: f64,
    /// `(λ_{r+1} + λ̃_r) / |λ_{r+1} - λ̃_r|`, `None` without a gap.
    pub c_clust: Option<f64>,
    pub bound: ClusterBound,
}

impl ClusterReport {
    pub fn r(&self) -> usize {
        self.ritz_values.len()
    }
}

/// Spectral gap factor, `None` unless `lambda_next > ritz`.
pub fn c_clust(lambda_next: f64, ritz: f64) -> Option<f64> {
    (lambda_next > ritz).then(|| (lambda_next + ritz) / (lambda_next - ritz))
}

/// Reliability quantities for the Ritz block on `space`, given an estimate of
/// the first eigenvalue outside the cluster and the algebraic errors.
pub fn cluster_report(
    space: &FeSpace,
    block: &EigenBlock,
    lambda_next: f64,
    algebraic_errors: &[f64],
    constants: ClusterConstants,
) -> Result<ClusterReport> {
    let r = block.len();
    if r == 0 {
        return Err(Error::RankDeficient("empty block".into()));
    }
    if algebraic_errors.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: algebraic_errors.len(),
        });
    }
    let mut residual_measures = Vec::with_capacity(r);
    for i in 0..r {
        let est = estimate_reduced(
            space,
            block.values[i],
            &block.vectors[i],
            EdgeAttribution::BothFull,
        )?;
        residual_measures.push(est.jump_total() / block.values[i]);
    }
    let largest = block.values[r - 1];
    let gap = c_clust(lambda_next, largest);
    let bound = match gap {
        Some(c) => {
            let s = constants.c1.powi(2) * residual_measures.iter().sum::<f64>()
                + constants.c_int.powi(2) * algebraic_errors.iter().sum::<f64>();
            ClusterBound::Bound {
                product: c * s,
                sqrt: s.sqrt(),
            }
        }
        None => ClusterBound::NoBound,
    };
    Ok(ClusterReport {
        ritz_values: block.values.clone(),
        residual_measures,
        algebraic_errors: algebraic_errors.to_vec(),
        lambda_next,
        c_clust: gap,
        bound,
    })
}

/// `‖w - λ̃⁻¹ṽ‖²_A` where `A w = M ṽ` is solved by preconditioned Richardson
/// iteration with `p` to a relative residual of [`INNER_TOL`].
pub fn algebraic_error_proxy(
    a: &SparseMatrix,
    m: &SparseMatrix,
    lambda: f64,
    v: &[f64],
    p: &dyn Preconditioner,
) -> Result<f64> {
    let n = a.nrows();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "Ritz value {lambda} must be positive"
        )));
    }
    let b = m.spmv(v)?;
    let nb = norm2(&b);
    let mut w = vec![0.0; n];
    if nb > 0.0 {
        let mut r = b.clone();
        let mut z = vec![0.0; n];
        let mut steps = 0;
        loop {
            let res = norm2(&r) / nb;
            if res <= INNER_TOL {
                break;
            }
            if steps == INNER_MAX_STEPS || !res.is_finite() {
                return Err(Error::NotConverged {
                    steps,
                    residual: res,
                });
            }
            p.apply_into(&r, &mut z);
            for (wi, zi) in w.iter_mut().zip(&z) {
                *wi += zi;
            }
            a.residual_into(&b, &w, &mut r);
            steps += 1;
        }
    }
    let d: Vec<f64> = w.iter().zip(v).map(|(wi, vi)| wi - vi / lambda).collect();
    let ad = a.spmv(&d)?;
    Ok(dot(&ad, &d).max(0.0))
}
