//! Bilinear (Q1) finite elements on the active cells of a [`Mesh`].
//!
//! Every mesh vertex carries one nodal dof. Vertices on the boundary are
//! Dirichlet-zero and hanging vertices are slaved to the two endpoints of the
//! coarse edge they sit on; the remaining dofs are *free*. Matrices are
//! assembled directly on the free dofs ("reduced" or condensed form), while
//! [`FeVector`]s hold all nodal values so that constrained values are always
//! available for evaluation.

use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, Neighbor, Point2, Side};

/// Nodal coefficient vector over all dofs of a [`DofHandler`].
pub type FeVector = Vec<f64>;

const GAUSS_1D: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Values of the four shape functions at a reference point.
pub fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

/// Reference gradients `(∂ξ, ∂η)` of the four shape functions.
pub fn shape_gradients(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

/// Local stiffness and mass matrices of an `hx × hy` rectangle, by 2×2 Gauss
/// quadrature (exact for Q1).
pub fn local_matrices(hx: f64, hy: f64) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    let mut k = [[0.0; 4]; 4];
    let mut m = [[0.0; 4]; 4];
    let w = 0.25 * hx * hy;
    for &xi in &GAUSS_1D {
        for &eta in &GAUSS_1D {
            let phi = shape_values(xi, eta);
            let dphi = shape_gradients(xi, eta);
            for i in 0..4 {
                for j in 0..4 {
                    let gx = dphi[i][0] * dphi[j][0] / (hx * hx);
                    let gy = dphi[i][1] * dphi[j][1] / (hy * hy);
                    k[i][j] += w * (gx + gy);
                    m[i][j] += w * phi[i] * phi[j];
                }
            }
        }
    }
    (k, m)
}

/// Vertex dof numbering of a mesh.
#[derive(Debug, Clone)]
pub struct DofHandler {
    mesh: Arc<Mesh>,
    vertex_dof: Vec<usize>,
    dof_vertex: Vec<usize>,
    /// One active cell touching each vertex.
    vertex_cell: Vec<usize>,
    active: Vec<usize>,
}

/// Number the vertices of `mesh` lexicographically by `(x, y)`.
pub fn distribute_dofs(mesh: Arc<Mesh>) -> DofHandler {
    let n = mesh.vertices().len();
    let mut dof_vertex: Vec<usize> = (0..n).collect();
    // lattice keys are unique per vertex
    dof_vertex.sort_unstable_by_key(|&v| mesh.vertex_key(v));
    let mut vertex_dof = vec![0; n];
    for (d, &v) in dof_vertex.iter().enumerate() {
        vertex_dof[v] = d;
    }
    let active = mesh.active_cells();
    let mut vertex_cell = vec![usize::MAX; n];
    for &c in &active {
        for &v in &mesh.cell(c).vertices {
            if vertex_cell[v] == usize::MAX {
                vertex_cell[v] = c;
            }
        }
    }
    DofHandler {
        mesh,
        vertex_dof,
        dof_vertex,
        vertex_cell,
        active,
    }
}

impl DofHandler {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_vertex.len()
    }

    pub fn active_cells(&self) -> &[usize] {
        &self.active
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        self.vertex_dof[v]
    }

    pub fn dof_vertex(&self, d: usize) -> usize {
        self.dof_vertex[d]
    }

    pub fn dof_point(&self, d: usize) -> Point2 {
        self.mesh.vertex(self.dof_vertex[d])
    }

    /// Dofs of a cell, counterclockwise from the lower-left corner.
    pub fn cell_dofs(&self, cell: usize) -> [usize; 4] {
        self.mesh.cell(cell).vertices.map(|v| self.vertex_dof[v])
    }

    /// Value and physical gradient of the nodal function `u` at reference
    /// point `(xi, eta)` of an active cell.
    pub fn value_and_gradient(
        &self,
        u: &[f64],
        cell: usize,
        (xi, eta): (f64, f64),
    ) -> Result<(f64, [f64; 2])> {
        if u.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                got: u.len(),
            });
        }
        if cell >= self.mesh.n_cells() || !self.mesh.cell(cell).is_active() {
            return Err(Error::InactiveCell(cell));
        }
        if !((0.0..=1.0).contains(&xi) && (0.0..=1.0).contains(&eta)) {
            return Err(Error::InvalidConfig(format!(
                "point ({xi}, {eta}) outside the reference cell"
            )));
        }
        let b = self.mesh.cell_box(cell);
        let dofs = self.cell_dofs(cell);
        let phi = shape_values(xi, eta);
        let dphi = shape_gradients(xi, eta);
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for k in 0..4 {
            let c = u[dofs[k]];
            value += c * phi[k];
            grad[0] += c * dphi[k][0] / b.hx();
            grad[1] += c * dphi[k][1] / b.hy();
        }
        Ok((value, grad))
    }
}

/// See [`DofHandler::value_and_gradient`].
pub fn fe_value_and_gradient(
    dh: &DofHandler,
    u: &[f64],
    cell: usize,
    point: (f64, f64),
) -> Result<(f64, [f64; 2])> {
    dh.value_and_gradient(u, cell, point)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofKind {
    /// Position in the reduced system.
    Free(usize),
    Dirichlet,
    /// Midpoint of a coarse edge; the value is the mean of the two master dofs.
    Hanging([usize; 2]),
}

/// Dirichlet and hanging-node constraints of a [`DofHandler`].
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    kinds: Vec<DofKind>,
    free: Vec<usize>,
}

pub const HANGING_WEIGHT: f64 = 0.5;

pub fn build_constraints(dh: &DofHandler) -> ConstraintSet {
    let mesh = dh.mesh();
    let n = dh.n_dofs();
    let mut dirichlet = vec![false; n];
    let mut hanging: Vec<Option<[usize; 2]>> = vec![None; n];
    for &c in dh.active_cells() {
        let cell = mesh.cell(c);
        for side in Side::ALL {
            let [a, b] = side.local_vertices();
            match mesh.neighbor(c, side) {
                Neighbor::Boundary => {
                    dirichlet[dh.vertex_dof(cell.vertices[a])] = true;
                    dirichlet[dh.vertex_dof(cell.vertices[b])] = true;
                }
                Neighbor::Coarser(n) => {
                    let coarse = mesh.cell(n).vertices;
                    let [p, q] = side.opposite().local_vertices();
                    let masters = [dh.vertex_dof(coarse[p]), dh.vertex_dof(coarse[q])];
                    for v in [cell.vertices[a], cell.vertices[b]] {
                        if v != coarse[p] && v != coarse[q] {
                            hanging[dh.vertex_dof(v)] = Some(masters);
                        }
                    }
                }
                Neighbor::Same(_) | Neighbor::Finer(_) => {}
            }
        }
    }
    let mut kinds = Vec::with_capacity(n);
    let mut free = Vec::new();
    for d in 0..n {
        kinds.push(if let Some(m) = hanging[d] {
            DofKind::Hanging(m)
        } else if dirichlet[d] {
            DofKind::Dirichlet
        } else {
            free.push(d);
            DofKind::Free(free.len() - 1)
        });
    }
    for k in &kinds {
        if let DofKind::Hanging(m) = k {
            debug_assert!(m.iter().all(|&d| !matches!(kinds[d], DofKind::Hanging(_))));
        }
    }
    ConstraintSet { kinds, free }
}

impl ConstraintSet {
    pub fn kind(&self, dof: usize) -> DofKind {
        self.kinds[dof]
    }

    pub fn n_dofs(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Full dof index of each free dof.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn n_hanging(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, DofKind::Hanging(_)))
            .count()
    }

    pub fn n_dirichlet(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, DofKind::Dirichlet))
            .count()
    }

    /// Calls `f(free index, weight)` for each free dof the value of `dof`
    /// depends on.
    pub fn for_each_master(&self, dof: usize, mut f: impl FnMut(usize, f64)) {
        match self.kinds[dof] {
            DofKind::Free(i) => f(i, 1.0),
            DofKind::Dirichlet => {}
            DofKind::Hanging(masters) => {
                for m in masters {
                    if let DofKind::Free(i) = self.kinds[m] {
                        f(i, HANGING_WEIGHT);
                    }
                }
            }
        }
    }

    /// Nodal vector of the conforming function with free values `reduced`.
    pub fn expand(&self, reduced: &[f64]) -> FeVector {
        assert_eq!(reduced.len(), self.n_free(), "reduced vector length");
        let mut full = vec![0.0; self.n_dofs()];
        for (d, slot) in full.iter_mut().enumerate() {
            let mut s = 0.0;
            self.for_each_master(d, |i, w| s += w * reduced[i]);
            *slot = s;
        }
        full
    }

    /// Free values of a nodal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.n_dofs(), "full vector length");
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Largest violation of the constraints by a nodal vector.
    pub fn residual(&self, full: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (d, k) in self.kinds.iter().enumerate() {
            let defect = match *k {
                DofKind::Free(_) => 0.0,
                DofKind::Dirichlet => full[d],
                DofKind::Hanging([a, b]) => full[d] - HANGING_WEIGHT * (full[a] + full[b]),
            };
            worst = worst.max(defect.abs());
        }
        worst
    }
}

/// One free dof of a cell's constrained local basis.
#[derive(Clone, Copy)]
struct LocalDof {
    free: u32,
    vertex: u32,
    weight: f64,
}

/// Stiffness and mass on the free dofs, assembled row by row over a shared
/// sparsity pattern.
fn assemble(dh: &DofHandler, cs: &ConstraintSet) -> (SparseMatrix, SparseMatrix) {
    let n = cs.n_free();
    let cells = dh.active_cells();

    let mut local_ptr: Vec<u32> = Vec::with_capacity(cells.len() + 1);
    let mut local: Vec<LocalDof> = Vec::with_capacity(5 * cells.len());
    let mut size_class: Vec<u32> = Vec::with_capacity(cells.len());
    let mut sizes: Vec<((f64, f64), [[f64; 4]; 4], [[f64; 4]; 4])> = Vec::new();
    let mut classes: FxHashMap<(u64, u64), usize> = FxHashMap::default();
    let mut row_len = vec![0u32; n + 1];
    local_ptr.push(0);
    for &c in cells {
        let size = dh.mesh().cell_size(c);
        let class = *classes
            .entry((size.0.to_bits(), size.1.to_bits()))
            .or_insert_with(|| {
                let (k, m) = local_matrices(size.0, size.1);
                sizes.push((size, k, m));
                sizes.len() - 1
            });
        size_class.push(class as u32);
        for (lv, &d) in dh.cell_dofs(c).iter().enumerate() {
            cs.for_each_master(d, |i, w| {
                row_len[i + 1] += 1;
                local.push(LocalDof {
                    free: i as u32,
                    vertex: lv as u32,
                    weight: w,
                });
            });
        }
        local_ptr.push(local.len() as u32);
    }

    // for every free dof, the (cell, local entry) pairs it appears in
    for i in 0..n {
        row_len[i + 1] += row_len[i];
    }
    let inc_ptr = row_len;
    let mut fill = inc_ptr.clone();
    let mut incidence = vec![(0u32, 0u32); inc_ptr[n] as usize];
    for k in 0..cells.len() {
        for e in local_ptr[k]..local_ptr[k + 1] {
            let i = local[e as usize].free as usize;
            incidence[fill[i] as usize] = (k as u32, e);
            fill[i] += 1;
        }
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(9 * n);
    let mut kvals = Vec::with_capacity(9 * n);
    let mut mvals = Vec::with_capacity(9 * n);
    row_ptr.push(0);
    // slot of column j in the current row, valid when stamp[j] == row
    let mut stamp = vec![u32::MAX; n];
    let mut slot = vec![0u32; n];
    let mut row: Vec<(u32, f64, f64)> = Vec::with_capacity(32);
    for i in 0..n {
        row.clear();
        for &(k, e) in &incidence[inc_ptr[i] as usize..inc_ptr[i + 1] as usize] {
            let k = k as usize;
            let me = local[e as usize];
            let (_, km, mm) = &sizes[size_class[k] as usize];
            let (kr, mr) = (&km[me.vertex as usize], &mm[me.vertex as usize]);
            for other in &local[local_ptr[k] as usize..local_ptr[k + 1] as usize] {
                let j = other.free as usize;
                let w = me.weight * other.weight;
                if stamp[j] != i as u32 {
                    stamp[j] = i as u32;
                    slot[j] = row.len() as u32;
                    row.push((j as u32, 0.0, 0.0));
                }
                let entry = &mut row[slot[j] as usize];
                entry.1 += w * kr[other.vertex as usize];
                entry.2 += w * mr[other.vertex as usize];
            }
        }
        // rows are short; insertion sort beats the general sort here
        for p in 1..row.len() {
            let mut q = p;
            while q > 0 && row[q - 1].0 > row[q].0 {
                row.swap(q - 1, q);
                q -= 1;
            }
        }
        for &(j, kv, mv) in &row {
            col_idx.push(j as usize);
            kvals.push(kv);
            mvals.push(mv);
        }
        row_ptr.push(col_idx.len());
    }
    let a = SparseMatrix::from_csr(n, n, row_ptr.clone(), col_idx.clone(), kvals);
    let m = SparseMatrix::from_csr(n, n, row_ptr, col_idx, mvals);
    (a.with_symmetric(true), m.with_symmetric(true))
}

/// Condensed stiffness matrix on the free dofs.
pub fn assemble_stiffness(dh: &DofHandler, cs: &ConstraintSet) -> SparseMatrix {
    assemble(dh, cs).0
}

/// Condensed consistent mass matrix on the free dofs.
pub fn assemble_mass(dh: &DofHandler, cs: &ConstraintSet) -> SparseMatrix {
    assemble(dh, cs).1
}

/// Stiffness and mass in a single pass over the cells.
pub fn assemble_system(dh: &DofHandler, cs: &ConstraintSet) -> (SparseMatrix, SparseMatrix) {
    assemble(dh, cs)
}

fn check_nested(coarse: &DofHandler, fine: &DofHandler) -> Result<()> {
    if coarse.mesh().domain() != fine.mesh().domain() {
        return Err(Error::NotNested("meshes of different domains".into()));
    }
    if coarse.mesh().n_cells() > fine.mesh().n_cells() {
        return Err(Error::NotNested(
            "coarse mesh has more cells than the fine one".into(),
        ));
    }
    Ok(())
}

/// Coarse dofs and weights giving the value at fine dof `d`.
fn prolongation_row(coarse: &DofHandler, fine: &DofHandler, d: usize) -> Result<[(usize, f64); 4]> {
    let (cm, fm) = (coarse.mesh(), fine.mesh());
    let v = fine.dof_vertex(d);
    // refinement appends vertices, so a shared key means a shared vertex
    if v < cm.vertices().len() && cm.vertex_key(v) == fm.vertex_key(v) {
        let c = coarse.vertex_dof(v);
        return Ok([(c, 1.0), (c, 0.0), (c, 0.0), (c, 0.0)]);
    }
    let fc = fine.vertex_cell[v];
    let cc = fm.ancestor_active_in(fc, cm).ok_or_else(|| {
        Error::NotNested(format!(
            "fine cell {fc} has no active ancestor in the coarse mesh"
        ))
    })?;
    let b = cm.cell_box(cc);
    let p = fm.vertex(v);
    if !b.contains(p, 1e-12 * (b.hx() + b.hy())) {
        return Err(Error::NotNested(format!(
            "fine vertex {v} lies outside its coarse ancestor {cc}"
        )));
    }
    let (xi, eta) = b.to_reference(p);
    let phi = shape_values(xi.clamp(0.0, 1.0), eta.clamp(0.0, 1.0));
    let dofs = coarse.cell_dofs(cc);
    Ok(std::array::from_fn(|k| (dofs[k], phi[k])))
}

/// Nodal interpolation of coarse Q1 functions on the fine mesh, acting on
/// full nodal vectors (rows sum to one).
pub fn prolongation(coarse: &DofHandler, fine: &DofHandler) -> Result<SparseMatrix> {
    check_nested(coarse, fine)?;
    let mut triplets = Vec::with_capacity(4 * fine.n_dofs());
    for d in 0..fine.n_dofs() {
        for (j, w) in prolongation_row(coarse, fine, d)? {
            if w != 0.0 {
                triplets.push((d, j, w));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        fine.n_dofs(),
        coarse.n_dofs(),
        triplets,
    ))
}

/// The same injection between the reduced (free-dof) spaces.
pub fn reduced_prolongation(
    coarse: &DofHandler,
    coarse_cs: &ConstraintSet,
    fine: &DofHandler,
    fine_cs: &ConstraintSet,
) -> Result<SparseMatrix> {
    check_nested(coarse, fine)?;
    let n = fine_cs.n_free();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(4 * n);
    let mut values = Vec::with_capacity(4 * n);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(8);
    row_ptr.push(0);
    for &d in fine_cs.free_dofs() {
        row.clear();
        for (cd, w) in prolongation_row(coarse, fine, d)? {
            if w != 0.0 {
                coarse_cs.for_each_master(cd, |j, wm| row.push((j, w * wm)));
            }
        }
        row.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < row.len() {
            let j = row[k].0;
            let mut v = 0.0;
            while k < row.len() && row[k].0 == j {
                v += row[k].1;
                k += 1;
            }
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseMatrix::from_csr(
        n,
        coarse_cs.n_free(),
        row_ptr,
        col_idx,
        values,
    ))
}

/// A mesh together with its dofs, constraints and assembled matrices.
#[derive(Debug, Clone)]
pub struct FeSpace {
    dofs: DofHandler,
    constraints: ConstraintSet,
    stiffness: SparseMatrix,
    mass: SparseMatrix,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let dofs = distribute_dofs(mesh);
        let constraints = build_constraints(&dofs);
        let (stiffness, mass) = assemble_system(&dofs, &constraints);
        Self {
            dofs,
            constraints,
            stiffness,
            mass,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.dofs.mesh()
    }

    pub fn dofs(&self) -> &DofHandler {
        &self.dofs
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// Number of free dofs (the dimension of the algebraic problem).
    pub fn n_free(&self) -> usize {
        self.constraints.n_free()
    }

    pub fn expand(&self, reduced: &[f64]) -> FeVector {
        self.constraints.expand(reduced)
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.constraints.restrict(full)
    }

    /// Reduced prolongation from `coarse` into this space.
    pub fn prolongation_from(&self, coarse: &FeSpace) -> Result<SparseMatrix> {
        reduced_prolongation(
            &coarse.dofs,
            &coarse.constraints,
            &self.dofs,
            &self.constraints,
        )
    }
}
