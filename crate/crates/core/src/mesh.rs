//! Hierarchical quadrilateral meshes under quadtree refinement.
//!
//! Every mesh starts from a tensor-product grid of axis-aligned rectangles
//! (with some grid slots left empty to carve out the domain). A cell at
//! refinement level `l` is addressed by the integer index `(gx, gy)` of the
//! tensor grid obtained by bisecting every coarse slot `l` times. Each cell
//! records what lies across its four sides, and refinement updates those
//! records locally. Vertices carry their index on a fixed very fine lattice,
//! which gives exact lexicographic ordering.
//!
//! Refinement keeps every cell ever created; a cell is active iff it has no
//! children. Cell ids are stable under [`Mesh::refine`], which is what lets
//! coarse and fine meshes be compared cell by cell.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth of the vertex lattice. Cells may not be refined beyond this level.
pub const MAX_LEVEL: u8 = 40;

const REL_AREA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    UnitSquare,
    Lshape,
    Dumbbell,
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "unit_square" | "square" => Ok(Domain::UnitSquare),
            "lshape" | "l_shape" | "fichera" => Ok(Domain::Lshape),
            "dumbbell" => Ok(Domain::Dumbbell),
            other => Err(Error::UnknownDomain(other.to_string())),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Domain::UnitSquare => "unit_square",
            Domain::Lshape => "lshape",
            Domain::Dumbbell => "dumbbell",
        };
        f.write_str(name)
    }
}

/// Geometry knobs for [`make_grid`].
///
/// The dumbbell is two unit squares `[0,1]²` and `[1+L, 2+L]×[0,1]` joined by
/// the bridge `[1, 1+L] × [0.5 - w/2, 0.5 + w/2]` with `L = bridge_length` and
/// `w = bridge_width`. Its coarse grid uses cells no larger than `coarse_size`
/// in either direction, with grid lines through the bridge corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryParams {
    /// Cells per side of the coarse unit-square grid.
    pub square_cells: usize,
    pub bridge_length: f64,
    pub bridge_width: f64,
    pub coarse_size: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            square_cells: 1,
            bridge_length: 0.25,
            bridge_width: 0.1,
            coarse_size: 0.125,
        }
    }
}

impl GeometryParams {
    /// Area of the domain these parameters describe.
    pub fn domain_area(&self, domain: Domain) -> f64 {
        match domain {
            Domain::UnitSquare => 1.0,
            Domain::Lshape => 3.0,
            Domain::Dumbbell => 2.0 + self.bridge_length * self.bridge_width,
        }
    }
}

/// Coarse tensor grid: break points in x and y plus which slots hold a cell.
#[derive(Debug, Clone)]
struct TensorGrid {
    xb: Vec<f64>,
    yb: Vec<f64>,
    filled: Vec<bool>,
}

impl TensorGrid {
    fn nx(&self) -> usize {
        self.xb.len() - 1
    }

    fn ny(&self) -> usize {
        self.yb.len() - 1
    }

    fn coord(breaks: &[f64], level: u8, g: u64) -> f64 {
        let slot = (g >> level) as usize;
        let n = breaks.len() - 1;
        if slot >= n {
            return breaks[n];
        }
        let frac = (g & ((1u64 << level) - 1)) as f64 / (1u64 << level) as f64;
        breaks[slot] + (breaks[slot + 1] - breaks[slot]) * frac
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub id: usize,
    pub level: u8,
    /// Index of the cell in the level-`level` tensor grid.
    pub index: (u64, u64),
    /// Counterclockwise from the lower-left corner.
    pub vertices: [usize; 4],
    pub parent: Option<usize>,
    /// Counterclockwise from the lower-left child.
    pub children: Option<[usize; 4]>,
}

impl Cell {
    pub fn is_active(&self) -> bool {
        self.children.is_none()
    }
}

/// Axis-aligned bounding box of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl CellBox {
    pub fn hx(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn hy(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }

    /// Reference coordinates of a physical point.
    pub fn to_reference(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.x0) / self.hx(), (p.y - self.y0) / self.hy())
    }
}

/// Sides are numbered counterclockwise starting from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn opposite(self) -> Side {
        Side::ALL[(self as usize + 2) % 4]
    }

    /// Local vertex indices of the side, in counterclockwise order.
    pub fn local_vertices(self) -> [usize; 2] {
        let s = self as usize;
        [s, (s + 1) % 4]
    }

    /// Child positions adjacent to this side.
    fn children(self) -> [usize; 2] {
        match self {
            Side::Bottom => [0, 1],
            Side::Right => [1, 2],
            Side::Top => [3, 2],
            Side::Left => [0, 3],
        }
    }

    fn offset(self) -> (i64, i64) {
        match self {
            Side::Bottom => (0, -1),
            Side::Right => (1, 0),
            Side::Top => (0, 1),
            Side::Left => (-1, 0),
        }
    }

    pub fn normal_axis(self) -> Axis {
        match self {
            Side::Bottom | Side::Top => Axis::Y,
            Side::Left | Side::Right => Axis::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// What lies across one side of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Boundary,
    /// An active cell of the same level.
    Same(usize),
    /// The same-level cell is refined; these are its two children along the side.
    Finer([usize; 2]),
    /// The leaf across the side is coarser.
    Coarser(usize),
}

/// An edge of the active tessellation.
///
/// At coarse-fine interfaces the long coarse side is reported as the two fine
/// half-edges, each pairing one fine cell (`inner`) with the coarse one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub endpoints: [usize; 2],
    /// The finer (or, at equal levels, lower-id) adjacent cell.
    pub inner: usize,
    /// The other adjacent cell; `None` on the boundary.
    pub outer: Option<usize>,
    pub length: f64,
    pub normal: Axis,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.outer.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Domain,
    grid: TensorGrid,
    vertices: Vec<Point2>,
    vertex_keys: Vec<(u64, u64)>,
    cells: Vec<Cell>,
    /// Per cell and side: the same-level cell across the side if it exists,
    /// otherwise the coarser leaf covering that region, or [`NO_CELL`].
    adjacent: Vec<[u32; 4]>,
    max_level: u8,
}

const NO_CELL: u32 = u32::MAX;
const CHILD_OFFSETS: [(u64, u64); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

fn equal_breaks(out: &mut Vec<f64>, a: f64, b: f64, target: f64) {
    let n = ((b - a) / target - 1e-9).ceil().max(1.0) as usize;
    for k in 1..=n {
        out.push(if k == n {
            b
        } else {
            a + (b - a) * k as f64 / n as f64
        });
    }
}

/// Coarse conforming mesh of one of the benchmark domains.
///
/// - `unit_square`: `[0,1]²` split into `square_cells²` squares.
/// - `lshape`: `[-1,1]² \ [0,1]×[-1,0]` as three unit squares.
/// - `dumbbell`: see [`GeometryParams`].
pub fn make_grid(domain: Domain, params: &GeometryParams) -> Result<Mesh> {
    let grid = match domain {
        Domain::UnitSquare => {
            let n = params.square_cells;
            if n == 0 {
                return Err(Error::InvalidGeometry(
                    "square_cells must be positive".into(),
                ));
            }
            let b: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            TensorGrid {
                xb: b.clone(),
                yb: b,
                filled: vec![true; n * n],
            }
        }
        Domain::Lshape => TensorGrid {
            xb: vec![-1.0, 0.0, 1.0],
            yb: vec![-1.0, 0.0, 1.0],
            // slots are row-major from the bottom; (1, 0) is the notch
            filled: vec![true, false, true, true],
        },
        Domain::Dumbbell => {
            let (len, w, h) = (
                params.bridge_length,
                params.bridge_width,
                params.coarse_size,
            );
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::InvalidGeometry(format!(
                    "bridge width {w} must lie in (0, 1)"
                )));
            }
            if !(len > 0.0 && len.is_finite()) || !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "bridge length {len} and coarse size {h} must be positive"
                )));
            }
            let (ylo, yhi) = (0.5 - 0.5 * w, 0.5 + 0.5 * w);
            let mut xb = vec![0.0];
            equal_breaks(&mut xb, 0.0, 1.0, h);
            let bridge_start = xb.len() - 1;
            equal_breaks(&mut xb, 1.0, 1.0 + len, h);
            let bridge_end = xb.len() - 1;
            equal_breaks(&mut xb, 1.0 + len, 2.0 + len, h);
            let mut yb = vec![0.0];
            equal_breaks(&mut yb, 0.0, ylo, h);
            let row_lo = yb.len() - 1;
            equal_breaks(&mut yb, ylo, yhi, h);
            let row_hi = yb.len() - 1;
            equal_breaks(&mut yb, yhi, 1.0, h);
            let (nx, ny) = (xb.len() - 1, yb.len() - 1);
            let mut filled = vec![false; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    let in_bridge = (bridge_start..bridge_end).contains(&i);
                    filled[j * nx + i] = !in_bridge || (row_lo..row_hi).contains(&j);
                }
            }
            TensorGrid { xb, yb, filled }
        }
    };
    Ok(Mesh::from_grid(domain, grid))
}

impl Mesh {
    fn from_grid(domain: Domain, grid: TensorGrid) -> Mesh {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut mesh = Mesh {
            domain,
            grid,
            vertices: Vec::new(),
            vertex_keys: Vec::new(),
            cells: Vec::new(),
            adjacent: Vec::new(),
            max_level: 0,
        };
        let mut slot_cell = vec![NO_CELL; nx * ny];
        let mut lattice: Vec<Option<usize>> = vec![None; (nx + 1) * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                if !mesh.grid.filled[j * nx + i] {
                    continue;
                }
                let vertices = CHILD_OFFSETS.map(|(a, b)| {
                    let (vi, vj) = (i + a as usize, j + b as usize);
                    *lattice[vj * (nx + 1) + vi]
                        .get_or_insert_with(|| mesh.new_vertex(0, vi as u64, vj as u64))
                });
                slot_cell[j * nx + i] =
                    mesh.push_cell(0, (i as u64, j as u64), vertices, None) as u32;
            }
        }
        for id in 0..mesh.cells.len() {
            let (i, j) = mesh.cells[id].index;
            for side in Side::ALL {
                let (dx, dy) = side.offset();
                let (x, y) = (i as i64 + dx, j as i64 + dy);
                if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
                    mesh.adjacent[id][side as usize] = slot_cell[y as usize * nx + x as usize];
                }
            }
        }
        mesh
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point2 {
        self.vertices[v]
    }

    /// Lattice key of a vertex; lexicographic order on keys equals
    /// lexicographic order on coordinates.
    pub fn vertex_key(&self, v: usize) -> (u64, u64) {
        self.vertex_keys[v]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn level_count(&self) -> usize {
        self.max_level as usize + 1
    }

    /// Active cell ids in ascending order.
    pub fn active_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.is_active())
            .map(|c| c.id)
            .collect()
    }

    pub fn n_active_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_active()).count()
    }

    pub fn cell_box(&self, id: usize) -> CellBox {
        let c = &self.cells[id];
        let (gx, gy) = c.index;
        CellBox {
            x0: TensorGrid::coord(&self.grid.xb, c.level, gx),
            x1: TensorGrid::coord(&self.grid.xb, c.level, gx + 1),
            y0: TensorGrid::coord(&self.grid.yb, c.level, gy),
            y1: TensorGrid::coord(&self.grid.yb, c.level, gy + 1),
        }
    }

    /// Exact width and height of a cell: its coarse slot halved `level` times.
    /// Equal for all cells of one slot and level, unlike the differences of
    /// the [`CellBox`] coordinates.
    pub fn cell_size(&self, id: usize) -> (f64, f64) {
        let c = &self.cells[id];
        let scale = (1u64 << c.level) as f64;
        let width = |breaks: &[f64], g: u64| {
            let slot = ((g >> c.level) as usize).min(breaks.len() - 2);
            (breaks[slot + 1] - breaks[slot]) / scale
        };
        (
            width(&self.grid.xb, c.index.0),
            width(&self.grid.yb, c.index.1),
        )
    }

    pub fn active_area(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.is_active())
            .map(|c| self.cell_box(c.id).area())
            .sum()
    }

    fn new_vertex(&mut self, level: u8, gx: u64, gy: u64) -> usize {
        let shift = MAX_LEVEL - level;
        let key = (gx << shift, gy << shift);
        let p = Point2::new(
            TensorGrid::coord(&self.grid.xb, MAX_LEVEL, key.0),
            TensorGrid::coord(&self.grid.yb, MAX_LEVEL, key.1),
        );
        self.vertices.push(p);
        self.vertex_keys.push(key);
        self.vertices.len() - 1
    }

    fn push_cell(
        &mut self,
        level: u8,
        index: (u64, u64),
        vertices: [usize; 4],
        parent: Option<usize>,
    ) -> usize {
        let id = self.cells.len();
        self.cells.push(Cell {
            id,
            level,
            index,
            vertices,
            parent,
            children: None,
        });
        self.adjacent.push([NO_CELL; 4]);
        self.max_level = self.max_level.max(level);
        id
    }

    /// Child of a refined cell containing the slot `(gx, gy)` one level down.
    fn child_at(&self, parent: usize, gx: u64, gy: u64) -> usize {
        let p = &self.cells[parent];
        let local = (gx - 2 * p.index.0, gy - 2 * p.index.1);
        let pos = CHILD_OFFSETS
            .iter()
            .position(|&o| o == local)
            .expect("slot lies inside the parent");
        p.children.expect("parent is refined")[pos]
    }

    pub fn neighbor(&self, id: usize, side: Side) -> Neighbor {
        let adj = self.adjacent[id][side as usize];
        if adj == NO_CELL {
            return Neighbor::Boundary;
        }
        let n = adj as usize;
        if self.cells[n].level < self.cells[id].level {
            return Neighbor::Coarser(n);
        }
        match self.cells[n].children {
            None => Neighbor::Same(n),
            Some(ch) => {
                let pos = side.opposite().children();
                Neighbor::Finer([ch[pos[0]], ch[pos[1]]])
            }
        }
    }

    /// Subdivide every flagged cell into four children, adding flags
    /// transitively until the result is 1-irregular.
    pub fn refine(&self, flags: &[usize]) -> Result<Mesh> {
        for &f in flags {
            if f >= self.cells.len() || !self.cells[f].is_active() {
                return Err(Error::InactiveCell(f));
            }
        }
        let mut marked = vec![false; self.cells.len()];
        let mut stack: Vec<usize> = flags.to_vec();
        let mut closure = Vec::new();
        while let Some(c) = stack.pop() {
            if marked[c] {
                continue;
            }
            marked[c] = true;
            closure.push(c);
            for side in Side::ALL {
                if let Neighbor::Coarser(n) = self.neighbor(c, side) {
                    if !marked[n] {
                        stack.push(n);
                    }
                }
            }
        }
        closure.sort_by_key(|&c| (self.cells[c].level, c));
        let mut out = self.clone();
        for c in closure {
            if self.cells[c].level >= MAX_LEVEL {
                return Err(Error::InvalidGeometry(format!(
                    "cell {c} is already at the maximum refinement level"
                )));
            }
            out.split(c);
        }
        Ok(out)
    }

    pub fn refine_uniform(&self) -> Mesh {
        self.refine(&self.active_cells())
            .expect("active cells are valid flags")
    }

    /// `n` rounds of uniform refinement.
    pub fn refine_global(&self, n: usize) -> Mesh {
        let mut m = self.clone();
        for _ in 0..n {
            m = m.refine_uniform();
        }
        m
    }

    fn split(&mut self, id: usize) {
        let (level, (gx, gy)) = (self.cells[id].level, self.cells[id].index);
        let corners = self.cells[id].vertices;
        let l = level + 1;
        let (bx, by) = (2 * gx, 2 * gy);

        // 3×3 vertex lattice of the children; side midpoints are shared with
        // an already refined neighbor
        let mut grid = [[usize::MAX; 3]; 3];
        grid[0][0] = corners[0];
        grid[2][0] = corners[1];
        grid[2][2] = corners[2];
        grid[0][2] = corners[3];
        let mid = [(1, 0), (2, 1), (1, 2), (0, 1)];
        for side in Side::ALL {
            let (i, j) = mid[side as usize];
            let key = (bx + i as u64, by + j as u64);
            grid[i][j] = match self.neighbor(id, side) {
                Neighbor::Finer(ch) => {
                    let shift = MAX_LEVEL - l;
                    let lattice = (key.0 << shift, key.1 << shift);
                    *self.cells[ch[0]]
                        .vertices
                        .iter()
                        .find(|&&v| self.vertex_keys[v] == lattice)
                        .expect("refined neighbor holds the side midpoint")
                }
                _ => self.new_vertex(l, key.0, key.1),
            };
        }
        grid[1][1] = self.new_vertex(l, bx + 1, by + 1);

        let mut children = [0; 4];
        for (k, (a, b)) in CHILD_OFFSETS.into_iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            let vertices = [
                grid[a][b],
                grid[a + 1][b],
                grid[a + 1][b + 1],
                grid[a][b + 1],
            ];
            children[k] = self.push_cell(l, (bx + a as u64, by + b as u64), vertices, Some(id));
        }
        self.cells[id].children = Some(children);

        let outside = self.adjacent[id];
        for &c in &children {
            let (cx, cy) = self.cells[c].index;
            for side in Side::ALL {
                let (dx, dy) = side.offset();
                let (xi, yi) = (cx as i64 + dx, cy as i64 + dy);
                let (x, y) = (xi as u64, yi as u64);
                let inside = xi >= 0 && yi >= 0 && x >> 1 == gx && y >> 1 == gy;
                let adj = if inside {
                    self.child_at(id, x, y) as u32
                } else {
                    let q = outside[side as usize];
                    if q != NO_CELL
                        && self.cells[q as usize].level == level
                        && self.cells[q as usize].children.is_some()
                    {
                        self.child_at(q as usize, x, y) as u32
                    } else {
                        q
                    }
                };
                self.adjacent[c][side as usize] = adj;
            }
        }

        // finer cells across the sides that pointed at this cell now see its children
        for side in Side::ALL {
            let q = outside[side as usize];
            if q == NO_CELL || self.cells[q as usize].level != level {
                continue;
            }
            let back = side.opposite();
            let (dx, dy) = back.offset();
            let mut stack: Vec<usize> = self.cells[q as usize]
                .children
                .map_or(Vec::new(), |c| c.to_vec());
            while let Some(c) = stack.pop() {
                if self.adjacent[c][back as usize] != id as u32 {
                    continue;
                }
                let cell = &self.cells[c];
                let shift = cell.level - l;
                let x = ((cell.index.0 as i64 + dx) as u64) >> shift;
                let y = ((cell.index.1 as i64 + dy) as u64) >> shift;
                if let Some(ch) = cell.children {
                    stack.extend(ch);
                }
                self.adjacent[c][back as usize] = self.child_at(id, x, y) as u32;
            }
        }
    }

    /// All edges of the active tessellation, interior and boundary.
    pub fn active_edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for c in self.cells.iter().filter(|c| c.is_active()) {
            for side in Side::ALL {
                let outer = match self.neighbor(c.id, side) {
                    Neighbor::Boundary => None,
                    Neighbor::Same(n) if c.id < n => Some(n),
                    Neighbor::Same(_) | Neighbor::Finer(_) => continue,
                    Neighbor::Coarser(n) => Some(n),
                };
                let [a, b] = side.local_vertices();
                let bx = self.cell_box(c.id);
                let length = match side.normal_axis() {
                    Axis::X => bx.hy(),
                    Axis::Y => bx.hx(),
                };
                edges.push(Edge {
                    id: edges.len(),
                    endpoints: [c.vertices[a], c.vertices[b]],
                    inner: c.id,
                    outer,
                    length,
                    normal: side.normal_axis(),
                });
            }
        }
        edges
    }

    /// Interior edges only.
    pub fn interior_edges(&self) -> Vec<Edge> {
        self.active_edges()
            .into_iter()
            .filter(|e| !e.is_boundary())
            .collect()
    }

    /// True if no two active cells sharing an edge differ by more than one level.
    pub fn is_one_irregular(&self) -> bool {
        self.cells.iter().filter(|c| c.is_active()).all(|c| {
            Side::ALL
                .into_iter()
                .all(|side| match self.neighbor(c.id, side) {
                    Neighbor::Boundary | Neighbor::Same(_) => true,
                    Neighbor::Coarser(n) => c.level - self.cells[n].level <= 1,
                    Neighbor::Finer(ch) => ch.iter().all(|&k| self.cells[k].is_active()),
                })
        })
    }

    /// Total active area matches the domain area to a relative `1e-12`.
    pub fn covers_domain(&self, params: &GeometryParams) -> bool {
        let target = params.domain_area(self.domain);
        ((self.active_area() - target) / target).abs() <= REL_AREA_TOL
    }

    /// The ancestor of `id` (or `id` itself) that is active in `coarse`.
    ///
    /// Works only when `self` was produced from `coarse` by refinement, so that
    /// cell ids agree.
    pub fn ancestor_active_in(&self, id: usize, coarse: &Mesh) -> Option<usize> {
        let mut c = id;
        loop {
            if c < coarse.cells.len() {
                let cc = &coarse.cells[c];
                if cc.level == self.cells[c].level && cc.index == self.cells[c].index {
                    return cc.is_active().then_some(c);
                }
                return None;
            }
            c = self.cells[c].parent?;
        }
    }

    /// Legacy VTK (ASCII, unstructured grid of quads) with optional per-active-cell data.
    pub fn write_vtk(&self, path: &Path, cell_data: &[(&str, &[f64])]) -> Result<()> {
        let active = self.active_cells();
        for (name, data) in cell_data {
            if data.len() != active.len() {
                return Err(Error::InvalidConfig(format!(
                    "cell data `{name}` has {} entries for {} active cells",
                    data.len(),
                    active.len()
                )));
            }
        }
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{} mesh", self.domain)?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.vertices.len())?;
        for p in &self.vertices {
            writeln!(w, "{} {} 0", p.x, p.y)?;
        }
        writeln!(w, "CELLS {} {}", active.len(), 5 * active.len())?;
        for &c in &active {
            let v = self.cells[c].vertices;
            writeln!(w, "4 {} {} {} {}", v[0], v[1], v[2], v[3])?;
        }
        writeln!(w, "CELL_TYPES {}", active.len())?;
        for _ in &active {
            writeln!(w, "9")?;
        }
        if !cell_data.is_empty() {
            writeln!(w, "CELL_DATA {}", active.len())?;
            for (name, data) in cell_data {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for x in data.iter() {
                    writeln!(w, "{x:e}")?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
