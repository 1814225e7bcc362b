//! Dörfler marking and the two adaptive eigenvalue drivers.
//!
//! [`a_pinvit`] solves the algebraic problem to tolerance on every level.
//! [`sa_pinvit`] does so only on the first and last level; in between it
//! applies a small fixed number of PINVIT sweeps to the prolongation of the
//! previous level's block before estimating and refining.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eigensolver::{bpinvit, m_orthonormalize, random_block, EigenBlock, SolverParams};
use crate::error::{Error, Result};
use crate::estimator::{estimate_reduced, EdgeAttribution, ElementEstimates};
use crate::fem::FeSpace;
use crate::linalg::multigrid::{DEFAULT_COARSE_MAX_DOFS, DEFAULT_GMG_DAMPING};
use crate::linalg::{Hierarchy, PrecondSpec, SparseMatrix};
use crate::mesh::{make_grid, Domain, GeometryParams, Mesh};

/// Outcome of bulk marking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marking {
    /// Marked cell ids, in greedy order.
    pub cells: Vec<usize>,
    /// All indicators vanish; nothing left to refine.
    pub converged: bool,
}

/// Smallest greedy set of cells whose indicators sum to at least
/// `theta` times the total. Ties are broken by ascending cell id.
pub fn doerfler_mark(cells: &[usize], eta_sq: &[f64], theta: f64) -> Result<Marking> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "theta {theta} outside (0, 1]"
        )));
    }
    if cells.len() != eta_sq.len() {
        return Err(Error::DimensionMismatch {
            expected: cells.len(),
            got: eta_sq.len(),
        });
    }
    if eta_sq.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::NonFinite("marking indicators"));
    }
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&i, &j| {
        eta_sq[j]
            .total_cmp(&eta_sq[i])
            .then(cells[i].cmp(&cells[j]))
    });
    let total: f64 = order.iter().map(|&i| eta_sq[i]).sum();
    if total == 0.0 {
        return Ok(Marking {
            cells: Vec::new(),
            converged: true,
        });
    }
    let target = theta * total;
    let mut marked = Vec::new();
    let mut sum = 0.0;
    for i in order {
        if sum >= target || eta_sq[i] == 0.0 {
            break;
        }
        sum += eta_sq[i];
        marked.push(cells[i]);
    }
    Ok(Marking {
        cells: marked,
        converged: false,
    })
}

/// [`doerfler_mark`] on an estimator result.
pub fn mark(est: &ElementEstimates, theta: f64) -> Result<Marking> {
    doerfler_mark(&est.cells, &est.eta_sq, theta)
}

/// A benchmark domain with its coarse mesh parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub domain: Domain,
    #[serde(default)]
    pub geometry: GeometryParams,
    /// Uniform refinements applied to the coarse grid before the first solve.
    pub initial_refinements: usize,
}

impl Problem {
    /// Default problem for a domain: enough initial refinement to have a few
    /// dozen free dofs.
    pub fn new(domain: Domain) -> Self {
        let initial_refinements = match domain {
            Domain::UnitSquare => 2,
            Domain::Lshape => 2,
            Domain::Dumbbell => 0,
        };
        Self {
            domain,
            geometry: GeometryParams::default(),
            initial_refinements,
        }
    }

    pub fn with_initial_refinements(mut self, n: usize) -> Self {
        self.initial_refinements = n;
        self
    }

    pub fn coarse_mesh(&self) -> Result<Mesh> {
        make_grid(self.domain, &self.geometry)
    }

    pub fn initial_mesh(&self) -> Result<Mesh> {
        Ok(self.coarse_mesh()?.refine_global(self.initial_refinements))
    }

    /// Space on the initial mesh and a multigrid hierarchy over the uniform
    /// refinements leading to it.
    fn initial_state(&self, config: &AdaptiveConfig) -> Result<(FeSpace, Hierarchy)> {
        let mut mesh = self.coarse_mesh()?;
        let mut space = FeSpace::new(Arc::new(mesh.clone()));
        let mut hierarchy: Option<Hierarchy> = None;
        for k in 0..=self.initial_refinements {
            if k > 0 {
                mesh = mesh.refine_uniform();
                let fine = FeSpace::new(Arc::new(mesh.clone()));
                if let Some(h) = hierarchy.as_mut() {
                    h.push_level(fine.stiffness().clone(), fine.prolongation_from(&space)?)?;
                }
                space = fine;
            }
            if hierarchy.is_none() && space.n_free() > 0 {
                hierarchy = Some(Hierarchy::with_options(
                    space.stiffness().clone(),
                    config.coarse_max_dofs,
                    config.gmg_damping,
                )?);
            }
        }
        let hierarchy = hierarchy.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "initial {} mesh has no interior dofs; increase initial refinements",
                self.domain
            ))
        })?;
        Ok((space, hierarchy))
    }
}

/// Which approximate eigenpairs drive the estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateWith {
    /// The first Ritz pair only.
    #[default]
    First,
    /// Indicators summed over the whole block.
    SumOverBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub max_levels: usize,
    pub tol_eta: f64,
    pub p_ext: PrecondSpec,
    pub p_int: PrecondSpec,
    pub tol_ext: f64,
    pub tol_int: f64,
    pub max_iter_ext: usize,
    pub max_iter_int: usize,
    /// Block size.
    pub r: usize,
    pub theta: f64,
    pub seed: u64,
    pub attribution: EdgeAttribution,
    pub estimate_with: EstimateWith,
    pub coarse_max_dofs: usize,
    pub gmg_damping: f64,
    /// Record the preconditioner monitor in solver logs.
    pub monitor: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            max_levels: 10,
            tol_eta: 1e-8,
            p_ext: PrecondSpec::gmg(1),
            p_int: PrecondSpec::gmg(2),
            tol_ext: 1e-12,
            tol_int: 1e-12,
            max_iter_ext: 500,
            max_iter_int: 1,
            r: 1,
            theta: 0.5,
            seed: 42,
            attribution: EdgeAttribution::BothFull,
            estimate_with: EstimateWith::First,
            coarse_max_dofs: DEFAULT_COARSE_MAX_DOFS,
            gmg_damping: DEFAULT_GMG_DAMPING,
            monitor: false,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.max_levels == 0 {
            return bad("max_levels must be at least 1".into());
        }
        if self.r == 0 {
            return bad("block size r must be at least 1".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta {} outside (0, 1]", self.theta));
        }
        for (name, t) in [
            ("tol_eta", self.tol_eta),
            ("tol_ext", self.tol_ext),
            ("tol_int", self.tol_int),
        ] {
            if !(t > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_iter_ext == 0 || self.max_iter_int == 0 {
            return bad("iteration budgets must be at least 1".into());
        }
        Ok(())
    }

    fn ext(&self) -> (PrecondSpec, SolverParams) {
        (
            self.p_ext,
            SolverParams {
                max_iter: self.max_iter_ext,
                tol: self.tol_ext,
                monitor: self.monitor,
            },
        )
    }

    fn int(&self) -> (PrecondSpec, SolverParams) {
        (
            self.p_int,
            SolverParams {
                max_iter: self.max_iter_int,
                tol: self.tol_int,
                monitor: self.monitor,
            },
        )
    }

    fn stages_coincide(&self) -> bool {
        self.ext() == self.int()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    /// One-based level index.
    pub level: usize,
    pub n_cells: usize,
    /// Free dofs of the algebraic problem.
    pub n_dofs: usize,
    pub eigenvalues: Vec<f64>,
    /// `η`, the square root of the summed indicators.
    pub eta_total: f64,
    /// Assembly, transfer and multigrid setup for this level's space.
    pub t_setup_s: f64,
    /// Algebraic eigensolve only.
    pub t_solve_s: f64,
    pub t_estimate_s: f64,
    pub t_mark_s: f64,
    pub t_refine_s: f64,
    pub solver_iters: usize,
}

impl LevelRecord {
    pub fn total_time(&self) -> f64 {
        self.t_setup_s + self.t_solve_s + self.t_estimate_s + self.t_mark_s + self.t_refine_s
    }
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub records: Vec<LevelRecord>,
    pub final_block: EigenBlock,
    /// Whether the last solve met `tol_ext`.
    pub final_converged: bool,
    pub config: AdaptiveConfig,
    pub problem: Problem,
}

impl RunHistory {
    pub fn total_time(&self) -> f64 {
        self.records.iter().map(LevelRecord::total_time).sum()
    }

    pub fn final_record(&self) -> &LevelRecord {
        self.records.last().expect("a run has at least one level")
    }

    pub fn csv_header(r: usize) -> String {
        let mut h = String::from("level,n_cells,n_dofs");
        for i in 1..=r {
            let _ = write!(h, ",lambda_{i}");
        }
        h.push_str(",eta_total,t_solve_s,t_estimate_s,t_mark_s,t_refine_s,solver_iters,t_setup_s");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.config.r);
        out.push('\n');
        for rec in &self.records {
            let _ = write!(out, "{},{},{}", rec.level, rec.n_cells, rec.n_dofs);
            for l in &rec.eigenvalues {
                let _ = write!(out, ",{l:.17e}");
            }
            let _ = writeln!(
                out,
                ",{:.17e},{:.6e},{:.6e},{:.6e},{:.6e},{},{:.6e}",
                rec.eta_total,
                rec.t_solve_s,
                rec.t_estimate_s,
                rec.t_mark_s,
                rec.t_refine_s,
                rec.solver_iters,
                rec.t_setup_s
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// State of one level handed to a [`LevelObserver`] after estimation.
pub struct LevelView<'a> {
    pub record: &'a LevelRecord,
    pub space: &'a FeSpace,
    pub block: &'a EigenBlock,
    pub estimates: &'a ElementEstimates,
}

/// Called once per level, outside the timed sections.
pub type LevelObserver<'a> = dyn FnMut(&LevelView<'_>) -> Result<()> + 'a;

/// Map a coarse block into the fine space and M-orthonormalize it there.
pub fn prolong_block(
    block: &[Vec<f64>],
    prolongation: &SparseMatrix,
    fine_mass: &SparseMatrix,
) -> Result<Vec<Vec<f64>>> {
    let cols = block
        .iter()
        .map(|v| prolongation.spmv(v))
        .collect::<Result<Vec<_>>>()?;
    m_orthonormalize(fine_mass, &cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Reference,
    Smoothed,
}

fn estimate_block(
    space: &FeSpace,
    block: &EigenBlock,
    config: &AdaptiveConfig,
) -> Result<ElementEstimates> {
    let mut est = estimate_reduced(
        space,
        block.values[0],
        &block.vectors[0],
        config.attribution,
    )?;
    if config.estimate_with == EstimateWith::SumOverBlock {
        for i in 1..block.len() {
            let e = estimate_reduced(
                space,
                block.values[i],
                &block.vectors[i],
                config.attribution,
            )?;
            for (x, y) in est.eta_sq.iter_mut().zip(&e.eta_sq) {
                *x += y;
            }
            for (x, y) in est.volume.iter_mut().zip(&e.volume) {
                *x += y;
            }
            for (x, y) in est.edges.iter_mut().zip(&e.edges) {
                x.jump_sq += y.jump_sq;
            }
        }
        est.total = est.eta_sq.iter().sum();
    }
    Ok(est)
}

fn solve(
    space: &FeSpace,
    hierarchy: &Hierarchy,
    start: &[Vec<f64>],
    (spec, params): (PrecondSpec, SolverParams),
) -> Result<EigenBlock> {
    let p = spec.build(hierarchy)?;
    let (block, _) = bpinvit(space.stiffness(), space.mass(), start, p.as_ref(), &params)?;
    Ok(block)
}

fn run(
    problem: &Problem,
    config: &AdaptiveConfig,
    mode: Mode,
    mut observer: Option<&mut LevelObserver<'_>>,
) -> Result<RunHistory> {
    config.validate()?;
    let t0 = Instant::now();
    let (mut space, mut hierarchy) = problem.initial_state(config)?;
    if space.n_free() < config.r {
        return Err(Error::InvalidConfig(format!(
            "initial mesh has {} free dofs, fewer than the block size {}",
            space.n_free(),
            config.r
        )));
    }
    let mut start = random_block(space.mass(), config.r, config.seed)?;
    let mut setup = t0.elapsed().as_secs_f64();
    let mut records = Vec::new();
    let mut level = 1;
    loop {
        let last = level == config.max_levels;
        let stage = if mode == Mode::Reference || level == 1 || last {
            config.ext()
        } else {
            config.int()
        };
        let at = |e: Error| e.at_level(level);

        let t = Instant::now();
        let mut block = solve(&space, &hierarchy, &start, stage).map_err(at)?;
        let mut iters = block.iterations;
        let mut t_solve = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let mut est = estimate_block(&space, &block, config).map_err(at)?;
        let mut t_estimate = t.elapsed().as_secs_f64();
        let mut eta = est.total.sqrt();
        let mut done = last || eta < config.tol_eta;

        if done && stage != config.ext() && !config.stages_coincide() {
            let t = Instant::now();
            block = solve(&space, &hierarchy, &block.vectors, config.ext()).map_err(at)?;
            iters += block.iterations;
            t_solve += t.elapsed().as_secs_f64();
            let t = Instant::now();
            est = estimate_block(&space, &block, config).map_err(at)?;
            t_estimate += t.elapsed().as_secs_f64();
            eta = est.total.sqrt();
        }

        let mut record = LevelRecord {
            level,
            n_cells: space.mesh().n_active_cells(),
            n_dofs: space.n_free(),
            eigenvalues: block.values.clone(),
            eta_total: eta,
            t_setup_s: setup,
            t_solve_s: t_solve,
            t_estimate_s: t_estimate,
            t_mark_s: 0.0,
            t_refine_s: 0.0,
            solver_iters: iters,
        };

        let mut next = None;
        if !done {
            let t = Instant::now();
            let marking = mark(&est, config.theta).map_err(at)?;
            record.t_mark_s = t.elapsed().as_secs_f64();
            if marking.converged {
                done = true;
            } else {
                let t = Instant::now();
                let mesh = space.mesh().refine(&marking.cells).map_err(at)?;
                record.t_refine_s = t.elapsed().as_secs_f64();
                next = Some(mesh);
            }
        }

        if let Some(obs) = observer.as_mut() {
            obs(&LevelView {
                record: &record,
                space: &space,
                block: &block,
                estimates: &est,
            })?;
        }
        records.push(record);

        match next {
            Some(mesh) if !done => {
                let t = Instant::now();
                let fine = FeSpace::new(Arc::new(mesh));
                let p = fine.prolongation_from(&space).map_err(at)?;
                start = prolong_block(&block.vectors, &p, fine.mass()).map_err(at)?;
                hierarchy
                    .push_level(fine.stiffness().clone(), p)
                    .map_err(at)?;
                space = fine;
                setup = t.elapsed().as_secs_f64();
                level += 1;
            }
            _ => {
                return Ok(RunHistory {
                    records,
                    final_converged: block.converged,
                    final_block: block,
                    config: *config,
                    problem: *problem,
                });
            }
        }
    }
}

/// Adaptive loop with a converged algebraic solve on every level.
pub fn a_pinvit(problem: &Problem, config: &AdaptiveConfig) -> Result<RunHistory> {
    run(problem, config, Mode::Reference, None)
}

/// Smoothed-adaptive loop: converged solves only on the first and last level.
pub fn sa_pinvit(problem: &Problem, config: &AdaptiveConfig) -> Result<RunHistory> {
    run(problem, config, Mode::Smoothed, None)
}

/// [`a_pinvit`] or [`sa_pinvit`] with a per-level observer.
pub fn run_observed(
    problem: &Problem,
    config: &AdaptiveConfig,
    smoothed: bool,
    observer: &mut LevelObserver<'_>,
) -> Result<RunHistory> {
    let mode = if smoothed {
        Mode::Smoothed
    } else {
        Mode::Reference
    };
    run(problem, config, mode, Some(observer))
}
