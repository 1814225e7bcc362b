//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 5`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sapinvit::adaptivity::{
    a_pinvit, doerfler_mark, mark, run_observed, sa_pinvit, AdaptiveConfig, LevelRecord, Problem,
    RunHistory,
};
use sapinvit::eigensolver::{bpinvit, error_propagation_check, pinvit, random_block, SolverParams};
use sapinvit::estimator::{
    algebraic_error_proxy, cluster_report, estimate_reduced, ClusterBound, ClusterConstants,
    EdgeAttribution,
};
use sapinvit::fem::FeSpace;
use sapinvit::linalg::{
    chebyshev_smooth, estimate_spectral_bounds, jacobi_smooth, DenseMatrix, Hierarchy, PrecondSpec,
    SparseMatrix,
};
use sapinvit::mesh::{Domain, Mesh};
use sapinvit::oracle::{dense_reference, extrapolate};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const TWO_PI2: f64 = 2.0 * PI * PI;

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn lambda1(records: &[LevelRecord]) -> Vec<f64> {
    records.iter().map(|r| r.eigenvalues[0]).collect()
}

fn uniform_square(levels: usize, r: usize) -> Result<RunHistory, String> {
    let config = AdaptiveConfig {
        theta: 1.0,
        max_levels: levels,
        r,
        ..Default::default()
    };
    a_pinvit(&Problem::new(Domain::UnitSquare), &config).map_err(err)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let h = uniform_square(6, 1)?;
    let secs = t.elapsed().as_secs_f64();
    let e: Vec<f64> = lambda1(&h.records)
        .iter()
        .map(|l| (l - TWO_PI2) / TWO_PI2)
        .collect();
    let ratios: Vec<f64> = e.windows(2).map(|w| w[0] / w[1]).collect();
    let last = &ratios[ratios.len() - 3..];
    let ok = h.records.len() == 6 && last.iter().all(|q| (3.5..=4.5).contains(q)) && secs < 60.0;
    check(
        ok,
        format!("error ratios over the last levels {last:.4?}, runtime {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let h = uniform_square(6, 1)?;
    let worst = lambda1(&h.records)
        .iter()
        .map(|l| l - TWO_PI2)
        .fold(f64::INFINITY, f64::min);
    let mut checked = 0;
    let mut min_gap = f64::INFINITY;
    let cases = [
        (Domain::UnitSquare, 2),
        (Domain::UnitSquare, 3),
        (Domain::Lshape, 2),
        (Domain::Lshape, 3),
        (Domain::Dumbbell, 0),
    ];
    for (domain, refinements) in cases {
        let problem = Problem::new(domain).with_initial_refinements(refinements);
        let space = FeSpace::new(Arc::new(problem.initial_mesh().map_err(err)?));
        if space.n_free() > 200 {
            continue;
        }
        let r = 4.min(space.n_free());
        let dense = dense_reference(&space, r).map_err(err)?;
        let hierarchy = Hierarchy::new(space.stiffness().clone()).map_err(err)?;
        let p = PrecondSpec::gmg(1).build(&hierarchy).map_err(err)?;
        let start = random_block(space.mass(), r, 7).map_err(err)?;
        let (block, _) = bpinvit(
            space.stiffness(),
            space.mass(),
            &start,
            p.as_ref(),
            &SolverParams::new(500, 1e-12),
        )
        .map_err(err)?;
        for (ritz, exact) in block.values.iter().zip(&dense.values) {
            min_gap = min_gap.min((ritz - exact) / exact);
        }
        checked += 1;
    }
    check(
        worst >= 0.0 && min_gap >= -1e-10 && checked >= 4,
        format!(
            "min λ_h - 2π² = {worst:.3e}; min relative Ritz - dense = {min_gap:.2e} on {checked} meshes"
        ),
    )
}

fn criterion_3() -> Outcome {
    let problem = Problem::new(Domain::Lshape);
    let reference_run = a_pinvit(
        &problem,
        &AdaptiveConfig {
            theta: 0.5,
            max_levels: 18,
            ..Default::default()
        },
    )
    .map_err(err)?;
    let n: Vec<usize> = reference_run.records.iter().map(|r| r.n_dofs).collect();
    let (lam, unc) = extrapolate(&n, &lambda1(&reference_run.records)).map_err(err)?;

    let slope_of = |h: &RunHistory| {
        let n: Vec<f64> = h.records.iter().map(|r| r.n_dofs as f64).collect();
        let e: Vec<f64> = lambda1(&h.records)
            .iter()
            .map(|l| (l - lam) / lam)
            .collect();
        loglog_slope(&n, &e)
    };
    let adaptive = a_pinvit(
        &problem,
        &AdaptiveConfig {
            theta: 0.5,
            max_levels: 10,
            ..Default::default()
        },
    )
    .map_err(err)?;
    let uniform = a_pinvit(
        &problem,
        &AdaptiveConfig {
            theta: 1.0,
            max_levels: 6,
            ..Default::default()
        },
    )
    .map_err(err)?;
    let sa = slope_of(&adaptive);
    let su = slope_of(&uniform);
    check(
        (-1.25..=-0.75).contains(&sa) && (-0.85..=-0.5).contains(&su) && unc / lam < 1e-3,
        format!(
            "reference {lam:.8} ± {:.1e} (relative); adaptive slope {sa:.3}, uniform slope {su:.3}",
            unc / lam
        ),
    )
}

fn criterion_4() -> Outcome {
    let problem = Problem::new(Domain::Lshape);
    let a_config = AdaptiveConfig {
        theta: 0.5,
        max_levels: 10,
        ..Default::default()
    };
    let sa_config = AdaptiveConfig {
        p_int: PrecondSpec::gmg(3),
        ..a_config
    };
    let a = a_pinvit(&problem, &a_config).map_err(err)?;
    let sa = sa_pinvit(&problem, &sa_config).map_err(err)?;
    let (ca, cs) = (
        a.final_record().n_cells as f64,
        sa.final_record().n_cells as f64,
    );
    let (la, ls) = (
        a.final_record().eigenvalues[0],
        sa.final_record().eigenvalues[0],
    );
    let cell_dev = (cs - ca).abs() / ca;
    let lam_dev = (ls - la).abs() / la;
    check(
        a.records.len() == 10 && sa.records.len() == 10 && cell_dev <= 0.05 && lam_dev <= 1e-3,
        format!(
            "cells {ca} vs {cs} ({:.2}%), λ₁ relative difference {lam_dev:.2e}",
            100.0 * cell_dev
        ),
    )
}

fn intermediate_solve(h: &RunHistory) -> f64 {
    let n = h.records.len();
    h.records[1..n - 1].iter().map(|r| r.t_solve_s).sum()
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let problem = Problem::new(Domain::Lshape).with_initial_refinements(6);
    let config = AdaptiveConfig {
        theta: 0.4,
        max_levels: 14,
        r: 3,
        ..Default::default()
    };
    // interleaved repetitions; the fastest of each damps machine noise
    let mut best: [Option<RunHistory>; 2] = [None, None];
    for _ in 0..3 {
        let runs = [
            a_pinvit(&problem, &config).map_err(err)?,
            sa_pinvit(&problem, &config).map_err(err)?,
        ];
        for (slot, h) in best.iter_mut().zip(runs) {
            if slot
                .as_ref()
                .is_none_or(|b| h.total_time() < b.total_time())
            {
                *slot = Some(h);
            }
        }
    }
    let [Some(a), Some(sa)] = best else {
        unreachable!()
    };
    let secs = t.elapsed().as_secs_f64();
    let ratio = sa.total_time() / a.total_time();
    let solve_gain = intermediate_solve(&a) / intermediate_solve(&sa);
    let dofs = a.final_record().n_dofs.min(sa.final_record().n_dofs);
    let levels = a.records.len().min(sa.records.len());
    check(
        levels >= 8 && dofs >= 300_000 && ratio <= 0.7 && solve_gain >= 3.0 && secs < 600.0,
        format!(
            "{levels} levels, {dofs} dofs; total {:.2} s vs {:.2} s (ratio {ratio:.3}); intermediate solves {solve_gain:.2}x faster; runtime {secs:.0} s",
            a.total_time(),
            sa.total_time()
        ),
    )
}

fn criterion_6() -> Outcome {
    let problem = Problem::new(Domain::Dumbbell);
    let space = FeSpace::new(Arc::new(problem.initial_mesh().map_err(err)?));
    let n = space.n_free();
    let dense = dense_reference(&space, 7).map_err(err)?;
    let hierarchy = Hierarchy::new(space.stiffness().clone()).map_err(err)?;
    let p = PrecondSpec::Exact.build(&hierarchy).map_err(err)?;
    let start = random_block(space.mass(), 6, 42).map_err(err)?;
    let (block, _) = bpinvit(
        space.stiffness(),
        space.mass(),
        &start,
        p.as_ref(),
        &SolverParams::new(2000, 1e-12),
    )
    .map_err(err)?;
    let dev = block
        .values
        .iter()
        .zip(&dense.values)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    let gap = dense.values[6] / dense.values[5];
    check(
        n <= 500 && dev <= 1e-9 && gap > 1.0,
        format!("N = {n}, max relative deviation {dev:.2e}, λ₇/λ₆ = {gap:.4}"),
    )
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let b = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut a = b.transpose().matmul(&b);
    for i in 0..n {
        a[(i, i)] += 0.5 * n as f64;
    }
    SparseMatrix::from_dense(&a).with_symmetric(true)
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn property_a() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let a = random_spd(10, &mut rng);
        let m = random_spd(10, &mut rng);
        let h = Hierarchy::new(a.clone()).map_err(err)?;
        let p = PrecondSpec::Jacobi {
            steps: 2,
            damping: 0.5,
        }
        .build(&h)
        .map_err(err)?;
        let v = random_vec(10, &mut rng);
        worst = worst.max(error_propagation_check(&a, &m, p.as_ref(), &v).map_err(err)?);
    }
    check(worst <= 1e-12, format!("largest defect {worst:.2e}"))
}

fn property_b() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_spd(30, &mut rng);
    let bounds = estimate_spectral_bounds(&a).map_err(err)?;
    let omega = 2.0 / (bounds.0 + bounds.1);
    let b = random_vec(30, &mut rng);
    let x0 = random_vec(30, &mut rng);
    let mut worst = 0.0f64;
    for steps in [1, 2, 5] {
        let xc = chebyshev_smooth(&a, &b, &x0, steps, 1, bounds).map_err(err)?;
        let xj = jacobi_smooth(&a, &b, &x0, steps, omega).map_err(err)?;
        for (u, v) in xc.iter().zip(&xj) {
            worst = worst.max((u - v).abs() / v.abs().max(1.0));
        }
    }
    check(worst <= 1e-14, format!("largest difference {worst:.2e}"))
}

fn property_c() -> Outcome {
    let space = FeSpace::new(Arc::new(
        Problem::new(Domain::Lshape).initial_mesh().map_err(err)?,
    ));
    let h = Hierarchy::new(space.stiffness().clone()).map_err(err)?;
    let p = PrecondSpec::Exact.build(&h).map_err(err)?;
    let mut violations = 0;
    for seed in 0..20 {
        let v0 = random_block(space.mass(), 1, seed).map_err(err)?.remove(0);
        let (_, log) = pinvit(
            space.stiffness(),
            space.mass(),
            &v0,
            p.as_ref(),
            &SolverParams::new(200, 1e-14),
        )
        .map_err(err)?;
        let mu: Vec<f64> = log.entries.iter().map(|e| e.values[0]).collect();
        violations += mu
            .windows(2)
            .filter(|w| w[1] > w[0] * (1.0 + 1e-14))
            .count();
    }
    check(
        violations == 0,
        format!("{violations} increases over 20 starts"),
    )
}

fn property_d() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let n = rng.gen_range(1..60);
        let theta = rng.gen_range(0.05..=1.0);
        let eta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let cells: Vec<usize> = (0..n).collect();
        let m = doerfler_mark(&cells, &eta, theta).map_err(err)?;
        let total: f64 = eta.iter().sum();
        let marked: f64 = m.cells.iter().map(|&c| eta[c]).sum();
        let mut sorted = eta.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        // no set of one fewer cell reaches the bulk
        let k = m.cells.len();
        let best_smaller: f64 = sorted[..k.saturating_sub(1)].iter().sum();
        if marked < theta * total * (1.0 - 1e-12) || (k > 0 && best_smaller >= theta * total) {
            return Err(format!(
                "trial {trial}: {k} cells, bulk {marked} of {total}"
            ));
        }
    }
    Ok("100 vectors minimal and bulk".into())
}

fn property_e() -> Outcome {
    let h = {
        let mut found = None;
        let config = AdaptiveConfig {
            theta: 0.5,
            max_levels: 4,
            ..Default::default()
        };
        run_observed(&Problem::new(Domain::Lshape), &config, false, &mut |view| {
            if view.record.level == 4 {
                found = Some((
                    view.space.dofs().mesh().clone(),
                    view.block.values[0],
                    view.block.vectors[0].clone(),
                ));
            }
            Ok(())
        })
        .map_err(err)?;
        found.ok_or("no level 4")?
    };
    let (mesh, mu, v) = h;
    let space = FeSpace::new(mesh);
    let base = mark(
        &estimate_reduced(&space, mu, &v, EdgeAttribution::BothFull).map_err(err)?,
        0.5,
    )
    .map_err(err)?;
    for alpha in [1e-6, 1.0, 1e6] {
        let w: Vec<f64> = v.iter().map(|x| alpha * x).collect();
        let m = mark(
            &estimate_reduced(&space, mu, &w, EdgeAttribution::BothFull).map_err(err)?,
            0.5,
        )
        .map_err(err)?;
        if m.cells != base.cells {
            return Err(format!("marked set changes at α = {alpha:e}"));
        }
    }
    Ok(format!(
        "{} marked cells unchanged for all α",
        base.cells.len()
    ))
}

fn strip_timings(h: &RunHistory) -> Vec<LevelRecord> {
    h.records
        .iter()
        .map(|r| LevelRecord {
            t_setup_s: 0.0,
            t_solve_s: 0.0,
            t_estimate_s: 0.0,
            t_mark_s: 0.0,
            t_refine_s: 0.0,
            ..r.clone()
        })
        .collect()
}

fn property_f() -> Outcome {
    let config = AdaptiveConfig {
        theta: 0.5,
        max_levels: 6,
        r: 2,
        p_int: PrecondSpec::gmg(1),
        max_iter_int: 500,
        ..Default::default()
    };
    let problem = Problem::new(Domain::Lshape);
    let a = a_pinvit(&problem, &config).map_err(err)?;
    let sa = sa_pinvit(&problem, &config).map_err(err)?;
    let same =
        strip_timings(&a) == strip_timings(&sa) && a.final_block.vectors == sa.final_block.vectors;
    check(same, format!("{} levels compared", a.records.len()))
}

fn energy_defect(coarse: &FeSpace, fine: &FeSpace) -> Result<f64, String> {
    let p = fine.prolongation_from(coarse).map_err(err)?.to_dense();
    let af = fine.stiffness().to_dense();
    let ac = coarse.stiffness().to_dense();
    let galerkin = p.transpose().matmul(&af).matmul(&p);
    let mut worst = 0.0f64;
    let scale = ac.frobenius_norm();
    for i in 0..ac.nrows() {
        for j in 0..ac.ncols() {
            worst = worst.max((galerkin[(i, j)] - ac[(i, j)]).abs() / scale);
        }
    }
    Ok(worst)
}

fn property_g() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut mesh: Mesh = Problem::new(Domain::Lshape)
        .with_initial_refinements(1)
        .initial_mesh()
        .map_err(err)?;
    let mut coarse = FeSpace::new(Arc::new(mesh.clone()));
    for _ in 0..5 {
        let flags: Vec<usize> = mesh
            .active_cells()
            .into_iter()
            .filter(|_| rng.gen_bool(0.3))
            .collect();
        mesh = mesh.refine(&flags).map_err(err)?;
        let fine = FeSpace::new(Arc::new(mesh.clone()));
        worst = worst.max(energy_defect(&coarse, &fine)?);
        coarse = fine;
    }
    check(
        worst <= 1e-12,
        format!("largest relative defect {worst:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let parts: [(&str, fn() -> Outcome); 7] = [
        ("a", property_a),
        ("b", property_b),
        ("c", property_c),
        ("d", property_d),
        ("e", property_e),
        ("f", property_f),
        ("g", property_g),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, f) in parts {
        match f() {
            Ok(d) => lines.push(format!("{name}: {d}")),
            Err(d) => {
                ok = false;
                lines.push(format!("{name} FAILED: {d}"));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn criterion_8() -> Outcome {
    let exact = [2.0 * PI * PI, 5.0 * PI * PI, 5.0 * PI * PI];
    let lambda_next = 8.0 * PI * PI;
    let problem = Problem::new(Domain::UnitSquare).with_initial_refinements(0);
    let mut mesh = problem.coarse_mesh().map_err(err)?;
    let mut space = FeSpace::new(Arc::new(mesh.clone()));
    let mut hierarchy: Option<Hierarchy> = None;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut meshes = 0;
    while meshes < 5 {
        mesh = mesh.refine_uniform();
        let fine = FeSpace::new(Arc::new(mesh.clone()));
        match hierarchy.as_mut() {
            Some(h) => h
                .push_level(
                    fine.stiffness().clone(),
                    fine.prolongation_from(&space).map_err(err)?,
                )
                .map_err(err)?,
            None if fine.n_free() > 0 => {
                hierarchy = Some(Hierarchy::new(fine.stiffness().clone()).map_err(err)?)
            }
            None => {}
        }
        space = fine;
        if space.n_free() < 4 {
            continue;
        }
        let h = hierarchy.as_ref().expect("built above");
        let p = PrecondSpec::gmg(2).build(h).map_err(err)?;
        let start = random_block(space.mass(), 3, 11).map_err(err)?;
        let (block, _) = bpinvit(
            space.stiffness(),
            space.mass(),
            &start,
            p.as_ref(),
            &SolverParams::new(500, 1e-12),
        )
        .map_err(err)?;
        let algebraic = (0..3)
            .map(|i| {
                algebraic_error_proxy(
                    space.stiffness(),
                    space.mass(),
                    block.values[i],
                    &block.vectors[i],
                    p.as_ref(),
                )
            })
            .collect::<Result<Vec<f64>, _>>()
            .map_err(err)?;
        let report = cluster_report(
            &space,
            &block,
            lambda_next,
            &algebraic,
            ClusterConstants::default(),
        )
        .map_err(err)?;
        let truth: f64 = block
            .values
            .iter()
            .zip(&exact)
            .map(|(l, e)| (l - e).abs() / e)
            .sum();
        let bound = report.bound.value().unwrap_or(f64::NAN);
        ok &= bound >= truth;
        lines.push(format!(
            "N={} bound {bound:.3e} ≥ {truth:.3e}",
            space.n_free()
        ));

        let gapless = cluster_report(
            &space,
            &block,
            block.values[2],
            &algebraic,
            ClusterConstants::default(),
        )
        .map_err(err)?;
        ok &= gapless.bound == ClusterBound::NoBound;
        meshes += 1;
    }
    lines.push("no-bound marker returned without a gap".into());
    check(ok, lines.join("; "))
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 8] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|k| (1..=criteria.len()).contains(k))
        .collect();
    let mut failed = 0;
    for (k, f) in criteria.iter().enumerate() {
        let id = k + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {id} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id} ({secs:.1} s): {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
