use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};

use sapinvit::adaptivity::{LevelRecord, RunHistory};
use sapinvit::fem::FeSpace;
use sapinvit::mesh::{Domain, Mesh};
use sapinvit::oracle::{
    analytic_square_spectrum, dense_reference, extrapolated_reference, Provenance,
    ReferenceSpectrum, DENSE_MAX_DOFS,
};

/// Reference eigenvalues for error plots: analytic on the unit square,
/// otherwise extrapolated from a history, otherwise a dense solve on the
/// final mesh when it is small enough.
pub fn choose_reference(
    domain: Domain,
    r: usize,
    histories: &[&RunHistory],
    final_mesh: Option<&Arc<Mesh>>,
) -> Option<ReferenceSpectrum> {
    if domain == Domain::UnitSquare {
        return Some(analytic_square_spectrum(r));
    }
    for h in histories {
        if let Ok(reference) = extrapolated_reference(domain, &h.records, r) {
            return Some(reference);
        }
    }
    let space = FeSpace::new(Arc::clone(final_mesh?));
    if space.n_free() > DENSE_MAX_DOFS || space.n_free() < r {
        return None;
    }
    dense_reference(&space, r).ok()
}

fn relative_errors(rec: &LevelRecord, reference: &ReferenceSpectrum) -> Vec<f64> {
    rec.eigenvalues
        .iter()
        .zip(&reference.values)
        .map(|(l, r)| (l - r).abs() / r)
        .collect()
}

fn stage_times(rec: &LevelRecord) -> [f64; 5] {
    [
        rec.t_setup_s,
        rec.t_solve_s,
        rec.t_estimate_s,
        rec.t_mark_s,
        rec.t_refine_s,
    ]
}

/// Gnuplot data for one or more labelled histories, rows aligned by level.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// `level, n_dofs, err_1..err_r` per history.
    pub convergence: String,
    /// `level, setup, solve, estimate, mark, refine` per history.
    pub times: String,
    pub warnings: Vec<String>,
}

pub fn emit_plot_data(
    runs: &[(&str, &[LevelRecord])],
    reference: Option<&ReferenceSpectrum>,
) -> PlotData {
    let mut warnings = Vec::new();
    let levels = runs.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    if levels == 0 {
        warnings.push("empty history, plot data files left empty".to_string());
        return PlotData {
            convergence: String::new(),
            times: String::new(),
            warnings,
        };
    }
    if reference.is_none() {
        warnings.push("no reference spectrum, error columns omitted".to_string());
    }
    let n_err = reference.map_or(0, |reference| {
        runs.iter()
            .flat_map(|(_, recs)| recs.iter())
            .map(|rec| rec.eigenvalues.len().min(reference.values.len()))
            .max()
            .unwrap_or(0)
    });

    let mut conv = String::from("# level");
    let mut times = String::from("# level");
    for (label, _) in runs {
        let _ = write!(conv, " {label}_n_dofs");
        for i in 1..=n_err {
            let _ = write!(conv, " {label}_err_{i}");
        }
        for stage in ["setup", "solve", "estimate", "mark", "refine"] {
            let _ = write!(times, " {label}_{stage}");
        }
    }
    conv.push('\n');
    times.push('\n');

    for level in 0..levels {
        let _ = write!(conv, "{}", level + 1);
        let _ = write!(times, "{}", level + 1);
        for (_, recs) in runs {
            match recs.get(level) {
                Some(rec) => {
                    let _ = write!(conv, " {}", rec.n_dofs);
                    let errs = reference
                        .map(|r| relative_errors(rec, r))
                        .unwrap_or_default();
                    for i in 0..n_err {
                        match errs.get(i) {
                            Some(e) => {
                                let _ = write!(conv, " {e:.6e}");
                            }
                            None => conv.push_str(" NaN"),
                        }
                    }
                    for t in stage_times(rec) {
                        let _ = write!(times, " {t:.6e}");
                    }
                }
                None => {
                    for _ in 0..=n_err {
                        conv.push_str(" NaN");
                    }
                    times.push_str(" NaN NaN NaN NaN NaN");
                }
            }
        }
        conv.push('\n');
        times.push('\n');
    }
    PlotData {
        convergence: conv,
        times,
        warnings,
    }
}

/// Least-squares slope of `log err` against `log n_dofs` for eigenvalue `i`.
pub fn convergence_slope(
    records: &[LevelRecord],
    reference: &ReferenceSpectrum,
    i: usize,
) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|rec| {
            let e = (rec.eigenvalues.get(i)? - reference.values.get(i)?).abs();
            (e > 0.0).then(|| ((rec.n_dofs as f64).ln(), e.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn describe(out: &mut String, label: &str, h: &RunHistory, reference: Option<&ReferenceSpectrum>) {
    let last = h.final_record();
    let _ = writeln!(out, "[{label}]");
    let _ = writeln!(out, "levels = {}", h.records.len());
    let _ = writeln!(out, "final_cells = {}", last.n_cells);
    let _ = writeln!(out, "final_dofs = {}", last.n_dofs);
    for (i, l) in last.eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "lambda_{} = {l:.12}", i + 1);
    }
    let _ = writeln!(out, "eta = {:.6e}", last.eta_total);
    let _ = writeln!(out, "converged = {}", h.final_converged);
    let _ = writeln!(out, "total_time_s = {:.6}", h.total_time());
    if let Some(reference) = reference {
        for (i, e) in relative_errors(last, reference).iter().enumerate() {
            let _ = writeln!(out, "rel_error_{} = {e:.6e}", i + 1);
        }
        // errors against the final mesh's own spectrum say nothing about the rate
        let final_mesh_reference = matches!(
            reference.provenance,
            Provenance::Dense { n_dofs } if n_dofs == last.n_dofs
        );
        if let Some(s) =
            convergence_slope(&h.records, reference, 0).filter(|_| !final_mesh_reference)
        {
            let _ = writeln!(out, "slope_1 = {s:.4}");
        }
    }
    out.push('\n');
}

pub fn summary(runs: &[(&str, &RunHistory)], reference: Option<&ReferenceSpectrum>) -> String {
    let mut out = String::new();
    if let Some((_, h)) = runs.first() {
        let _ = writeln!(out, "problem = {}", h.problem.domain);
        let _ = writeln!(out, "seed = {}", h.config.seed);
        let _ = writeln!(out, "theta = {}", h.config.theta);
        let _ = writeln!(out, "r = {}", h.config.r);
    }
    match reference {
        Some(r) => {
            let _ = writeln!(out, "reference = {}", r.provenance);
        }
        None => out.push_str("reference = none\n"),
    }
    out.push('\n');
    for (label, h) in runs {
        describe(&mut out, label, h, reference);
    }
    if let [(_, a), (_, sa)] = runs {
        let (ta, tsa) = (a.total_time(), sa.total_time());
        let _ = writeln!(out, "[compare]");
        let _ = writeln!(out, "t_apinvit_s = {ta:.6}");
        let _ = writeln!(out, "t_sapinvit_s = {tsa:.6}");
        let _ = writeln!(out, "speedup = {:.4}", ta / tsa);
        let cells = a.final_record().n_cells as f64;
        let _ = writeln!(
            out,
            "cell_difference = {:.4}",
            (sa.final_record().n_cells as f64 - cells).abs() / cells
        );
    }
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}
