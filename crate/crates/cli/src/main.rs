//! Command-line driver for the adaptive eigensolvers.
//!
//! Writes into the output directory:
//!
//! - `history.csv` (`history_apinvit.csv` and `history_sapinvit.csv` in
//!   compare mode), one row per level;
//! - `reference.csv`, the spectrum used for error columns;
//! - `mesh_L<level>.vtk` with the cell indicators (prefixed by the driver in
//!   compare mode);
//! - `convergence.dat` and `times.dat` for gnuplot;
//! - `summary.txt`.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;

use sapinvit::adaptivity::{run_observed, RunHistory};
use sapinvit::mesh::Mesh;

use config::{FileConfig, Mode, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "sapinvit", version, about = "Adaptive PINVIT eigensolver runs")]
struct Cli {
    /// TOML file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

struct Run {
    history: RunHistory,
    final_mesh: Option<Arc<Mesh>>,
}

fn execute(config: &RunConfig, smoothed: bool, vtk_prefix: &str) -> Result<Run> {
    let mut final_mesh = None;
    let dir = &config.output_dir;
    let history = run_observed(&config.problem, &config.adaptive, smoothed, &mut |view| {
        let mesh = view.space.mesh();
        let mut slot = vec![usize::MAX; mesh.n_cells()];
        for (k, &c) in view.estimates.cells.iter().enumerate() {
            slot[c] = k;
        }
        let eta_sq: Vec<f64> = mesh
            .active_cells()
            .into_iter()
            .map(|c| view.estimates.eta_sq[slot[c]])
            .collect();
        let path = dir.join(format!("{vtk_prefix}L{}.vtk", view.record.level));
        mesh.write_vtk(&path, &[("eta_sq", &eta_sq)])?;
        final_mesh = Some(Arc::clone(mesh));
        Ok(())
    })?;
    Ok(Run {
        history,
        final_mesh,
    })
}

fn run(config: &RunConfig) -> Result<()> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    check_writable(dir)?;

    let runs: Vec<(&str, Run)> = match config.mode {
        Mode::Apinvit => vec![("apinvit", execute(config, false, "mesh_")?)],
        Mode::Sapinvit => vec![("sapinvit", execute(config, true, "mesh_")?)],
        Mode::Compare => vec![
            ("apinvit", execute(config, false, "mesh_apinvit_")?),
            ("sapinvit", execute(config, true, "mesh_sapinvit_")?),
        ],
    };

    for (label, run) in &runs {
        let name = if runs.len() == 1 {
            "history.csv".to_string()
        } else {
            format!("history_{label}.csv")
        };
        output::write(dir, &name, &run.history.to_csv())?;
    }

    let histories: Vec<&RunHistory> = runs.iter().map(|(_, r)| &r.history).collect();
    let reference = output::choose_reference(
        config.problem.domain,
        config.adaptive.r,
        &histories,
        runs.last().and_then(|(_, r)| r.final_mesh.as_ref()),
    );
    match &reference {
        Some(r) => output::write(dir, "reference.csv", &r.to_csv())?,
        None => eprintln!("warning: no reference spectrum available, reference.csv not written"),
    }

    let records: Vec<(&str, &[_])> = runs
        .iter()
        .map(|(l, r)| (*l, r.history.records.as_slice()))
        .collect();
    let plot = output::emit_plot_data(&records, reference.as_ref());
    for w in &plot.warnings {
        eprintln!("warning: {w}");
    }
    output::write(dir, "convergence.dat", &plot.convergence)?;
    output::write(dir, "times.dat", &plot.times)?;

    let labelled: Vec<(&str, &RunHistory)> = runs.iter().map(|(l, r)| (*l, &r.history)).collect();
    let summary = output::summary(&labelled, reference.as_ref());
    output::write(dir, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn check_writable(dir: &Path) -> Result<()> {
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"")
        .with_context(|| format!("output directory {} is not writable", dir.display()))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let file = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let config = RunConfig::resolve(file, &cli.overrides)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .context("configuring the thread pool")?;
        run(&config)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
