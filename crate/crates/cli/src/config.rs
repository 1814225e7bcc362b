use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use sapinvit::adaptivity::{AdaptiveConfig, Problem};
use sapinvit::linalg::PrecondSpec;
use sapinvit::mesh::{Domain, GeometryParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Apinvit,
    Sapinvit,
    Compare,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Apinvit => "apinvit",
            Mode::Sapinvit => "sapinvit",
            Mode::Compare => "compare",
        })
    }
}

/// Command-line overrides. Every field is optional so that unset flags fall
/// through to the config file and then to the defaults.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// unit_square, lshape or dumbbell
    #[arg(long)]
    pub problem: Option<Domain>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Maximum number of adaptive levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Dörfler bulk parameter in (0, 1].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Block size.
    #[arg(long)]
    pub r: Option<usize>,
    /// Preconditioner for converged solves, e.g. `gmg:1`, `chebyshev:2:4`, `exact`.
    #[arg(long)]
    pub p_ext: Option<PrecondSpec>,
    /// Preconditioner for intermediate smoothing steps.
    #[arg(long)]
    pub p_int: Option<PrecondSpec>,
    #[arg(long)]
    pub max_iter_ext: Option<usize>,
    #[arg(long)]
    pub max_iter_int: Option<usize>,
    #[arg(long)]
    pub tol_ext: Option<f64>,
    #[arg(long)]
    pub tol_int: Option<f64>,
    #[arg(long)]
    pub tol_eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Uniform refinements of the coarse grid before the first solve.
    #[arg(long)]
    pub initial_refinements: Option<usize>,
    /// Worker threads; 1 gives the deterministic serial mode.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

/// Contents of a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<Domain>,
    pub mode: Option<Mode>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub initial_refinements: Option<usize>,
    pub geometry: Option<GeometryParams>,
    pub adaptive: Option<AdaptiveConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub mode: Mode,
    pub adaptive: AdaptiveConfig,
    pub threads: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: &Overrides) -> Result<Self> {
        let domain = flags.problem.or(file.problem).unwrap_or(Domain::Lshape);
        let mut problem = Problem::new(domain);
        if let Some(g) = file.geometry {
            problem.geometry = g;
        }
        if let Some(n) = flags.initial_refinements.or(file.initial_refinements) {
            problem.initial_refinements = n;
        }

        let mut a = file.adaptive.unwrap_or_default();
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = flags.$flag { a.$field = v; })*
            };
        }
        apply!(
            levels => max_levels,
            theta => theta,
            r => r,
            p_ext => p_ext,
            p_int => p_int,
            max_iter_ext => max_iter_ext,
            max_iter_int => max_iter_int,
            tol_ext => tol_ext,
            tol_int => tol_int,
            tol_eta => tol_eta,
            seed => seed,
        );
        a.validate()?;

        let threads = flags.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        Ok(Self {
            problem,
            mode: flags.mode.or(file.mode).unwrap_or(Mode::Compare),
            adaptive: a,
            threads,
            output_dir: flags
                .output_dir
                .clone()
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}
