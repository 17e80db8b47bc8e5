//! Batch front end: configuration parsing, dispatch and atomic output.

pub mod config;
pub mod expr;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dphase_core::harness::{
    caccioppoli_study, comparison_study, equivalence_study, obstacle_approximation_study, regularization_study,
    StudyTable,
};
use dphase_core::mesh::{write_field, NodalField};
use dphase_core::variational::{solve_dirichlet, solve_obstacle, SolveReport};
use dphase_core::viscosity::solve_viscosity;
use dphase_core::Error;
use sha2::{Digest, Sha256};

pub use config::{parse_config, ConfigError, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyName {
    Equivalence,
    Comparison,
    Caccioppoli,
    Regularization,
    #[value(name = "obstacle-approximation", alias = "obstacle_approximation")]
    ObstacleApproximation,
}

impl StudyName {
    pub fn label(self) -> &'static str {
        match self {
            StudyName::Equivalence => "equivalence",
            StudyName::Comparison => "comparison",
            StudyName::Caccioppoli => "caccioppoli",
            StudyName::Regularization => "regularization",
            StudyName::ObstacleApproximation => "obstacle_approximation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SolveVar,
    SolveVisc,
    SolveObstacle,
    Study(StudyName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    NonConvergence = 1,
    ConfigError = 2,
    VerdictFail = 3,
}

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Lowercase hex SHA-256 of the configuration text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn status_for(err: &Error) -> ExitStatus {
    match err {
        Error::NonConvergence { .. } | Error::LinearSolveFailure { .. } | Error::NonMonotoneStencil(_) => {
            ExitStatus::NonConvergence
        }
        _ => ExitStatus::ConfigError,
    }
}

fn report_csv(report: &SolveReport, header: &str) -> String {
    let mut s = format!("{header}\nquantity,value\n");
    let _ = writeln!(s, "converged,{}", report.converged);
    let _ = writeln!(s, "iterations,{}", report.iterations);
    let _ = writeln!(s, "residual_norm,{:e}", report.residual_norm);
    let _ = writeln!(s, "energy,{:e}", report.energy);
    if let Some(n) = report.active_set_size {
        let _ = writeln!(s, "active_set_size,{n}");
        let _ = writeln!(s, "active_set_cycles,{}", report.active_set_cycles);
    }
    let _ = writeln!(s, "experimental,{}", report.experimental);
    s
}

struct Outputs {
    dir: PathBuf,
    prefix: String,
    header: String,
    hash: String,
}

impl Outputs {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }

    fn field(&self, tag: &str, field: &NodalField, report: &SolveReport) -> Result<Vec<PathBuf>, Error> {
        let mut buf = Vec::new();
        write_field(field, &mut buf)?;
        let fp = self.path(&format!("{tag}.field"));
        write_atomic(&fp, &buf)?;
        let rp = self.path(&format!("{tag}.csv"));
        write_atomic(&rp, report_csv(report, &format!("{} command=solve-{tag}", self.header)).as_bytes())?;
        Ok(vec![fp, rp])
    }

    fn table(&self, table: &StudyTable) -> Result<PathBuf, Error> {
        let mut buf = Vec::new();
        table.write_csv(&mut buf, &self.hash)?;
        let p = self.path(&format!("{}.csv", table.name));
        write_atomic(&p, &buf)?;
        Ok(p)
    }
}

/// Runs one command; diagnostics go to `err`.
pub fn run(command: Command, config_text: &str, overrides: &Overrides, err: &mut dyn Write) -> ExitStatus {
    let mut cfg = match parse_config(config_text) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return ExitStatus::ConfigError;
        }
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    let hash = config_hash(config_text);
    let out = Outputs {
        dir: overrides.out.clone().unwrap_or_else(|| cfg.output.directory.clone()),
        prefix: cfg.output.prefix.clone(),
        header: format!("# dphase {VERSION} config={hash} seed={}", cfg.seed),
        hash,
    };
    if let Err(e) = fs::create_dir_all(&out.dir) {
        let _ = writeln!(err, "error: cannot create output directory {}: {e}", out.dir.display());
        return ExitStatus::ConfigError;
    }
    match dispatch(command, &cfg, &out, err) {
        Ok(status) => status,
        Err(Failure::Build(e)) => {
            let _ = writeln!(err, "error: configuration key {e}");
            ExitStatus::ConfigError
        }
        Err(Failure::Core(e)) => {
            let _ = writeln!(err, "error: {e}");
            if let Error::NonConvergence { report, .. } = &e {
                let _ = writeln!(
                    err,
                    "  after {} iterations, last residual {:e}",
                    report.iterations, report.residual_norm
                );
            }
            status_for(&e)
        }
    }
}

enum Failure {
    Build(config::BuildError),
    Core(Error),
}

impl From<config::BuildError> for Failure {
    fn from(e: config::BuildError) -> Self {
        Failure::Build(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn dispatch(command: Command, cfg: &RunConfig, out: &Outputs, err: &mut dyn Write) -> Result<ExitStatus, Failure> {
    let written = match command {
        Command::SolveVar => {
            let (u, rep) = solve_dirichlet(&cfg.spec()?, &cfg.solver_options())?;
            out.field("var", &u, &rep)?
        }
        Command::SolveVisc => {
            let (u, rep) = solve_viscosity(&cfg.spec()?, &cfg.viscosity_options())?;
            if rep.experimental {
                let _ = writeln!(err, "warning: variable coefficient run is experimental");
            }
            out.field("visc", &u, &rep)?
        }
        Command::SolveObstacle => {
            let (u, rep) = solve_obstacle(&cfg.obstacle_spec()?, &cfg.solver_options())?;
            out.field("obstacle", &u, &rep)?
        }
        Command::Study(name) => {
            let table = study(name, cfg)?;
            let path = out.table(&table)?;
            if !table.verdict {
                let failed = table.failed_checks()?;
                let _ = writeln!(err, "verdict: FAIL ({} study)", name.label());
                for c in failed {
                    let _ = writeln!(err, "  failed check: {c:?}");
                }
                let _ = writeln!(err, "wrote {}", path.display());
                return Ok(ExitStatus::VerdictFail);
            }
            vec![path]
        }
    };
    for p in written {
        let _ = writeln!(err, "wrote {}", p.display());
    }
    Ok(ExitStatus::Ok)
}

fn study(name: StudyName, cfg: &RunConfig) -> Result<StudyTable, Failure> {
    let opts = cfg.study_options();
    let s = &cfg.study;
    let spec = cfg.spec()?;
    Ok(match name {
        StudyName::Equivalence => {
            if !spec.params().coeff().is_constant() && !cfg.tolerances.allow_variable_coefficient {
                return Err(Failure::Build(config::BuildError {
                    key: "coefficient",
                    reason: "the equivalence study requires a constant coefficient a(x) (set \
                             tolerances.allow_variable_coefficient = true to run it as an experiment)"
                        .into(),
                }));
            }
            equivalence_study(&spec, s.refinements, &opts)?
        }
        StudyName::Comparison => comparison_study(&spec, s.trials, &opts)?,
        StudyName::Caccioppoli => caccioppoli_study(&spec, s.cutoffs, &opts)?,
        StudyName::Regularization => regularization_study(&spec, &s.epsilons, &opts)?,
        StudyName::ObstacleApproximation => {
            let target = s.target.as_ref().unwrap_or(&cfg.problem.boundary).expr.clone();
            obstacle_approximation_study(&spec, move |x| target.eval(x), s.levels, &opts)?
        }
    })
}
