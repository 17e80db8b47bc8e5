use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dphase_cli::{run, Command, ExitStatus, Overrides, StudyName};

#[derive(Parser)]
#[command(name = "dphase", version, about = "Double-phase elliptic solvers and verification studies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized studies; overrides `[study] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Variational (Newton) Dirichlet solve.
    SolveVar(Common),
    /// Monotone finite-difference solve of the expanded equation.
    SolveVisc(Common),
    /// Obstacle problem; boundary values come from the obstacle.
    SolveObstacle(Common),
    /// Run a verification study and write its table.
    Study {
        #[arg(value_enum)]
        name: StudyName,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::SolveVar(c) => (Command::SolveVar, c),
        Cmd::SolveVisc(c) => (Command::SolveVisc, c),
        Cmd::SolveObstacle(c) => (Command::SolveObstacle, c),
        Cmd::Study { name, common } => (Command::Study(name), common),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return ExitCode::from(ExitStatus::ConfigError as u8);
        }
    };
    let overrides = Overrides {
        out: common.out,
        seed: common.seed,
    };
    let status = run(command, &text, &overrides, &mut std::io::stderr());
    ExitCode::from(status as u8)
}
