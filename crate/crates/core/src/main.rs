use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use extremal::cli::{load_config, run, RunConfig, TaskKind, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "extremal", version, about = "Minimal branch, extremal solution and stability checks for singular reaction-advection problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `solver.threads`).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the randomized property checks; solver paths ignore it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Minimal solution at `task.lambda`.
    Solve,
    /// Minimal branch over `task.lambdas` or fractions of the threshold.
    Branch,
    /// Threshold bracket, extremal profile and regularity verdict.
    LambdaStar,
    /// Verification matrix; exit code 3 if any check fails.
    Verify,
    /// Planar solve on the unit square or inscribed disk.
    Planar,
}

impl Command {
    fn task(self) -> TaskKind {
        match self {
            Command::Solve => TaskKind::Solve,
            Command::Branch => TaskKind::Branch,
            Command::LambdaStar => TaskKind::LambdaStar,
            Command::Verify => TaskKind::VerifyAll,
            Command::Planar => TaskKind::Planar,
        }
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => extremal::cli::parse_config("").map_err(|e| e.to_string())?,
    };
    let task = cli.command.task();
    if let Some(kind) = cfg.task.kind {
        if kind != task {
            return Err(format!("config selects task `{}` but the subcommand is `{}`", kind.name(), task.name()));
        }
    }
    cfg.task.kind = Some(task);
    if let Some(out) = &cli.out {
        cfg.output.directory = out.to_string_lossy().into_owned();
    }
    if let Some(t) = cli.threads {
        cfg.solver.threads = t;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.solver.threads).build_global() {
        eprintln!("warning: thread pool: {e}");
    }
    match run(&cfg, cli.seed) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
