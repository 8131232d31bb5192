use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chcbf::harness::config::preset;
use chcbf::harness::experiments;
use chcbf::harness::{ExperimentReport, LoadedConfig};
use chcbf::parallel::{configure_threads_from_env, Execution};
use chcbf::HarnessError;

#[derive(Parser)]
#[command(
    name = "chcbf",
    version,
    about = "Stochastic tumor-growth spectral simulator and verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write the energy CSV and snapshots.
    Simulate(Common),
    /// Run the operator property suite.
    VerifyOperators(Common),
    /// Compare shared-noise runs across resolutions.
    GalerkinConvergence(Common),
    /// Bitwise determinism and continuous dependence on initial data.
    Uniqueness(Common),
    /// Monte Carlo moment estimates under path doubling.
    EnsembleMoments(Common),
    /// Long-horizon 2D runs over several Forchheimer exponents.
    #[command(name = "soak-2d")]
    Soak2d(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; experiment defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for reports and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ensemble size.
    #[arg(long)]
    paths: Option<usize>,
    /// Comma-separated grid sizes, e.g. 16,32,64.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<usize>>,
    /// Run trajectories on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

fn load(name: &str, c: &Common) -> Result<LoadedConfig, HarnessError> {
    let mut lc = match &c.config {
        Some(path) => LoadedConfig::load(path)?,
        None => LoadedConfig::from_config(preset(name)),
    };
    if let Some(seed) = c.seed {
        lc.config.experiment.seed = seed;
    }
    if let Some(paths) = c.paths {
        lc.config.experiment.paths = paths;
    }
    if let Some(modes) = &c.modes {
        lc.config.experiment.modes = modes.clone();
        if name != "galerkin-convergence" {
            if let Some(&m) = modes.first() {
                lc.config.domain.modes = m;
            }
        }
    }
    Ok(lc)
}

fn dispatch(cmd: &Command) -> Result<ExperimentReport, HarnessError> {
    let (name, c) = match cmd {
        Command::Simulate(c) => ("simulate", c),
        Command::VerifyOperators(c) => ("verify-operators", c),
        Command::GalerkinConvergence(c) => ("galerkin-convergence", c),
        Command::Uniqueness(c) => ("uniqueness", c),
        Command::EnsembleMoments(c) => ("ensemble-moments", c),
        Command::Soak2d(c) => ("soak-2d", c),
    };
    let lc = load(name, c)?;
    let exec = if c.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let out = c.out.as_deref();
    match cmd {
        Command::Simulate(_) => experiments::simulate(&lc, out),
        Command::VerifyOperators(_) => experiments::verify_operators(&lc, exec, out),
        Command::GalerkinConvergence(_) => {
            let modes = lc.config.experiment.modes.clone();
            experiments::galerkin_convergence(&lc, &modes, exec, out)
        }
        Command::Uniqueness(_) => experiments::uniqueness(&lc, out),
        Command::EnsembleMoments(_) => {
            let paths = lc.config.experiment.paths;
            experiments::ensemble_moments(&lc, paths, exec, out)
        }
        Command::Soak2d(_) => experiments::soak_2d(&lc, exec, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads_from_env();
    match dispatch(&cli.command) {
        Ok(report) => {
            for v in &report.verdicts {
                let tag = match (v.passed, v.soft) {
                    (true, _) => "PASS",
                    (false, true) => "WARN",
                    (false, false) => "FAIL",
                };
                println!("{tag} {}: {}", v.name, v.detail);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} finished in {:.1} s (config {})",
                report.experiment,
                report.runtime_seconds,
                &report.config_hash[..12]
            );
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
