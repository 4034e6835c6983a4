use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hartree_cli::{run, Command, Invocation, RunConfig, EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "hartree-lab", version, about = "Numerical lab for the radial energy-critical generalized Hartree equation")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; missing fields take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Sharp constant, ‖∇W‖², E(W) and the ground-state residual.
    Constants(Common),
    /// Eigenpair ±e₀, kernel certificate, coercivity and identity battery.
    Spectrum(Common),
    /// Exponential series and threshold initial data.
    BuildSpecial(Common),
    /// Time evolution with diagnostics and a verdict.
    Evolve(Common),
    /// Re-classify a stored trajectory.
    Classify(Common),
    /// Grid refinement study.
    ConvergenceStudy(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let (command, common) = match cli.command {
        Sub::Constants(c) => (Command::Constants, c),
        Sub::Spectrum(c) => (Command::Spectrum, c),
        Sub::BuildSpecial(c) => (Command::BuildSpecial, c),
        Sub::Evolve(c) => (Command::Evolve, c),
        Sub::Classify(c) => (Command::Classify, c),
        Sub::ConvergenceStudy(c) => (Command::ConvergenceStudy, c),
    };
    let config = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("hartree-lab: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let out = common.out.unwrap_or_else(|| config.output.dir.clone());
    let plots = common.plots || config.output.plots;
    let inv = Invocation { command, config, out, plots };
    match run(&inv) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::from(if outcome.pass { EXIT_OK } else { EXIT_TOLERANCE } as u8)
        }
        Err(e) => {
            eprintln!("hartree-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
