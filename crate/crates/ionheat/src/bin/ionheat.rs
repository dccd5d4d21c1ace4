use clap::{Parser, Subcommand};
use ionheat::cli::{self, Experiment, Overrides};

#[derive(Parser)]
#[command(
    name = "ionheat",
    about = "Steady-state heat transport through trapped-ion Coulomb crystals",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find a gauge-fixed equilibrium configuration and classify its phase.
    Equilibrate(Overrides),
    /// Emit the damped normal-mode spectrum.
    Modes(Overrides),
    /// Compute the steady-state heat current, conductivity, and per-mode currents.
    Transport(Overrides),
    /// Sweep the ion number along a fixed-structure path.
    SweepLength(Overrides),
    /// Sweep the disorder strength at fixed ion number.
    SweepDisorder(Overrides),
    /// Emit the per-ion transverse temperature profile.
    Profile(Overrides),
    /// Scan the aspect ratio across the structural transition.
    ScanTransition(Overrides),
    /// Cross-check the residue formulas against direct frequency quadrature.
    OracleCheck(Overrides),
}

impl Command {
    fn split(self) -> (Experiment, Overrides) {
        match self {
            Command::Equilibrate(o) => (Experiment::Equilibrate, o),
            Command::Modes(o) => (Experiment::Modes, o),
            Command::Transport(o) => (Experiment::Transport, o),
            Command::SweepLength(o) => (Experiment::SweepLength, o),
            Command::SweepDisorder(o) => (Experiment::SweepDisorder, o),
            Command::Profile(o) => (Experiment::Profile, o),
            Command::ScanTransition(o) => (Experiment::ScanTransition, o),
            Command::OracleCheck(o) => (Experiment::OracleCheck, o),
        }
    }
}

fn main() {
    let args = Args::parse();
    let (experiment, overrides) = args.command.split();
    let result = cli::RunConfig::load(experiment, &overrides).and_then(|cfg| cli::run(&cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(cli::exit_code(&err));
        }
    }
}
