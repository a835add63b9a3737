use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowfast_cli::{commands, RunConfig};

#[derive(Parser)]
#[command(name = "slowfast", version, about = "Simulate and predict slow-fast systems with a semi-stable slow curve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system; writes trajectory.csv, events.csv, episodes.csv
    Simulate(Common),
    /// Build the C-trajectory; writes ctrajectory.csv
    Predict(Common),
    /// Simulation against prediction; writes hug.csv and, with `epsilons`, sweep.csv
    Compare(Common),
    /// Two-patch growth rate and inflation threshold; writes threshold.csv, period.csv
    Katriel(Common),
    /// Fan of runs from the axis halo in the magnified chart; writes fan.csv, exits.csv
    Magnify(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (fn(&RunConfig) -> _, _) = match cli.command {
        Command::Simulate(c) => (commands::simulate_cmd, c),
        Command::Predict(c) => (commands::predict_cmd, c),
        Command::Compare(c) => (commands::compare_cmd, c),
        Command::Katriel(c) => (commands::katriel_cmd, c),
        Command::Magnify(c) => (commands::magnify_cmd, c),
    };
    let cfg = RunConfig {
        scenario: common.scenario,
        out: common.out,
        svg: common.svg,
    };
    match run(&cfg) {
        Ok(files) => {
            for f in files {
                println!("{}", cfg.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
