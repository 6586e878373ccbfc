mod commands;
mod config;
mod svg;
mod util;

use clap::{Parser, Subcommand};
use landmark_maxent::error::Error;

use config::CommonFlags;

#[derive(Parser)]
#[command(
    name = "landmark-maxent",
    version,
    about = "Max-entropy models of 2D landmark displacement fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a dataset: moments, bootstrap errors, null-mode scan.
    Stats(CommonFlags),
    /// Fit the selected model and write it with its constraint basis.
    Fit(CommonFlags),
    /// Draw vectors from a fitted model into a CSV cohort.
    Sample(CommonFlags),
    /// Fit the model ladder on two cohorts and compare by auROC.
    Classify(CommonFlags),
    /// Geometric analysis of couplings: channels, trends, angle checks.
    Analyze(CommonFlags),
    /// Generate synthetic cohorts (fixture or planted two-class).
    Synth(CommonFlags),
    /// Re-render table and ROC figure from a classify report.
    Report(CommonFlags),
}

impl Command {
    fn dispatch(&self) -> landmark_maxent::error::Result<()> {
        let (name, flags, run): (_, _, fn(&config::RunConfig) -> _) = match self {
            Command::Stats(f) => ("stats", f, commands::stats::run),
            Command::Fit(f) => ("fit", f, commands::fit::run),
            Command::Sample(f) => ("sample", f, commands::sample::run),
            Command::Classify(f) => ("classify", f, commands::classify::run),
            Command::Analyze(f) => ("analyze", f, commands::analyze::run),
            Command::Synth(f) => ("synth", f, commands::synth::run),
            Command::Report(f) => ("report", f, commands::report::run),
        };
        let cfg = config::merge(name, flags)?;
        run(&cfg)
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = cli.command.dispatch() {
        eprintln!("error: {e}");
        let code = match e {
            Error::Io(_) => 1,
            Error::Parse { .. } | Error::Schema(_) => 2,
            Error::Precondition(_) => 3,
            Error::Numerical(_) => 4,
        };
        std::process::exit(code);
    }
}
