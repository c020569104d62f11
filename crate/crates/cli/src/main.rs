mod args;
mod manifest;
mod report;
mod stages;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    let written = match &cli.command {
        Command::Synth(a) => stages::synth(a)?,
        Command::Validate(a) => {
            stages::validate(a)?;
            Vec::new()
        }
        Command::Segment(a) => stages::segment(a)?,
        Command::Featurize(a) => stages::featurize(a)?,
        Command::Rank(a) => stages::rank(a)?,
        Command::Histogram(a) => stages::histogram(a)?,
        Command::Train(a) => stages::train(a)?,
        Command::Evaluate(a) => stages::evaluate(a)?,
        Command::Report(a) => stages::report(a)?,
        Command::Pipeline(a) => stages::pipeline(a)?,
    };
    if !written.is_empty() {
        eprintln!("wrote {} file(s)", written.len());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
