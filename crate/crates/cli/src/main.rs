//! `spxrefine`: refine coarse object proposal masks into pixel-precise masks
//! by classifying superpixels.
//!
//! Subcommands cover the full pipeline: `synth` generates a seeded dataset,
//! `segment` runs the superpixel segmenters, `train` fits the classifier and
//! projection, `refine` produces refined proposals, `eval` scores them, and
//! `inspect` renders overlays.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "spxrefine", version, about = "Superpixel-based proposal refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image into superpixels and write the label map
    Segment(commands::segment::Args),
    /// Generate a seeded synthetic dataset
    Synth(commands::synth::Args),
    /// Train the superpixel classifier on a dataset
    Train(commands::train::Args),
    /// Refine coarse proposals into pixel-precise proposals
    Refine(commands::refine::Args),
    /// Evaluate refined proposals against ground truth
    Eval(commands::eval::Args),
    /// Render proposal contours over an image
    Inspect(commands::inspect::Args),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(args) => commands::segment::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Refine(args) => commands::refine::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Inspect(args) => commands::inspect::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
