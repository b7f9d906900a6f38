//! `clipgrounder` — the command-line entry point for the harness.
//!
//! Exit codes: 0 success, 1 usage or IO failure, 2 partial per-record
//! failure (error records embedded in the output), 3 transport failure.

mod commands;
mod io;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "clipgrounder",
    version,
    about = "Agentic localize-clip-answer harness: score trajectories, run scripted rollouts, \
             mask SFT spans, curate data, evaluate by duration bucket, and export advantages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a trajectory JSONL file into per-trajectory reward breakdowns.
    Score(commands::score::ScoreArgs),
    /// Roll scripted or remote policies over a synthetic environment.
    Rollout(commands::rollout::RolloutArgs),
    /// Compute unified SFT supervision masks for pre-tokenized span files.
    Mask(commands::mask::MaskArgs),
    /// Run the two-step curation state machine over raw samples.
    Curate(commands::curate::CurateArgs),
    /// Duration-bucketed evaluation of predictions against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Group-normalize rewards into advantages.
    Advantages(commands::advantages::AdvantagesArgs),
}

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter("CLIPGROUNDER_LOG")
            .default_filter_or("warn"),
    )
    .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(args) => commands::score::run(args),
        Command::Rollout(args) => commands::rollout::run(args),
        Command::Mask(args) => commands::mask::run(args),
        Command::Curate(args) => commands::curate::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Advantages(args) => commands::advantages::run(args),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}
