//! `clipgrounder score`: one reward breakdown per input trajectory line,
//! order-preserving, with failures embedded as error records.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use clipgrounder_core::exec;
use clipgrounder_core::jsonl::{decode_trajectory, SchemaMode};
use clipgrounder_core::rewards::{score_trajectory, RewardBreakdown, RewardConfig};

use crate::commands::{EXIT_OK, EXIT_PARTIAL};
use crate::io;

#[derive(Args)]
pub struct ScoreArgs {
    /// Trajectory JSONL input.
    #[arg(long)]
    pub input: PathBuf,
    /// Reward config JSON (keys: lambda, sigma, weights, matcher).
    #[arg(long)]
    pub reward_config: Option<PathBuf>,
    /// Output rewards JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Reject unknown fields in the trajectory schema.
    #[arg(long)]
    pub strict: bool,
    /// Parallel worker cap.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Serialize)]
struct ScoreRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    group_id: Option<String>,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

#[derive(Serialize)]
struct ErrorRecord {
    line: usize,
    error: String,
}

pub fn run(args: ScoreArgs) -> anyhow::Result<i32> {
    let cfg: RewardConfig = match &args.reward_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing reward config {}", path.display()))?
        }
        None => RewardConfig::default(),
    };
    cfg.validate().map_err(anyhow::Error::msg)?;
    let mode = if args.strict {
        SchemaMode::Strict
    } else {
        SchemaMode::Lenient
    };
    let lines = io::read_lines(&args.input)?;

    let results = exec::with_jobs(args.jobs, || {
        exec::map_batch(&lines, |line| {
            decode_trajectory(line, mode)
                .map_err(|e| e.to_string())
                .and_then(|t| {
                    score_trajectory(&t, &cfg)
                        .map(|breakdown| ScoreRecord {
                            group_id: t.group_id.clone(),
                            breakdown,
                        })
                        .map_err(|e| e.to_string())
                })
        })
    });

    let mut failures = 0usize;
    let out: Vec<String> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(record) => serde_json::to_string(&record).expect("record serializes"),
            Err(error) => {
                failures += 1;
                serde_json::to_string(&ErrorRecord { line: i + 1, error })
                    .expect("error record serializes")
            }
        })
        .collect();
    io::write_lines(&args.output, &out)?;
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}
